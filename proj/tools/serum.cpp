// serum: corpus generation, training, evaluation and benchmarking.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "serum/commands.hpp"

namespace {

struct Common {
    std::string config_path;
    std::string preset = "toy";
    std::uint64_t seed = 0;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON run config (preset, model, train)");
    cmd->add_option("--preset", c.preset, "toy or paper-default when no config file is given");
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--batch-size", c.batch_size, "override train.batch_size");
    cmd->add_option("--lr", c.learning_rate, "override train.learning_rate");
}

// flag > file > preset
serum::RunConfig resolve(const Common& c) {
    serum::RunConfig cfg;
    if (!c.config_path.empty()) {
        cfg = serum::load_run_config(c.config_path);
    } else {
        cfg.model = serum::ModelConfig::from_preset(c.preset);
        cfg.train = serum::TrainConfig::from_preset(c.preset);
    }
    if (c.batch_size) {
        cfg.train.batch_size = *c.batch_size;
    }
    if (c.learning_rate) {
        cfg.train.learning_rate = *c.learning_rate;
    }
    cfg.model.validate();
    return cfg;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"OCR-free document extraction: corpus, training, evaluation"};
    app.require_subcommand(1);

    Common gen_c, pre_c, fin_c, eval_c, infer_c, bench_c;

    auto* gen = app.add_subcommand("gen", "render a synthetic receipt corpus");
    add_common(gen, gen_c);
    std::size_t count = 0;
    std::string gen_out;
    gen->add_option("--count", count, "number of documents")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    auto* pre = app.add_subcommand("pretrain", "mixed-task pretraining");
    add_common(pre, pre_c);
    serum::TrainOptions pre_o;
    std::string pre_data, pre_out, pre_in, pre_report;
    pre->add_option("--data", pre_data, "dataset directory or annotations.jsonl")->required();
    pre->add_option("--steps", pre_o.steps, "optimisation steps")->required();
    pre->add_option("--out", pre_out, "output checkpoint")->required();
    pre->add_option("--ckpt", pre_in, "continue from this checkpoint");
    pre->add_option("--report", pre_report, "JSON-Lines run report");
    pre->add_option("--log-every", pre_o.log_every, "report every N steps");

    auto* fin = app.add_subcommand("finetune", "fine-tune for extraction");
    add_common(fin, fin_c);
    serum::TrainOptions fin_o;
    std::string fin_data, fin_out, fin_in, fin_report, fin_mode = "prompt";
    fin->add_option("--data", fin_data, "dataset directory or annotations.jsonl")->required();
    fin->add_option("--steps", fin_o.steps, "optimisation steps")->required();
    fin->add_option("--ckpt", fin_in, "input checkpoint")->required();
    fin->add_option("--out", fin_out, "output checkpoint")->required();
    fin->add_option("--mode", fin_mode, "total or prompt");
    fin->add_option("--report", fin_report, "JSON-Lines run report");
    fin->add_option("--log-every", fin_o.log_every, "report every N steps");

    auto* ev = app.add_subcommand("eval", "field F1 and TED accuracy over a dataset");
    add_common(ev, eval_c);
    serum::EvalOptions ev_o;
    std::string ev_ckpt, ev_data, ev_mode = "prompt", ev_report, ev_overlays;
    std::optional<double> ev_alpha;
    bool overlays = false;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset directory or annotations.jsonl")->required();
    ev->add_option("--mode", ev_mode, "total or prompt");
    ev->add_option("--alpha", ev_alpha, "token keep ratio (default 0.5 total, 0.1 prompt)");
    ev->add_option("--report", ev_report, "JSON-Lines run report");
    ev->add_flag("--overlays", overlays, "write score-mask overlay PNGs");
    ev->add_option("--overlay-dir", ev_overlays, "overlay directory (default overlays/)");

    auto* inf = app.add_subcommand("infer", "extract fields from one image");
    add_common(inf, infer_c);
    std::string inf_ckpt, inf_image, inf_mode = "prompt", inf_keys;
    std::optional<double> inf_alpha;
    inf->add_option("--ckpt", inf_ckpt, "checkpoint")->required();
    inf->add_option("--image", inf_image, "PNG image")->required();
    inf->add_option("--mode", inf_mode, "total or prompt");
    inf->add_option("--keys", inf_keys, "comma-separated keys for prompt mode");
    inf->add_option("--alpha", inf_alpha, "token keep ratio");

    auto* bench = app.add_subcommand("bench-alpha", "decode latency and F1 per keep ratio");
    add_common(bench, bench_c);
    serum::BenchOptions bench_o;
    std::string bench_ckpt, bench_data, bench_mode = "prompt", bench_alphas = "0.1,0.5,1.0",
                bench_report, bench_csv;
    std::size_t bench_limit = 0;
    bench->add_option("--ckpt", bench_ckpt, "checkpoint")->required();
    bench->add_option("--data", bench_data, "dataset directory or annotations.jsonl")->required();
    bench->add_option("--alphas", bench_alphas, "comma-separated keep ratios");
    bench->add_option("--mode", bench_mode, "total or prompt");
    bench->add_option("--repeats", bench_o.repeats, "timing rounds per sample");
    bench->add_option("--limit", bench_limit, "use at most this many samples");
    bench->add_option("--report", bench_report, "JSON-Lines run report");
    bench->add_option("--csv", bench_csv, "CSV table output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = resolve(gen_c);
            const auto manifest = serum::cmd_gen(cfg, count, gen_c.seed, gen_out);
            std::cout << "wrote " << manifest.sample_ids.size() << " documents to "
                      << manifest.annotation_path.string() << " (schema v"
                      << manifest.schema_version << ")\n";
        } else if (pre->parsed()) {
            const auto cfg = resolve(pre_c);
            pre_o.data = pre_data;
            pre_o.seed = pre_c.seed;
            pre_o.ckpt_out = pre_out;
            if (!pre_in.empty()) {
                pre_o.ckpt_in = pre_in;
            }
            if (!pre_report.empty()) {
                pre_o.report = pre_report;
            }
            const auto report = serum::cmd_pretrain(cfg, pre_o);
            if (!report.rows().empty()) {
                std::cout << report.rows().back().dump() << '\n';
            }
        } else if (fin->parsed()) {
            const auto cfg = resolve(fin_c);
            fin_o.data = fin_data;
            fin_o.seed = fin_c.seed;
            fin_o.ckpt_in = fin_in;
            fin_o.ckpt_out = fin_out;
            fin_o.mode = serum::parse_mode(fin_mode);
            if (!fin_report.empty()) {
                fin_o.report = fin_report;
            }
            const auto report = serum::cmd_finetune(cfg, fin_o);
            if (!report.rows().empty()) {
                std::cout << report.rows().back().dump() << '\n';
            }
        } else if (ev->parsed()) {
            const auto cfg = resolve(eval_c);
            ev_o.ckpt = ev_ckpt;
            ev_o.data = ev_data;
            ev_o.mode = serum::parse_mode(ev_mode);
            ev_o.alpha = ev_alpha;
            if (!ev_report.empty()) {
                ev_o.report = ev_report;
            }
            if (overlays || !ev_overlays.empty()) {
                ev_o.overlays = ev_overlays.empty() ? std::string("overlays") : ev_overlays;
            }
            const auto summary = serum::cmd_eval(cfg, ev_o);
            std::cout << "f1 " << summary.f1.f1 << " precision " << summary.f1.precision
                      << " recall " << summary.f1.recall << " ted_accuracy "
                      << summary.ted_accuracy << " samples " << summary.samples.size() << '\n';
        } else if (inf->parsed()) {
            const auto cfg = resolve(infer_c);
            const auto mode = serum::parse_mode(inf_mode);
            const auto keys = split(inf_keys, ',');
            std::cout << serum::cmd_infer(cfg, inf_ckpt, inf_image, mode, keys, inf_alpha).dump(2)
                      << '\n';
        } else if (bench->parsed()) {
            const auto cfg = resolve(bench_c);
            bench_o.ckpt = bench_ckpt;
            bench_o.data = bench_data;
            bench_o.mode = serum::parse_mode(bench_mode);
            for (const auto& a : split(bench_alphas, ',')) {
                bench_o.alphas.push_back(std::stod(a));
            }
            if (bench_limit > 0) {
                bench_o.limit = bench_limit;
            }
            if (!bench_report.empty()) {
                bench_o.report = bench_report;
            }
            if (!bench_csv.empty()) {
                bench_o.csv = bench_csv;
            }
            std::cout << "alpha,K,f1,mean_decode_ms\n";
            for (const auto& r : serum::cmd_bench_alpha(cfg, bench_o)) {
                std::cout << r.alpha << ',' << r.keep << ',' << r.f1 << ',' << r.mean_decode_ms << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "serum: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

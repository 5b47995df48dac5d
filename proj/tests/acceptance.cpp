#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "serum/checkpoint.hpp"
#include "serum/commands.hpp"
#include "serum/hungarian.hpp"
#include "serum/kv_tree.hpp"
#include "serum/losses.hpp"
#include "serum/metrics.hpp"
#include "serum/model.hpp"
#include "serum/query_decoder.hpp"
#include "serum/text_decoder.hpp"
#include "serum/token_merge.hpp"
#include "support.hpp"

using namespace serum;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A1: with alpha = 1 the merge pipeline returns every token weighted by its
// score and adds no background term.
Outcome merge_identity() {
    const auto start = Clock::now();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int64_t> length(1, 64), width(1, 16);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t l = length(rng), d = width(rng);
        torch::nn::Linear wv(torch::nn::LinearOptions(d, d).bias(false));
        wv->to(torch::kDouble);
        const auto z = torch::randn({l, d}, torch::kDouble);
        const auto s = torch::rand({l}, torch::kDouble);
        const auto ctx = merge_tokens(z, s, 1.0, wv);
        auto sorted = ctx.foreground_indices;
        std::sort(sorted.begin(), sorted.end());
        bool ok = ctx.keep == l && static_cast<int64_t>(sorted.size()) == l;
        for (int64_t i = 0; ok && i < l; ++i) {
            ok = sorted[static_cast<std::size_t>(i)] == i;
        }
        ok = ok && torch::equal(ctx.context,
                                (z * s.unsqueeze(1)).index_select(0, torch::tensor(ctx.foreground_indices)));
        mismatches += ok ? 0 : 1;
    }
    const double t = seconds_since(start);
    return {mismatches == 0 && t < 1.0, fmt("%d/100 exact, %.3f s (limit 1 s)", 100 - mismatches, t)};
}

// A2: Hungarian cost equals the brute-force permutation minimum.
Outcome hungarian_oracle() {
    const auto start = Clock::now();
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> dim(1, 7);
    std::uniform_real_distribution<double> real(-3.0, 7.0);
    std::uniform_int_distribution<int> integer(0, 5);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = dim(rng);
        const std::size_t m = trial % 2 == 0 ? n : std::uniform_int_distribution<std::size_t>(1, n)(rng);
        CostMatrix c(n, m);
        for (auto& v : c.values) {
            v = trial % 3 == 0 ? integer(rng) : real(rng);
        }
        if (hungarian_match(c).total_cost != serum::testing::brute_force_assignment(c)) {
            ++mismatches;
        }
    }
    const double t = seconds_since(start);
    return {mismatches == 0 && t < 30.0, fmt("%d/1000 exact, %.2f s (limit 30 s)", 1000 - mismatches, t)};
}

// A3: autograd against central finite differences in double precision.
Outcome gradient_checks() {
    const auto start = Clock::now();
    using serum::testing::gradient_error;
    torch::manual_seed(3);
    std::vector<std::pair<std::string, double>> errors;

    {
        auto pix = torch::randn({1, 2, 3, 4}, torch::kDouble).requires_grad_(true);
        auto e = torch::randn({1, 2, 4}, torch::kDouble).requires_grad_(true);
        const auto w = torch::randn({1, 2, 2, 3}, torch::kDouble);
        errors.emplace_back("predict_masks", gradient_error(
                                                 [&] { return (predict_masks(PixelEmbedding{pix}, e) * w).sum(); },
                                                 {pix, e}));
    }
    {
        torch::nn::Linear wv(torch::nn::LinearOptions(4, 4).bias(false));
        wv->to(torch::kDouble);
        auto z = torch::randn({6, 4}, torch::kDouble).requires_grad_(true);
        const auto valid = torch::ones({2}, torch::kBool);
        // Pooled scores at least 1e-3 apart so the top-K set is locally constant.
        torch::Tensor scores;
        for (;;) {
            scores = torch::rand({2, 4, 6}, torch::kDouble);
            const auto sorted = std::get<0>(pool_scores(scores, valid, 2).sort());
            if ((sorted.slice(0, 1) - sorted.slice(0, 0, -1)).min().item<double>() > 1e-3) {
                break;
            }
        }
        scores.requires_grad_(true);
        auto weight = wv->weight;
        const auto w = torch::randn({3, 4}, torch::kDouble);
        errors.emplace_back("pool-select-merge-fuse", gradient_error(
                                                          [&] {
                                                              const auto ctx = merge_tokens(
                                                                  z, pool_scores(scores, valid, 2), 0.5, wv);
                                                              return (ctx.context * w).sum();
                                                          },
                                                          {z, weight, scores}));
    }
    {
        auto l0 = torch::randn({3, 6}, torch::kDouble).requires_grad_(true);
        auto l1 = torch::randn({3, 6}, torch::kDouble).requires_grad_(true);
        auto cls = torch::randn({3, 2}, torch::kDouble).requires_grad_(true);
        const auto valid = torch::ones({3}, torch::kBool);
        const auto targets = (torch::rand({2, 6}, torch::kDouble) > 0.5).to(torch::kDouble);
        const auto fixed = matching_loss({l0.detach(), l1.detach()}, cls.detach(), valid, targets).assignments;
        errors.emplace_back("matching_loss", gradient_error(
                                                 [&] { return matching_loss({l0, l1}, cls, valid, targets, fixed).total; },
                                                 {l0, l1, cls}));
    }
    {
        auto cfg = serum::testing::tiny_config();
        cfg.embed_dim = 4;
        cfg.query_channel = 4;
        cfg.encoder_head_dim = 1;
        cfg.validate();
        torch::manual_seed(4);
        SerumModel model(cfg, make_vocabulary(cfg.charset, {}));
        model->to(torch::kDouble);
        auto td = model->text_decoder();
        MergedContext ctx;
        ctx.context = torch::randn({3, 4}, torch::kDouble).requires_grad_(true);
        ctx.foreground_indices = {5, 0, 2};
        ctx.keep = 3;
        auto rows = torch::randn({1, 4}, torch::kDouble).requires_grad_(true);
        auto head = model->output_head->weight;
        errors.emplace_back("teacher_forced_nll", gradient_error(
                                                      [&] {
                                                          const auto mem = td.build_memory({&ctx}, {rows});
                                                          return td.teacher_forced_nll(mem, {{4, 6, 5, Vocabulary::kEos}});
                                                      },
                                                      {ctx.context, rows, head}));
    }
    const double t = seconds_since(start);
    bool pass = t < 60.0;
    std::string detail;
    for (const auto& [name, err] : errors) {
        pass = pass && err < 1e-4;
        detail += fmt("%s %.1e, ", name.c_str(), err);
    }
    return {pass, detail + fmt("%.2f s (limit 60 s)", t)};
}

// A4: metric implementations against independent oracles.
Outcome metric_oracles() {
    const std::vector<std::string> keys{"company", "date", "total", "address", "item"};
    std::mt19937_64 rng(5);
    int ted_bad = 0;
    for (int compared = 0; compared < 200;) {
        const auto gt = serum::testing::random_tree(rng, keys, 6, 2, "abc");
        if (gt.empty()) {
            continue;
        }
        const auto pred = serum::testing::random_tree(rng, keys, 6, 2, "abc");
        const double d = serum::testing::oracle_tree_distance(pred, gt);
        const double expected = std::max(0.0, 1.0 - d / serum::testing::oracle_tree_distance({}, gt));
        const double zs = tree_edit_distance(to_labeled_tree(pred), to_labeled_tree(gt));
        if (std::abs(zs - d) > 1e-12 || std::abs(ted_accuracy(pred, gt) - expected) > 1e-12) {
            ++ted_bad;
        }
        ++compared;
    }

    std::uniform_int_distribution<int> len(0, 10);
    const std::string alphabet = "abAB c1";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    auto draw = [&] {
        std::string s;
        for (int i = len(rng); i > 0; --i) {
            s.push_back(alphabet[pick(rng)]);
        }
        return s;
    };
    int anls_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = draw(), b = draw();
        if (std::abs(anls(a, {b}) - serum::testing::oracle_anls(a, {b})) > 1e-9) {
            ++anls_bad;
        }
    }

    Vocabulary vocab(default_charset());
    for (const auto& k : keys) {
        vocab.register_key(k);
    }
    int trip_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto tree = serum::testing::random_tree(rng, keys, 14, 3, "09.ab X");
        const auto parsed = parse_total(vocab, serialize_total(vocab, tree));
        if (parsed.malformed || !(parsed.tree == tree)) {
            ++trip_bad;
        }
    }
    return {ted_bad + anls_bad + trip_bad == 0,
            fmt("ted %d/200, anls %d/500, round trip %d/500", 200 - ted_bad, 500 - anls_bad, 500 - trip_bad)};
}

/// Toy pretrain and fine-tune shared by A5, A6 and A7.
struct ToyRun {
    fs::path dir;
    RunConfig config;
    fs::path init_ckpt, pretrain_ckpt, finetune_ckpt;
    std::vector<DocumentSample> held_out;
    double pretrain_s = 0.0, finetune_s = 0.0;
};

constexpr std::uint64_t kToySeed = 2024;

ToyRun& toy_run(const fs::path& work) {
    static std::optional<ToyRun> run;
    if (run) {
        return *run;
    }
    ToyRun r;
    r.dir = work / "toy";
    fs::remove_all(r.dir);
    r.config.model = ModelConfig::toy();
    r.config.train = TrainConfig::toy();
    cmd_gen(r.config, 32, kToySeed, r.dir / "train");
    cmd_gen(r.config, 50, kToySeed + 1, r.dir / "held_out");
    r.held_out = load_samples_strict(annotation_file(r.dir / "held_out"), r.config.model);

    TrainOptions opts;
    opts.data = r.dir / "train";
    opts.seed = kToySeed;
    opts.log_every = 100;
    opts.steps = 0;
    r.init_ckpt = opts.ckpt_out = r.dir / "init.pt";
    cmd_pretrain(r.config, opts);

    auto start = Clock::now();
    opts.steps = 2000;
    r.pretrain_ckpt = opts.ckpt_out = r.dir / "pretrain.pt";
    opts.report = r.dir / "pretrain.jsonl";
    cmd_pretrain(r.config, opts);
    r.pretrain_s = seconds_since(start);

    start = Clock::now();
    opts.ckpt_in = r.pretrain_ckpt;
    r.finetune_ckpt = opts.ckpt_out = r.dir / "finetune.pt";
    opts.report = r.dir / "finetune.jsonl";
    opts.mode = FinetuneMode::Prompt;
    cmd_finetune(r.config, opts);
    r.finetune_s = seconds_since(start);
    run = std::move(r);
    return *run;
}

// A5: held-in extraction after pretraining and prompt fine-tuning.
Outcome overfit(const fs::path& work) {
    auto& run = toy_run(work);
    EvalOptions ev;
    ev.ckpt = run.finetune_ckpt;
    ev.data = run.dir / "train";
    ev.mode = FinetuneMode::Prompt;
    ev.alpha = 0.1;
    ev.report = run.dir / "eval_train.jsonl";
    const auto summary = cmd_eval(run.config, ev);
    return {summary.f1.f1 >= 0.95 && summary.ted_accuracy >= 0.95,
            fmt("F1 %.4f, TED accuracy %.4f (need 0.95), train %.0f s + %.0f s", summary.f1.f1,
                summary.ted_accuracy, run.pretrain_s, run.finetune_s)};
}

// A6: decode time does not grow as alpha shrinks; K is exact.
Outcome compute_monotonicity(const fs::path& work) {
    auto& run = toy_run(work);
    auto model = load_checkpoint(run.finetune_ckpt, run.config.model).model;
    model->eval();
    const auto rows = bench_alpha(model, run.held_out, {1.0, 0.5, 0.1}, FinetuneMode::Prompt, 3);
    const int64_t l = run.config.model.num_tokens();
    bool pass = rows.size() == 3;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto expected_k = std::max<int64_t>(1, std::llround(rows[i].alpha * static_cast<double>(l)));
        pass = pass && rows[i].keep == expected_k;
        if (i > 0) {
            pass = pass && rows[i].mean_decode_ms <= rows[i - 1].mean_decode_ms;
        }
        detail += fmt("alpha %.1f K %lld %.2f ms; ", rows[i].alpha, static_cast<long long>(rows[i].keep),
                      rows[i].mean_decode_ms);
    }
    return {pass, detail + "50 held-out samples"};
}

double mean_region_iou(SerumModel& model, const std::vector<DocumentSample>& samples) {
    model->eval();
    double sum = 0.0;
    int n = 0;
    for (const auto& s : samples) {
        if (const auto v = region_iou(model, s)) {
            sum += *v;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / n;
}

// A7: segmentation pretraining lifts region IoU well above initialisation.
Outcome pretraining_effect(const fs::path& work) {
    auto& run = toy_run(work);
    auto init = load_checkpoint(run.init_ckpt, run.config.model).model;
    auto trained = load_checkpoint(run.pretrain_ckpt, run.config.model).model;
    const double base = mean_region_iou(init, run.held_out);
    const double iou = mean_region_iou(trained, run.held_out);
    return {iou >= 0.4 && iou >= 4.0 * base,
            fmt("IoU %.4f vs untrained %.4f (need >= 0.4 and >= 4x)", iou, base)};
}

nlohmann::ordered_json strip_timing(nlohmann::ordered_json row) {
    row.erase("mean_decode_ms");
    return row;
}

std::string untimed(const fs::path& report) {
    std::ifstream in(report);
    std::string line, out;
    while (std::getline(in, line)) {
        out += strip_timing(nlohmann::ordered_json::parse(line)).dump() + "\n";
    }
    return out;
}

// A8: causal decoding and bitwise reproducible runs.
Outcome causality_and_determinism(const fs::path& work) {
    const auto cfg = serum::testing::tiny_config();
    torch::manual_seed(8);
    SerumModel model(cfg, make_vocabulary(cfg.charset, {}));
    auto td = model->text_decoder();
    std::mt19937_64 rng(8);
    const auto v = static_cast<int64_t>(model->vocab().size());
    std::uniform_int_distribution<int64_t> tok(4, v - 1);
    int causal_bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        torch::NoGradGuard no_grad;
        MergedContext ctx;
        const int64_t k = 1 + trial % 6;
        ctx.context = torch::randn({k, cfg.embed_dim});
        for (int64_t i = 0; i < k; ++i) {
            ctx.foreground_indices.push_back(i);
        }
        ctx.keep = k;
        const auto mem = td.build_memory({&ctx}, {torch::randn({1, cfg.embed_dim})});
        const int64_t t = 2 + trial % (cfg.max_decode_len - 2);
        std::vector<int64_t> ids{Vocabulary::kBos};
        for (int64_t i = 1; i < t; ++i) {
            ids.push_back(tok(rng));
        }
        const int64_t cut = std::uniform_int_distribution<int64_t>(1, t - 1)(rng);
        auto changed = ids;
        for (int64_t i = cut; i < t; ++i) {
            changed[static_cast<std::size_t>(i)] = tok(rng);
        }
        const auto a = td.logits(mem, torch::tensor(ids).unsqueeze(0));
        const auto b = td.logits(mem, torch::tensor(changed).unsqueeze(0));
        bool ok = torch::equal(a.slice(1, 0, cut), b.slice(1, 0, cut));
        auto state = td.start(mem);
        for (int64_t i = 0; ok && i < t; ++i) {
            if (i > 0) {
                state.ids[0].push_back(static_cast<TokenId>(ids[static_cast<std::size_t>(i)]));
            }
            ok = torch::allclose(td.decode_step(state)[0], a[0][i], 1e-5, 1e-5);
        }
        causal_bad += ok ? 0 : 1;
    }

    RunConfig rc;
    rc.model = ModelConfig::toy();
    rc.train = TrainConfig::toy();
    const auto dir = work / "determinism";
    fs::remove_all(dir);
    std::vector<std::string> differing;
    auto run_all = [&](const fs::path& out) {
        cmd_gen(rc, 4, 11, out / "data");
        TrainOptions opts;
        opts.data = out / "data";
        opts.seed = 11;
        opts.steps = 6;
        opts.ckpt_out = out / "pre.pt";
        opts.report = out / "pretrain.jsonl";
        cmd_pretrain(rc, opts);
        opts.ckpt_in = out / "pre.pt";
        opts.steps = 4;
        for (auto mode : {FinetuneMode::Prompt, FinetuneMode::Total}) {
            opts.mode = mode;
            opts.ckpt_out = out / (std::string("ft_") + mode_name(mode) + ".pt");
            opts.report = out / (std::string("finetune_") + mode_name(mode) + ".jsonl");
            cmd_finetune(rc, opts);
            EvalOptions ev;
            ev.ckpt = opts.ckpt_out;
            ev.data = out / "data";
            ev.mode = mode;
            ev.report = out / (std::string("eval_") + mode_name(mode) + ".jsonl");
            cmd_eval(rc, ev);
        }
        BenchOptions b;
        b.ckpt = out / "ft_prompt.pt";
        b.data = out / "data";
        b.alphas = {1.0, 0.1};
        b.repeats = 1;
        b.report = out / "bench.jsonl";
        cmd_bench_alpha(rc, b);
    };
    run_all(dir / "a");
    run_all(dir / "b");
    for (const char* name : {"data/annotations.jsonl", "data/manifest.json", "pretrain.jsonl",
                             "finetune_prompt.jsonl", "finetune_total.jsonl", "eval_prompt.jsonl",
                             "eval_total.jsonl"}) {
        if (slurp(dir / "a" / name) != slurp(dir / "b" / name) || slurp(dir / "a" / name).empty()) {
            differing.emplace_back(name);
        }
    }
    if (untimed(dir / "a" / "bench.jsonl") != untimed(dir / "b" / "bench.jsonl")) {
        differing.emplace_back("bench.jsonl");
    }
    std::string detail = fmt("causal %d/100, ", 100 - causal_bad);
    detail += differing.empty() ? std::string("all reports identical") : "differing:";
    for (const auto& d : differing) {
        detail += " " + d;
    }
    return {causal_bad == 0 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks A1-A8"};
    std::vector<std::string> only;
    fs::path work = fs::temp_directory_path() / "serum_acceptance";
    app.add_option("criteria", only, "Subset to run, e.g. A1 A4");
    app.add_option("--work", work, "Scratch directory for datasets and checkpoints");
    CLI11_PARSE(app, argc, argv);

    torch::set_num_threads(1);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"A1", merge_identity},
        {"A2", hungarian_oracle},
        {"A3", gradient_checks},
        {"A4", metric_oracles},
        {"A5", [&] { return overfit(work); }},
        {"A6", [&] { return compute_monotonicity(work); }},
        {"A7", [&] { return pretraining_effect(work); }},
        {"A8", [&] { return causality_and_determinism(work); }},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        failed += out.pass ? 0 : 1;
        std::cout << name << (out.pass ? " PASS " : " FAIL ") << out.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}

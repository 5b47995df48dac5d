#include "serum/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>

#include "serum/checkpoint.hpp"
#include "serum/kv_tree.hpp"

namespace serum {

RunReport::RunReport(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::trunc);
    if (!out_) {
        throw std::runtime_error("cannot write report " + path.string());
    }
}

void RunReport::append(nlohmann::ordered_json row) {
    nlohmann::ordered_json full;
    full["seq"] = seq_++;
    for (auto& [key, value] : row.items()) {
        full[key] = value;
    }
    if (out_.is_open()) {
        out_ << full.dump() << '\n';
        out_.flush();
    }
    rows_.push_back(std::move(full));
}

std::filesystem::path annotation_file(const std::filesystem::path& data) {
    if (std::filesystem::is_directory(data)) {
        return data / "annotations.jsonl";
    }
    return data;
}

Manifest cmd_gen(const RunConfig& cfg, std::size_t count, std::uint64_t seed,
                 const std::filesystem::path& out_dir) {
    return write_dataset(make_specs(count, seed, cfg.model), out_dir);
}

namespace {

std::vector<DocumentSample> load_dataset(const std::filesystem::path& data, const ModelConfig& cfg) {
    return load_samples_strict(annotation_file(data), cfg);
}

void collect_keys(const KvTree& tree, std::set<std::string>& keys) {
    for (const auto& node : tree) {
        keys.insert(node.key);
        if (!node.is_leaf()) {
            collect_keys(node.children(), keys);
        }
    }
}

std::vector<std::string> dataset_keys(const std::vector<DocumentSample>& samples) {
    std::vector<std::string> keys(kReceiptSchema.begin(), kReceiptSchema.end());
    std::set<std::string> seen;
    for (const auto& s : samples) {
        collect_keys(s.kv_ground_truth, seen);
    }
    for (const auto& k : seen) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            keys.push_back(k);
        }
    }
    return keys;
}

std::vector<const DocumentSample*> gather(const std::vector<DocumentSample>& samples,
                                          const std::vector<std::size_t>& idx) {
    std::vector<const DocumentSample*> out;
    for (auto i : idx) {
        out.push_back(&samples[i]);
    }
    return out;
}

nlohmann::ordered_json loss_row(std::int64_t step, const LossReport& r, double lr, double alpha) {
    nlohmann::ordered_json row;
    row["step"] = step;
    row["l_match"] = r.l_match;
    row["l_decoder"] = r.l_decoder;
    row["l_text"] = r.l_text;
    row["l_total"] = r.l_total;
    row["lr"] = lr;
    row["alpha"] = alpha;
    return row;
}

RunReport open_report(const std::optional<std::filesystem::path>& path) {
    return path ? RunReport(*path) : RunReport();
}

void train_loop(Trainer& trainer, const std::vector<DocumentSample>& samples, const TrainOptions& opts,
                RunReport& report, const std::function<LossReport(const std::vector<const DocumentSample*>&)>& step) {
    SerumModel& model = trainer.model();
    const int every = std::max(1, opts.log_every);
    // Parameters whose loss was last seen finite, restored on a non-finite loss.
    std::vector<torch::Tensor> good;
    std::int64_t good_step = trainer.step();
    for (std::int64_t i = 0; i < opts.steps; ++i) {
        const auto batch = gather(samples, trainer.next_batch());
        const double lr = trainer.learning_rate();
        std::vector<torch::Tensor> before;
        for (const auto& p : model->parameters()) {
            before.push_back(p.detach().clone());
        }
        const std::int64_t before_step = trainer.step();
        LossReport r;
        try {
            r = step(batch);
        } catch (const NonFiniteLoss&) {
            if (!good.empty()) {
                torch::NoGradGuard no_grad;
                auto params = model->parameters();
                for (std::size_t k = 0; k < params.size(); ++k) {
                    params[k].copy_(good[k]);
                }
            }
            save_checkpoint(opts.ckpt_out, model, nullptr, good.empty() ? before_step : good_step);
            throw;
        }
        good = std::move(before);
        good_step = before_step;
        if (i % every == 0 || i + 1 == opts.steps) {
            report.append(loss_row(trainer.step(), r, lr, trainer.last_alpha()));
        }
    }
    save_checkpoint(opts.ckpt_out, model, &trainer.optimizer(), trainer.step());
}

double default_alpha(const RunConfig& cfg, FinetuneMode mode) {
    return mode == FinetuneMode::Total ? cfg.train.alpha_total : cfg.train.alpha_prompt;
}

ExtractionResult extract(SerumModel& model, const DocumentSample& sample, FinetuneMode mode,
                         double alpha) {
    if (mode == FinetuneMode::Total) {
        return total_extract(model, sample.image, alpha);
    }
    std::vector<std::string> keys;
    for (const auto& [path, value] : kv_flatten(sample.kv_ground_truth)) {
        if (std::find(keys.begin(), keys.end(), path) == keys.end()) {
            keys.push_back(path);
        }
    }
    if (keys.empty()) {
        return {};
    }
    return prompt_extract(model, sample.image, keys, alpha);
}

SamplePrediction score_sample(const DocumentSample& sample, const ExtractionResult& result) {
    SamplePrediction p;
    p.sample_id = sample.sample_id;
    p.prediction = result.tree;
    p.ground_truth = sample.kv_ground_truth;
    p.counts = field_counts(p.prediction, p.ground_truth);
    p.ted_accuracy = p.ground_truth.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : ted_accuracy(p.prediction, p.ground_truth);
    p.keep = result.keep;
    p.decode_ms = result.decode_ms;
    return p;
}

}  // namespace

RunReport cmd_pretrain(const RunConfig& cfg, const TrainOptions& opts) {
    torch::manual_seed(opts.seed);
    const auto samples = load_dataset(opts.data, cfg.model);
    SerumModel model{nullptr};
    if (opts.ckpt_in) {
        model = load_checkpoint(*opts.ckpt_in, cfg.model).model;
    } else {
        model = SerumModel(cfg.model, make_vocabulary(cfg.model.charset, dataset_keys(samples)));
    }
    Trainer trainer(model, cfg.train, samples.size(), opts.seed);
    RunReport report = open_report(opts.report);
    train_loop(trainer, samples, opts, report,
               [&](const auto& batch) { return trainer.pretrain_step(batch); });
    return report;
}

RunReport cmd_finetune(const RunConfig& cfg, const TrainOptions& opts) {
    if (!opts.ckpt_in) {
        throw std::invalid_argument("fine-tuning needs an input checkpoint");
    }
    torch::manual_seed(opts.seed);
    const auto samples = load_dataset(opts.data, cfg.model);
    auto model = load_checkpoint(*opts.ckpt_in, cfg.model).model;
    Trainer trainer(model, cfg.train, samples.size(), opts.seed);
    RunReport report = open_report(opts.report);
    train_loop(trainer, samples, opts, report,
               [&](const auto& batch) { return trainer.finetune_step(batch, opts.mode); });
    return report;
}

EvalSummary summarize(std::vector<SamplePrediction> samples) {
    EvalSummary out;
    FieldCounts total;
    double ted = 0.0;
    std::size_t ted_n = 0;
    for (const auto& s : samples) {
        total += s.counts;
        if (!std::isnan(s.ted_accuracy)) {
            ted += s.ted_accuracy;
            ++ted_n;
        }
    }
    out.f1 = f1_from_counts(total);
    out.ted_accuracy = ted_n == 0 ? 0.0 : ted / static_cast<double>(ted_n);
    out.samples = std::move(samples);
    return out;
}

EvalSummary evaluate(SerumModel& model, const std::vector<DocumentSample>& samples,
                     FinetuneMode mode, double alpha) {
    model->eval();
    std::vector<SamplePrediction> preds;
    for (const auto& sample : samples) {
        preds.push_back(score_sample(sample, extract(model, sample, mode, alpha)));
    }
    return summarize(std::move(preds));
}

double matched_mask_iou(const torch::Tensor& predicted, const torch::Tensor& targets) {
    if (targets.size(0) == 0) {
        throw std::invalid_argument("matched_mask_iou needs at least one target");
    }
    const auto pred = predicted.to(torch::kDouble);
    const auto gt = targets.to(torch::kDouble);
    const auto inter = torch::matmul(pred, gt.t());
    const auto uni = pred.sum(1, true) + gt.sum(1).unsqueeze(0) - inter;
    const auto iou = torch::where(uni > 0, inter / uni.clamp_min(1.0), torch::zeros_like(inter)).contiguous();

    const auto n = static_cast<std::size_t>(iou.size(0));
    const auto m = static_cast<std::size_t>(iou.size(1));
    const double* v = iou.data_ptr<double>();
    // Transposed when targets outnumber predictions so that every prediction is matched.
    const bool by_prediction = m > n;
    CostMatrix cost(by_prediction ? m : n, by_prediction ? n : m);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t t = 0; t < m; ++t) {
            (by_prediction ? cost.at(t, q) : cost.at(q, t)) = 1.0 - v[q * m + t];
        }
    }
    double sum = 0.0;
    for (const auto& [r, c] : hungarian_match(cost).pairs) {
        sum += 1.0 - cost.at(r, c);
    }
    return sum / static_cast<double>(m);
}

std::optional<double> region_iou(SerumModel& model, const DocumentSample& sample) {
    if (sample.regions.empty()) {
        return std::nullopt;
    }
    torch::NoGradGuard no_grad;
    const auto& cfg = model->config();
    const int rows = cfg.pixel_height();
    const int cols = cfg.pixel_width();
    const auto fwd = run_visual(model, image_to_tensor(sample.image), {{}});
    std::vector<torch::Tensor> gt;
    for (const auto& region : sample.regions) {
        gt.push_back(mask_tensor(region.render_mask(rows, cols, sample.image.height, sample.image.width)));
    }
    return matched_mask_iou(fwd.bundle.scores[0].gt(0.5).flatten(1), torch::stack(gt));
}

EvalSummary cmd_eval(const RunConfig& cfg, const EvalOptions& opts) {
    auto model = load_checkpoint(opts.ckpt, cfg.model).model;
    model->eval();
    const auto samples = load_dataset(opts.data, model->config());
    const double alpha = opts.alpha.value_or(default_alpha(cfg, opts.mode));
    if (opts.overlays) {
        std::filesystem::create_directories(*opts.overlays);
    }
    std::vector<SamplePrediction> preds;
    for (const auto& sample : samples) {
        const auto result = extract(model, sample, opts.mode, alpha);
        preds.push_back(score_sample(sample, result));
        if (opts.overlays && result.scores.defined()) {
            write_png(*opts.overlays / (sample.sample_id + ".png"),
                      render_overlay(sample, result, model->config()));
        }
    }
    auto summary = summarize(std::move(preds));
    RunReport report = open_report(opts.report);
    for (const auto& p : summary.samples) {
        nlohmann::ordered_json row;
        row["sample"] = p.sample_id;
        row["prediction"] = kv_to_json(p.prediction);
        row["ground_truth"] = kv_to_json(p.ground_truth);
        row["matched"] = p.counts.matched;
        row["predicted"] = p.counts.predicted;
        row["gt_fields"] = p.counts.ground_truth;
        if (!std::isnan(p.ted_accuracy)) {
            row["ted_accuracy"] = p.ted_accuracy;
        }
        row["K"] = p.keep;
        report.append(std::move(row));
    }
    nlohmann::ordered_json total;
    total["summary"] = mode_name(opts.mode);
    total["alpha"] = alpha;
    total["precision"] = summary.f1.precision;
    total["recall"] = summary.f1.recall;
    total["f1"] = summary.f1.f1;
    total["ted_accuracy"] = summary.ted_accuracy;
    report.append(std::move(total));
    return summary;
}

nlohmann::ordered_json cmd_infer(const RunConfig& cfg, const std::filesystem::path& ckpt,
                                 const std::filesystem::path& image, FinetuneMode mode,
                                 const std::vector<std::string>& keys, std::optional<double> alpha) {
    auto model = load_checkpoint(ckpt, cfg.model).model;
    model->eval();
    const auto& mc = model->config();
    Image fitted;
    fit_image(read_png(image), mc.image_height, mc.image_width, mc.image_channels, fitted);
    const double a = alpha.value_or(default_alpha(cfg, mode));
    const auto result = mode == FinetuneMode::Total ? total_extract(model, fitted, a)
                                                    : prompt_extract(model, fitted, keys, a);
    return kv_to_json(result.tree);
}

std::vector<BenchRow> bench_alpha(SerumModel& model, const std::vector<DocumentSample>& samples,
                                  const std::vector<double>& alphas, FinetuneMode mode, int repeats) {
    if (samples.empty() || alphas.empty()) {
        throw std::invalid_argument("bench needs samples and alphas");
    }
    for (double a : alphas) {
        if (!(a > 0.0 && a <= 1.0)) {
            throw std::invalid_argument("bench alpha " + std::to_string(a) + " outside (0, 1]");
        }
    }
    model->eval();
    const std::size_t n = samples.size();
    const std::size_t na = alphas.size();
    std::vector<std::vector<double>> best(na, std::vector<double>(n, std::numeric_limits<double>::infinity()));
    std::vector<std::vector<SamplePrediction>> preds(na);
    extract(model, samples.front(), mode, alphas.front());  // warm-up
    for (std::size_t a = 0; a < na; ++a) {
        preds[a].resize(n);
    }
    // Alphas interleaved per sample so that slow drift of the machine hits
    // every alpha alike; the order rotates between samples and rounds.
    for (int r = 0; r < std::max(1, repeats); ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < na; ++j) {
                const std::size_t a = (j + i + static_cast<std::size_t>(r)) % na;
                const auto result = extract(model, samples[i], mode, alphas[a]);
                best[a][i] = std::min(best[a][i], result.decode_ms);
                if (r == 0) {
                    preds[a][i] = score_sample(samples[i], result);
                }
            }
        }
    }
    std::vector<BenchRow> rows;
    for (std::size_t a = 0; a < na; ++a) {
        BenchRow row;
        row.alpha = alphas[a];
        row.keep = preds[a].front().keep;
        double sum = 0.0;
        for (double ms : best[a]) {
            sum += ms;
        }
        row.mean_decode_ms = sum / static_cast<double>(n);
        row.f1 = summarize(preds[a]).f1.f1;
        rows.push_back(row);
    }
    return rows;
}

std::vector<BenchRow> cmd_bench_alpha(const RunConfig& cfg, const BenchOptions& opts) {
    auto model = load_checkpoint(opts.ckpt, cfg.model).model;
    auto samples = load_dataset(opts.data, model->config());
    if (opts.limit && samples.size() > *opts.limit) {
        samples.resize(*opts.limit);
    }
    const auto rows = bench_alpha(model, samples, opts.alphas, opts.mode, opts.repeats);
    RunReport report = open_report(opts.report);
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["alpha"] = r.alpha;
        row["K"] = r.keep;
        row["f1"] = r.f1;
        row["mean_decode_ms"] = r.mean_decode_ms;
        report.append(std::move(row));
    }
    if (opts.csv) {
        write_bench_csv(*opts.csv, rows);
    }
    return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "alpha,K,f1,mean_decode_ms\n";
    for (const auto& r : rows) {
        out << r.alpha << ',' << r.keep << ',' << r.f1 << ',' << r.mean_decode_ms << '\n';
    }
}

Image render_overlay(const DocumentSample& sample, const ExtractionResult& result,
                     const ModelConfig& config) {
    const Image& src = sample.image;
    Image out(src.height, src.width, 3);
    const auto heat = std::get<0>(result.scores.max(0)).to(torch::kFloat).contiguous();
    const auto acc = heat.accessor<float, 2>();
    const int sh = static_cast<int>(heat.size(0));
    const int sw = static_cast<int>(heat.size(1));
    for (int r = 0; r < src.height; ++r) {
        for (int c = 0; c < src.width; ++c) {
            float gray = 0.0f;
            for (int ch = 0; ch < src.channels; ++ch) {
                gray += src.at(r, c, ch);
            }
            gray /= static_cast<float>(src.channels);
            const float h = acc[r * sh / src.height][c * sw / src.width];
            out.at(r, c, 0) = 0.5f * gray + 0.5f * h;
            out.at(r, c, 1) = 0.5f * gray;
            out.at(r, c, 2) = 0.5f * gray + 0.5f * (1.0f - h);
        }
    }
    const int cell_h = src.height / config.grid_height();
    const int cell_w = src.width / config.grid_width();
    for (auto idx : result.foreground_indices) {
        const int top = static_cast<int>(idx / config.grid_width()) * cell_h;
        const int left = static_cast<int>(idx % config.grid_width()) * cell_w;
        for (int k = 0; k < cell_w; ++k) {
            for (int row : {top, top + cell_h - 1}) {
                out.at(row, left + k, 0) = 0.0f;
                out.at(row, left + k, 1) = 1.0f;
                out.at(row, left + k, 2) = 0.0f;
            }
        }
        for (int k = 0; k < cell_h; ++k) {
            for (int col : {left, left + cell_w - 1}) {
                out.at(top + k, col, 0) = 0.0f;
                out.at(top + k, col, 1) = 1.0f;
                out.at(top + k, col, 2) = 0.0f;
            }
        }
    }
    return out;
}

}  // namespace serum

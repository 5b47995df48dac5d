#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serum/config.hpp"
#include "serum/document.hpp"
#include "serum/metrics.hpp"
#include "serum/model.hpp"
#include "serum/synthetic_corpus.hpp"
#include "serum/training.hpp"

namespace serum {

/// Append-only JSON-Lines run report. Rows carry a monotonically increasing
/// "seq" field so that reruns with the same seed produce identical files.
class RunReport {
public:
    RunReport() = default;
    explicit RunReport(const std::filesystem::path& path);

    void append(nlohmann::ordered_json row);
    const std::vector<nlohmann::ordered_json>& rows() const { return rows_; }

private:
    std::ofstream out_;
    std::vector<nlohmann::ordered_json> rows_;
    std::int64_t seq_ = 0;
};

/// Annotation file of a dataset given either the file itself or the
/// directory written by cmd_gen.
std::filesystem::path annotation_file(const std::filesystem::path& data);

Manifest cmd_gen(const RunConfig& cfg, std::size_t count, std::uint64_t seed,
                 const std::filesystem::path& out_dir);

struct TrainOptions {
    std::filesystem::path data;
    std::int64_t steps = 0;
    std::uint64_t seed = 0;
    std::filesystem::path ckpt_out;
    std::optional<std::filesystem::path> ckpt_in;
    std::optional<std::filesystem::path> report;
    FinetuneMode mode = FinetuneMode::Prompt;
    int log_every = 1;
};

/// Mixed-task pretraining from scratch (or from ckpt_in). On a non-finite
/// loss the last good parameters are saved and the NonFiniteLoss rethrown.
RunReport cmd_pretrain(const RunConfig& cfg, const TrainOptions& opts);
RunReport cmd_finetune(const RunConfig& cfg, const TrainOptions& opts);

struct SamplePrediction {
    std::string sample_id;
    KvTree prediction;
    KvTree ground_truth;
    FieldCounts counts;
    double ted_accuracy = 0.0;
    std::int64_t keep = 0;
    double decode_ms = 0.0;
};

struct EvalSummary {
    F1Score f1;
    double ted_accuracy = 0.0;
    std::vector<SamplePrediction> samples;
};

/// Runs extraction over samples. Prompt mode asks for every ground-truth key.
EvalSummary evaluate(SerumModel& model, const std::vector<DocumentSample>& samples,
                     FinetuneMode mode, double alpha);

/// Micro F1 and mean TED accuracy from per-sample predictions.
EvalSummary summarize(std::vector<SamplePrediction> samples);

/// Binary masks (N, P) and (M, P) matched one-to-one by minimum 1 - IoU; the
/// matched IoUs averaged over the M targets, an unmatched target counting 0.
double matched_mask_iou(const torch::Tensor& predicted, const torch::Tensor& targets);

/// matched_mask_iou of the learnable query slots (scores > 0.5) against the
/// page's text regions. Returns nullopt for a page without regions.
std::optional<double> region_iou(SerumModel& model, const DocumentSample& sample);

struct EvalOptions {
    std::filesystem::path ckpt;
    std::filesystem::path data;
    FinetuneMode mode = FinetuneMode::Prompt;
    std::optional<double> alpha;  // defaults per mode from the train config
    std::optional<std::filesystem::path> report;
    std::optional<std::filesystem::path> overlays;
};

EvalSummary cmd_eval(const RunConfig& cfg, const EvalOptions& opts);

/// Extraction on a single PNG; returns the predicted tree as JSON.
nlohmann::ordered_json cmd_infer(const RunConfig& cfg, const std::filesystem::path& ckpt,
                                 const std::filesystem::path& image, FinetuneMode mode,
                                 const std::vector<std::string>& keys, std::optional<double> alpha);

struct BenchRow {
    double alpha = 0.0;
    std::int64_t keep = 0;
    double f1 = 0.0;
    double mean_decode_ms = 0.0;
};

struct BenchOptions {
    std::filesystem::path ckpt;
    std::filesystem::path data;
    std::vector<double> alphas;
    FinetuneMode mode = FinetuneMode::Prompt;
    int repeats = 3;
    std::optional<std::size_t> limit;
    std::optional<std::filesystem::path> report;
    std::optional<std::filesystem::path> csv;
};

/// Decode-loop latency per alpha. Every sample is decoded at each alpha in
/// turn (order rotated), `repeats` rounds; the per-sample minimum is averaged.
std::vector<BenchRow> bench_alpha(SerumModel& model, const std::vector<DocumentSample>& samples,
                                  const std::vector<double>& alphas, FinetuneMode mode, int repeats);
std::vector<BenchRow> cmd_bench_alpha(const RunConfig& cfg, const BenchOptions& opts);

/// Heatmap of the max live-query score over the page with the foreground
/// token cells outlined.
Image render_overlay(const DocumentSample& sample, const ExtractionResult& result,
                     const ModelConfig& config);

/// Writes the summary table as CSV with columns alpha,K,f1,mean_decode_ms.
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

}  // namespace serum

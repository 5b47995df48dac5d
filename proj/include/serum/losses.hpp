#pragma once

#include <stdexcept>
#include <vector>

#include <torch/torch.h>

#include "serum/hungarian.hpp"

namespace serum {

/// Raised when a training step meets a non-finite loss or matching cost.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loss values of one optimisation step.
struct LossReport {
    double l_match = 0.0;
    double l_decoder = 0.0;
    double l_text = 0.0;
    double l_total = 0.0;
    std::vector<double> per_layer_match;
};

struct LossWeights {
    double match = 1.0;
    double decoder = 1.0;
    double text = 1.0;
};

/// Per-pixel mean BCE between sigmoid(logits) and a binary target, for every
/// (row of logits, row of targets) pair: (n, P) x (m, P) -> (n, m).
torch::Tensor pairwise_bce(const torch::Tensor& logits, const torch::Tensor& targets);

/// 1 - (2 sum(p t) + 1) / (sum(p) + sum(t) + 1) pairwise, p = sigmoid(logits).
torch::Tensor pairwise_dice(const torch::Tensor& logits, const torch::Tensor& targets);

/// cost[q, t] = BCE + Dice (- log p_text(q) when class_logits is defined).
/// logits (n, P), targets (m, P), class_logits (n, 2) or undefined.
/// An empty target set yields an n x 0 matrix.
CostMatrix match_cost(const torch::Tensor& logits, const torch::Tensor& targets,
                      const torch::Tensor& class_logits = {});

/// Matching loss of one sample.
struct MatchingLoss {
    torch::Tensor total;
    std::vector<torch::Tensor> per_layer;
    std::vector<Assignment> assignments;  // per layer, in live-query indices
};

/// Sum over decoder layers of the matched BCE + Dice terms, re-running the
/// Hungarian matcher on every layer; the final layer adds the class NLL of
/// matched queries and the no-object NLL of unmatched live queries.
/// per_layer_logits: each (N, P); class_logits (N, 2); validity (N,) bool;
/// targets (m, P) binary.
MatchingLoss matching_loss(const std::vector<torch::Tensor>& per_layer_logits,
                           const torch::Tensor& class_logits, const torch::Tensor& validity,
                           const torch::Tensor& targets);

/// Same loss with the per-layer assignments held fixed.
MatchingLoss matching_loss(const std::vector<torch::Tensor>& per_layer_logits,
                           const torch::Tensor& class_logits, const torch::Tensor& validity,
                           const torch::Tensor& targets, const std::vector<Assignment>& fixed);

/// Mean over all positions of BCE(max over live queries of E_score, omega).
/// logits (N, P), validity (N,), omega (P,) binary.
torch::Tensor text_constraint_loss(const torch::Tensor& logits, const torch::Tensor& validity,
                                   const torch::Tensor& omega);

/// w.match * l_match + w.decoder * l_decoder + w.text * l_text. Throws
/// std::invalid_argument for a negative weight.
double total_loss(double l_match, double l_decoder, double l_text, const LossWeights& w);
torch::Tensor total_loss(const torch::Tensor& l_match, const torch::Tensor& l_decoder,
                         const torch::Tensor& l_text, const LossWeights& w);

}  // namespace serum

#include "serum/losses.hpp"

#include <stdexcept>
#include <string>

namespace serum {

namespace F = torch::nn::functional;

torch::Tensor pairwise_bce(const torch::Tensor& logits, const torch::Tensor& targets) {
    const double p = static_cast<double>(logits.size(1));
    return F::softplus(logits).mean(1, true) - torch::matmul(logits, targets.t()) / p;
}

torch::Tensor pairwise_dice(const torch::Tensor& logits, const torch::Tensor& targets) {
    const auto prob = torch::sigmoid(logits);
    const auto num = 2.0 * torch::matmul(prob, targets.t()) + 1.0;
    const auto den = prob.sum(1, true) + targets.sum(1).unsqueeze(0) + 1.0;
    return 1.0 - num / den;
}

namespace {

CostMatrix to_cost_matrix(const torch::Tensor& cost) {
    const auto host = cost.detach().to(torch::kDouble).contiguous();
    CostMatrix out(static_cast<std::size_t>(host.size(0)), static_cast<std::size_t>(host.size(1)));
    std::copy(host.data_ptr<double>(), host.data_ptr<double>() + host.numel(), out.values.begin());
    return out;
}

torch::Tensor cost_tensor(const torch::Tensor& logits, const torch::Tensor& targets,
                          const torch::Tensor& class_logits) {
    auto cost = pairwise_bce(logits, targets) + pairwise_dice(logits, targets);
    if (class_logits.defined()) {
        cost = cost - torch::log_softmax(class_logits, -1).select(1, 0).unsqueeze(1);
    }
    return cost;
}

Assignment all_unmatched(std::size_t n) {
    Assignment a;
    for (std::size_t i = 0; i < n; ++i) {
        a.unmatched.push_back(i);
    }
    return a;
}

MatchingLoss matching_loss_impl(const std::vector<torch::Tensor>& per_layer_logits,
                                const torch::Tensor& class_logits, const torch::Tensor& validity,
                                const torch::Tensor& targets, const std::vector<Assignment>* fixed) {
    if (per_layer_logits.empty()) {
        throw std::invalid_argument("matching_loss needs at least one decoder layer");
    }
    if (fixed != nullptr && fixed->size() != per_layer_logits.size()) {
        throw std::invalid_argument("one fixed assignment per layer is required");
    }
    const auto live = validity.nonzero().flatten();
    const auto n = static_cast<std::size_t>(live.numel());
    const auto m = static_cast<std::size_t>(targets.size(0));
    const auto live_class = class_logits.index_select(0, live);
    const auto class_log_probs = torch::log_softmax(live_class, -1);

    MatchingLoss out;
    out.total = torch::zeros({}, per_layer_logits.front().options());
    for (std::size_t layer = 0; layer < per_layer_logits.size(); ++layer) {
        const bool final_layer = layer + 1 == per_layer_logits.size();
        const auto logits = per_layer_logits[layer].index_select(0, live);
        Assignment assignment;
        if (fixed != nullptr) {
            assignment = (*fixed)[layer];
        } else if (m == 0) {
            assignment = all_unmatched(n);
        } else {
            const auto cost = cost_tensor(logits, targets, final_layer ? live_class : torch::Tensor{});
            if (!torch::isfinite(cost).all().item<bool>()) {
                throw NonFiniteLoss("non-finite matching cost");
            }
            assignment = hungarian_match(to_cost_matrix(cost));
        }
        auto loss = torch::zeros({}, logits.options());
        if (!assignment.pairs.empty()) {
            std::vector<int64_t> qs, ts;
            for (const auto& [q, t] : assignment.pairs) {
                qs.push_back(static_cast<int64_t>(q));
                ts.push_back(static_cast<int64_t>(t));
            }
            const auto qi = torch::tensor(qs, torch::kLong);
            const auto ti = torch::tensor(ts, torch::kLong);
            const auto q_logits = logits.index_select(0, qi);
            const auto t_masks = targets.index_select(0, ti);
            loss = loss + pairwise_bce(q_logits, t_masks).diagonal().sum() +
                   pairwise_dice(q_logits, t_masks).diagonal().sum();
            if (final_layer) {
                loss = loss - class_log_probs.select(1, 0).index_select(0, qi).sum();
            }
        }
        if (final_layer && !assignment.unmatched.empty()) {
            std::vector<int64_t> us(assignment.unmatched.begin(), assignment.unmatched.end());
            loss = loss - class_log_probs.select(1, 1).index_select(0, torch::tensor(us, torch::kLong)).sum();
        }
        out.per_layer.push_back(loss);
        out.assignments.push_back(std::move(assignment));
        out.total = out.total + loss;
    }
    return out;
}

}  // namespace

CostMatrix match_cost(const torch::Tensor& logits, const torch::Tensor& targets,
                      const torch::Tensor& class_logits) {
    if (targets.size(0) == 0) {
        return CostMatrix(static_cast<std::size_t>(logits.size(0)), 0);
    }
    return to_cost_matrix(cost_tensor(logits, targets, class_logits));
}

MatchingLoss matching_loss(const std::vector<torch::Tensor>& per_layer_logits,
                           const torch::Tensor& class_logits, const torch::Tensor& validity,
                           const torch::Tensor& targets) {
    return matching_loss_impl(per_layer_logits, class_logits, validity, targets, nullptr);
}

MatchingLoss matching_loss(const std::vector<torch::Tensor>& per_layer_logits,
                           const torch::Tensor& class_logits, const torch::Tensor& validity,
                           const torch::Tensor& targets, const std::vector<Assignment>& fixed) {
    return matching_loss_impl(per_layer_logits, class_logits, validity, targets, &fixed);
}

torch::Tensor text_constraint_loss(const torch::Tensor& logits, const torch::Tensor& validity,
                                   const torch::Tensor& omega) {
    const auto live = validity.nonzero().flatten();
    if (live.numel() == 0) {
        throw std::invalid_argument("text_constraint_loss needs at least one live query");
    }
    // sigmoid is monotone, so the max score is the sigmoid of the max logit.
    const auto g = std::get<0>(logits.index_select(0, live).max(0));
    return F::binary_cross_entropy_with_logits(g, omega.to(g.dtype()));
}

double total_loss(double l_match, double l_decoder, double l_text, const LossWeights& w) {
    if (w.match < 0.0 || w.decoder < 0.0 || w.text < 0.0) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
    return w.match * l_match + w.decoder * l_decoder + w.text * l_text;
}

torch::Tensor total_loss(const torch::Tensor& l_match, const torch::Tensor& l_decoder,
                         const torch::Tensor& l_text, const LossWeights& w) {
    if (w.match < 0.0 || w.decoder < 0.0 || w.text < 0.0) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
    return w.match * l_match + w.decoder * l_decoder + w.text * l_text;
}

}  // namespace serum

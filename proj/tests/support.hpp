#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "serum/config.hpp"
#include "serum/document.hpp"
#include "serum/hungarian.hpp"
#include "serum/kv_tree.hpp"

namespace serum {

// Printers for assertion messages; libtorch's generic vector printer
// otherwise shadows doctest's fallback.
std::ostream& operator<<(std::ostream& os, const KvNode& node);
std::ostream& operator<<(std::ostream& os, const Point& p);
std::ostream& operator<<(std::ostream& os, const TextRegion& region);

}  // namespace serum

namespace serum::testing {

/// 32x32 two-stage encoder, d = 8, N = 3, s = 2, two decoder layers.
ModelConfig tiny_config();

/// Largest norm-wise relative error between autograd and central finite
/// differences over every input. `f` must return a scalar; inputs are
/// double leaf tensors with requires_grad set.
double gradient_error(const std::function<torch::Tensor()>& f, std::vector<torch::Tensor> inputs,
                      double step = 1e-6);

/// Minimum over all injective target->row maps of the cost, summed in target order.
double brute_force_assignment(const CostMatrix& cost);

/// Levenshtein distance by memoised recursion.
std::size_t oracle_edit_distance(const std::string& a, const std::string& b);

/// 1 - ED / max length after lowercasing and trimming, max over answers,
/// zeroed below 0.5.
double oracle_anls(const std::string& pred, const std::vector<std::string>& answers);

/// Ordered tree edit distance by the recursive forest definition (delete the
/// rightmost root, insert the rightmost root, or map the two rightmost roots),
/// using the key/leaf cost model.
double oracle_tree_distance(const KvTree& a, const KvTree& b);

/// Node count of the labelled tree (root + keys + one node per leaf value).
std::size_t labeled_size(const KvTree& tree);

/// Random tree over `keys` with at most `max_nodes` labelled nodes and
/// nesting depth at most `max_depth`. Leaves are non-empty strings drawn
/// from `alphabet`; keys are unique per mapping.
KvTree random_tree(std::mt19937_64& rng, const std::vector<std::string>& keys,
                   std::size_t max_nodes, int max_depth, const std::string& alphabet);

}  // namespace serum::testing

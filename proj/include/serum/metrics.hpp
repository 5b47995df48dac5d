#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "serum/kv_tree.hpp"

namespace serum {

/// Levenshtein distance over bytes with unit costs.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// edit_distance / max(|a|, |b|); 0 when both are empty.
double normalized_edit_distance(std::string_view a, std::string_view b);

struct FieldCounts {
    std::size_t matched = 0;
    std::size_t predicted = 0;
    std::size_t ground_truth = 0;

    FieldCounts& operator+=(const FieldCounts& o) {
        matched += o.matched;
        predicted += o.predicted;
        ground_truth += o.ground_truth;
        return *this;
    }
};

struct F1Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Exact-match multiset intersection of (key path, value) pairs.
FieldCounts field_counts(const KvTree& pred, const KvTree& gt);
/// Precision/recall/F1 from accumulated counts; (1,1,1) when both sides are
/// empty.
F1Score f1_from_counts(const FieldCounts& counts);
F1Score field_f1(const KvTree& pred, const KvTree& gt);

/// Ordered labelled tree used by the tree edit distance. Node 0 is the root.
struct LabeledTree {
    enum class Kind { Root, Key, Leaf };
    struct Node {
        Kind kind = Kind::Root;
        std::string label;
        std::vector<std::size_t> children;
    };
    std::vector<Node> nodes;

    std::size_t size() const { return nodes.size(); }
};

/// Root node, one Key node per key, one Leaf child under every leaf key.
LabeledTree to_labeled_tree(const KvTree& tree);

/// Rename cost of the TED cost model: equal labels of the same kind cost 0,
/// distinct keys cost 1, two leaves cost their normalised character edit
/// distance, and nodes of different kinds cost 1. Insert and delete cost 1.
double rename_cost(const LabeledTree::Node& a, const LabeledTree::Node& b);

/// Zhang-Shasha ordered tree edit distance.
double tree_edit_distance(const LabeledTree& a, const LabeledTree& b);

/// max(0, 1 - TED(pred, gt) / TED(empty, gt)). Throws std::invalid_argument
/// when gt is empty.
double ted_accuracy(const KvTree& pred, const KvTree& gt);

/// Average normalised Levenshtein similarity against the best answer, after
/// lowercasing and trimming; scores below `threshold` become 0.
double anls(std::string_view pred, const std::vector<std::string>& answers,
            double threshold = 0.5);

}  // namespace serum

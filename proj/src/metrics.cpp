#include "serum/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace serum {

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) {
        row[j] = j;
    }
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

double normalized_edit_distance(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) {
        return 0.0;
    }
    return static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

FieldCounts field_counts(const KvTree& pred, const KvTree& gt) {
    const auto p = kv_flatten(pred);
    const auto g = kv_flatten(gt);
    std::map<std::pair<std::string, std::string>, std::size_t> remaining;
    for (const auto& item : g) {
        ++remaining[item];
    }
    FieldCounts counts{0, p.size(), g.size()};
    for (const auto& item : p) {
        auto it = remaining.find(item);
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++counts.matched;
        }
    }
    return counts;
}

F1Score f1_from_counts(const FieldCounts& c) {
    if (c.predicted == 0 && c.ground_truth == 0) {
        return {1.0, 1.0, 1.0};
    }
    F1Score s;
    s.precision = c.predicted ? static_cast<double>(c.matched) / c.predicted : 0.0;
    s.recall = c.ground_truth ? static_cast<double>(c.matched) / c.ground_truth : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

F1Score field_f1(const KvTree& pred, const KvTree& gt) {
    return f1_from_counts(field_counts(pred, gt));
}

namespace {

void add_children(LabeledTree& out, std::size_t parent, const KvTree& tree) {
    for (const auto& node : tree) {
        const std::size_t key_index = out.nodes.size();
        out.nodes.push_back({LabeledTree::Kind::Key, node.key, {}});
        out.nodes[parent].children.push_back(key_index);
        if (node.is_leaf()) {
            const std::size_t leaf_index = out.nodes.size();
            out.nodes.push_back({LabeledTree::Kind::Leaf, node.leaf(), {}});
            out.nodes[key_index].children.push_back(leaf_index);
        } else {
            add_children(out, key_index, node.children());
        }
    }
}

struct PostOrder {
    std::vector<std::size_t> node;      // postorder position -> node index
    std::vector<std::size_t> leftmost;  // postorder position -> leftmost leaf position
    std::vector<std::size_t> keyroots;  // ascending postorder positions
};

std::size_t visit(const LabeledTree& t, std::size_t n, PostOrder& po) {
    std::size_t first = std::size_t(-1);
    for (std::size_t child : t.nodes[n].children) {
        const std::size_t lm = visit(t, child, po);
        if (first == std::size_t(-1)) {
            first = lm;
        }
    }
    const std::size_t pos = po.node.size();
    po.node.push_back(n);
    po.leftmost.push_back(first == std::size_t(-1) ? pos : first);
    return po.leftmost.back();
}

PostOrder post_order(const LabeledTree& t) {
    PostOrder po;
    if (t.size() == 0) {
        return po;
    }
    visit(t, 0, po);
    // A keyroot is the highest node for each distinct leftmost leaf.
    std::map<std::size_t, std::size_t> highest;
    for (std::size_t i = 0; i < po.node.size(); ++i) {
        highest[po.leftmost[i]] = i;
    }
    for (const auto& [lm, pos] : highest) {
        po.keyroots.push_back(pos);
    }
    std::sort(po.keyroots.begin(), po.keyroots.end());
    return po;
}

}  // namespace

LabeledTree to_labeled_tree(const KvTree& tree) {
    LabeledTree out;
    out.nodes.push_back({LabeledTree::Kind::Root, "<root>", {}});
    add_children(out, 0, tree);
    return out;
}

double rename_cost(const LabeledTree::Node& a, const LabeledTree::Node& b) {
    if (a.kind != b.kind) {
        return 1.0;
    }
    switch (a.kind) {
        case LabeledTree::Kind::Root:
            return 0.0;
        case LabeledTree::Kind::Key:
            return a.label == b.label ? 0.0 : 1.0;
        case LabeledTree::Kind::Leaf:
            return normalized_edit_distance(a.label, b.label);
    }
    return 1.0;
}

double tree_edit_distance(const LabeledTree& a, const LabeledTree& b) {
    const PostOrder pa = post_order(a);
    const PostOrder pb = post_order(b);
    const std::size_t na = pa.node.size();
    const std::size_t nb = pb.node.size();
    if (na == 0 || nb == 0) {
        return static_cast<double>(na + nb);
    }
    std::vector<double> tree_dist(na * nb, 0.0);
    std::vector<double> forest((na + 1) * (nb + 1), 0.0);
    auto td = [&](std::size_t i, std::size_t j) -> double& { return tree_dist[i * nb + j]; };

    for (std::size_t i : pa.keyroots) {
        for (std::size_t j : pb.keyroots) {
            const std::size_t li = pa.leftmost[i];
            const std::size_t lj = pb.leftmost[j];
            const std::size_t rows = i - li + 2;
            const std::size_t cols = j - lj + 2;
            // forest distance over positions li..i x lj..j, offset by one.
            auto fd = [&](std::size_t x, std::size_t y) -> double& { return forest[x * cols + y]; };
            fd(0, 0) = 0.0;
            for (std::size_t x = 1; x < rows; ++x) {
                fd(x, 0) = fd(x - 1, 0) + 1.0;
            }
            for (std::size_t y = 1; y < cols; ++y) {
                fd(0, y) = fd(0, y - 1) + 1.0;
            }
            for (std::size_t x = 1; x < rows; ++x) {
                const std::size_t ai = li + x - 1;
                for (std::size_t y = 1; y < cols; ++y) {
                    const std::size_t bj = lj + y - 1;
                    const double del = fd(x - 1, y) + 1.0;
                    const double ins = fd(x, y - 1) + 1.0;
                    if (pa.leftmost[ai] == li && pb.leftmost[bj] == lj) {
                        const double ren = fd(x - 1, y - 1) +
                                           rename_cost(a.nodes[pa.node[ai]], b.nodes[pb.node[bj]]);
                        fd(x, y) = std::min({del, ins, ren});
                        td(ai, bj) = fd(x, y);
                    } else {
                        const std::size_t px = pa.leftmost[ai] - li;
                        const std::size_t py = pb.leftmost[bj] - lj;
                        fd(x, y) = std::min({del, ins, fd(px, py) + td(ai, bj)});
                    }
                }
            }
        }
    }
    return td(na - 1, nb - 1);
}

double ted_accuracy(const KvTree& pred, const KvTree& gt) {
    if (gt.empty()) {
        throw std::invalid_argument("ted_accuracy: ground truth is empty");
    }
    const LabeledTree g = to_labeled_tree(gt);
    const LabeledTree empty = to_labeled_tree({});
    const double denom = tree_edit_distance(empty, g);
    const double dist = tree_edit_distance(to_labeled_tree(pred), g);
    return std::max(0.0, 1.0 - dist / denom);
}

namespace {

std::string normalize_answer(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(first, last - first + 1));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

double anls(std::string_view pred, const std::vector<std::string>& answers, double threshold) {
    const std::string p = normalize_answer(pred);
    double best = 0.0;
    for (const auto& answer : answers) {
        const double similarity = 1.0 - normalized_edit_distance(p, normalize_answer(answer));
        best = std::max(best, similarity);
    }
    return best < threshold ? 0.0 : best;
}

}  // namespace serum

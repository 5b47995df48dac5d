#include "support.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

namespace serum {

std::ostream& operator<<(std::ostream& os, const KvNode& node) {
    return os << kv_to_json(KvTree{node}).dump();
}

std::ostream& operator<<(std::ostream& os, const Point& p) {
    return os << '(' << p.row << ", " << p.col << ')';
}

std::ostream& operator<<(std::ostream& os, const TextRegion& region) {
    os << '"' << region.transcript << "\" [";
    for (const auto& p : region.polygon) {
        os << p;
    }
    return os << ']';
}

}  // namespace serum

namespace serum::testing {

ModelConfig tiny_config() {
    ModelConfig c = ModelConfig::toy();
    c.preset = "tiny";
    c.embed_dim = 8;
    c.query_channel = 8;
    c.num_queries = 3;
    c.upsample_factor = 2;
    c.encoder_stage_depths = {1, 1};
    c.encoder_window = 2;
    c.encoder_head_dim = 2;
    c.image_height = 32;
    c.image_width = 32;
    c.max_decode_len = 8;
    c.decoder_layers = 2;
    c.decoder_heads = 2;
    c.mlp_ratio = 2;
    c.charset = "ABC0123 .";
    c.validate();
    return c;
}

double gradient_error(const std::function<torch::Tensor()>& f, std::vector<torch::Tensor> inputs,
                      double step) {
    const auto out = f();
    const auto grads = torch::autograd::grad({out}, inputs, {}, false, false, true);
    double worst = 0.0;
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& x = inputs[i];
        const auto analytic = grads[i].defined() ? grads[i] : torch::zeros_like(x);
        auto numeric = torch::zeros_like(x);
        double* p = x.data_ptr<double>();
        double* n = numeric.data_ptr<double>();
        for (int64_t k = 0; k < x.numel(); ++k) {
            const double orig = p[k];
            p[k] = orig + step;
            const double up = f().item<double>();
            p[k] = orig - step;
            const double down = f().item<double>();
            p[k] = orig;
            n[k] = (up - down) / (2.0 * step);
        }
        const double diff = (analytic - numeric).norm().item<double>();
        const double scale = std::max({analytic.norm().item<double>(),
                                       numeric.norm().item<double>(), 1e-10});
        worst = std::max(worst, diff / scale);
    }
    return worst;
}

double brute_force_assignment(const CostMatrix& cost) {
    std::vector<std::size_t> rows(cost.rows);
    std::iota(rows.begin(), rows.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t t = 0; t < cost.cols; ++t) {
            total += cost.at(rows[t], t);
        }
        best = std::min(best, total);
    } while (std::next_permutation(rows.begin(), rows.end()));
    return best;
}

namespace {

std::size_t ed_rec(const std::string& a, const std::string& b, std::size_t i, std::size_t j,
                   std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
    if (i == a.size()) {
        return b.size() - j;
    }
    if (j == b.size()) {
        return a.size() - i;
    }
    const auto key = std::make_pair(i, j);
    if (const auto it = memo.find(key); it != memo.end()) {
        return it->second;
    }
    const std::size_t sub = ed_rec(a, b, i + 1, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
    const std::size_t del = ed_rec(a, b, i + 1, j, memo) + 1;
    const std::size_t ins = ed_rec(a, b, i, j + 1, memo) + 1;
    return memo[key] = std::min({sub, del, ins});
}

std::string normalise(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\n\r\f\v");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\n\r\f\v");
    std::string out = s.substr(first, last - first + 1);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

enum class NodeKind { Root, Key, Leaf };

struct ONode {
    NodeKind kind = NodeKind::Root;
    std::string label;
    std::vector<ONode> children;
};

ONode build(const KvTree& tree) {
    ONode root;
    for (const auto& node : tree) {
        ONode key{NodeKind::Key, node.key, {}};
        if (node.is_leaf()) {
            key.children.push_back(ONode{NodeKind::Leaf, node.leaf(), {}});
        } else {
            key.children = build(node.children()).children;
        }
        root.children.push_back(std::move(key));
    }
    return root;
}

std::size_t size_of(const ONode& n) {
    std::size_t s = 1;
    for (const auto& c : n.children) {
        s += size_of(c);
    }
    return s;
}

double relabel(const ONode& a, const ONode& b) {
    if (a.kind != b.kind) {
        return 1.0;
    }
    switch (a.kind) {
    case NodeKind::Root:
        return 0.0;
    case NodeKind::Key:
        return a.label == b.label ? 0.0 : 1.0;
    case NodeKind::Leaf: {
        const std::size_t longest = std::max(a.label.size(), b.label.size());
        if (longest == 0) {
            return 0.0;
        }
        return static_cast<double>(oracle_edit_distance(a.label, b.label)) /
               static_cast<double>(longest);
    }
    }
    return 1.0;
}

using Forest = std::vector<const ONode*>;

double forest_distance(const Forest& f, const Forest& g, std::map<std::pair<Forest, Forest>, double>& memo) {
    if (f.empty() && g.empty()) {
        return 0.0;
    }
    const auto key = std::make_pair(f, g);
    if (const auto it = memo.find(key); it != memo.end()) {
        return it->second;
    }
    double best = std::numeric_limits<double>::infinity();
    if (!f.empty()) {
        const ONode* v = f.back();
        Forest rest(f.begin(), f.end() - 1);
        for (const auto& c : v->children) {
            rest.push_back(&c);
        }
        best = std::min(best, forest_distance(rest, g, memo) + 1.0);
    }
    if (!g.empty()) {
        const ONode* w = g.back();
        Forest rest(g.begin(), g.end() - 1);
        for (const auto& c : w->children) {
            rest.push_back(&c);
        }
        best = std::min(best, forest_distance(f, rest, memo) + 1.0);
    }
    if (!f.empty() && !g.empty()) {
        const ONode* v = f.back();
        const ONode* w = g.back();
        Forest cv, cw;
        for (const auto& c : v->children) {
            cv.push_back(&c);
        }
        for (const auto& c : w->children) {
            cw.push_back(&c);
        }
        const Forest fr(f.begin(), f.end() - 1);
        const Forest gr(g.begin(), g.end() - 1);
        best = std::min(best, forest_distance(cv, cw, memo) + forest_distance(fr, gr, memo) +
                                  relabel(*v, *w));
    }
    return memo[key] = best;
}

KvTree random_mapping(std::mt19937_64& rng, const std::vector<std::string>& keys,
                      std::size_t& budget, int depth, int max_depth, const std::string& alphabet) {
    std::vector<std::string> order = keys;
    std::shuffle(order.begin(), order.end(), rng);
    std::bernoulli_distribution stop(0.3), nest(0.35);
    std::uniform_int_distribution<int> length(1, 4);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    KvTree out;
    for (const auto& key : order) {
        if (budget < 2 || (!out.empty() && stop(rng))) {
            break;
        }
        if (depth < max_depth && budget >= 3 && nest(rng)) {
            budget -= 1;
            auto child = random_mapping(rng, keys, budget, depth + 1, max_depth, alphabet);
            if (!child.empty()) {
                out.push_back(KvNode{key, std::move(child)});
                continue;
            }
            budget += 1;
        }
        budget -= 2;
        std::string value;
        const int n = length(rng);
        for (int i = 0; i < n; ++i) {
            value.push_back(alphabet[pick(rng)]);
        }
        out.push_back(KvNode{key, value});
    }
    return out;
}

}  // namespace

std::size_t oracle_edit_distance(const std::string& a, const std::string& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    return ed_rec(a, b, 0, 0, memo);
}

double oracle_anls(const std::string& pred, const std::vector<std::string>& answers) {
    const std::string p = normalise(pred);
    double best = 0.0;
    for (const auto& answer : answers) {
        const std::string a = normalise(answer);
        const std::size_t longest = std::max(p.size(), a.size());
        const double sim = longest == 0
                               ? 1.0
                               : 1.0 - static_cast<double>(oracle_edit_distance(p, a)) /
                                           static_cast<double>(longest);
        best = std::max(best, sim);
    }
    return best < 0.5 ? 0.0 : best;
}

double oracle_tree_distance(const KvTree& a, const KvTree& b) {
    const ONode ra = build(a);
    const ONode rb = build(b);
    std::map<std::pair<Forest, Forest>, double> memo;
    return forest_distance(Forest{&ra}, Forest{&rb}, memo);
}

std::size_t labeled_size(const KvTree& tree) { return size_of(build(tree)); }

KvTree random_tree(std::mt19937_64& rng, const std::vector<std::string>& keys,
                   std::size_t max_nodes, int max_depth, const std::string& alphabet) {
    std::size_t budget = max_nodes > 0 ? max_nodes - 1 : 0;
    return random_mapping(rng, keys, budget, 1, max_depth, alphabet);
}

}  // namespace serum::testing

#include "serum/kv_tree.hpp"

#include <stdexcept>

namespace serum {

KvTree kv_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("key-value ground truth must be a JSON object");
    }
    KvTree tree;
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) {
            tree.push_back(KvNode{key, value.get<std::string>()});
        } else if (value.is_object()) {
            tree.push_back(KvNode{key, kv_from_json(value)});
        } else {
            throw std::invalid_argument("value of key '" + key + "' must be a string or an object");
        }
    }
    return tree;
}

nlohmann::ordered_json kv_to_json(const KvTree& tree) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& node : tree) {
        if (node.is_leaf()) {
            out[node.key] = node.leaf();
        } else {
            out[node.key] = kv_to_json(node.children());
        }
    }
    return out;
}

bool kv_is_well_formed(const KvTree& tree) {
    for (const auto& node : tree) {
        if (node.key.empty()) {
            return false;
        }
        if (node.is_leaf() ? node.leaf().empty()
                           : node.children().empty() || !kv_is_well_formed(node.children())) {
            return false;
        }
    }
    return true;
}

namespace {

void flatten_into(const KvTree& tree, const std::string& prefix,
                  std::vector<std::pair<std::string, std::string>>& out) {
    for (const auto& node : tree) {
        const std::string path = prefix.empty() ? node.key : prefix + "." + node.key;
        if (node.is_leaf()) {
            out.emplace_back(path, node.leaf());
        } else {
            flatten_into(node.children(), path, out);
        }
    }
}

void serialize_into(const Vocabulary& vocab, const KvTree& tree, std::vector<TokenId>& out) {
    for (const auto& node : tree) {
        const auto s = vocab.start_tag(node.key);
        const auto e = vocab.end_tag(node.key);
        if (!s || !e) {
            throw std::invalid_argument("key '" + node.key + "' is not registered in the vocabulary");
        }
        out.push_back(*s);
        if (node.is_leaf()) {
            const auto chars = vocab.encode(node.leaf());
            out.insert(out.end(), chars.begin(), chars.end());
        } else {
            serialize_into(vocab, node.children(), out);
        }
        out.push_back(*e);
    }
}

void render_into(const Vocabulary& vocab, const KvTree& tree, std::string& out) {
    for (const auto& node : tree) {
        out += "<s_" + node.key + ">";
        if (node.is_leaf()) {
            out += node.leaf();
        } else {
            render_into(vocab, node.children(), out);
        }
        out += "<e_" + node.key + ">";
    }
}

// Node under construction while parsing.
struct OpenNode {
    std::string key;
    std::string text;
    KvTree children;
};

KvNode close_node(OpenNode&& open, bool& malformed) {
    if (open.children.empty()) {
        return KvNode{std::move(open.key), std::move(open.text)};
    }
    if (!open.text.empty()) {
        malformed = true;
    }
    return KvNode{std::move(open.key), std::move(open.children)};
}

}  // namespace

std::vector<std::pair<std::string, std::string>> kv_flatten(const KvTree& tree) {
    std::vector<std::pair<std::string, std::string>> out;
    flatten_into(tree, "", out);
    return out;
}

std::vector<TokenId> serialize_total(const Vocabulary& vocab, const KvTree& tree) {
    std::vector<TokenId> out;
    serialize_into(vocab, tree, out);
    return out;
}

std::string render_total(const Vocabulary& vocab, const KvTree& tree) {
    std::string out;
    render_into(vocab, tree, out);
    return out;
}

ParseResult parse_total(const Vocabulary& vocab, std::span<const TokenId> ids) {
    ParseResult result;
    std::vector<OpenNode> stack;

    auto attach = [&](KvNode&& node) {
        if (stack.empty()) {
            result.tree.push_back(std::move(node));
        } else {
            stack.back().children.push_back(std::move(node));
        }
    };

    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            result.malformed = true;
            continue;
        }
        if (vocab.is_char(id)) {
            if (stack.empty()) {
                result.malformed = true;
            } else {
                stack.back().text += vocab.name_of(id);
            }
            continue;
        }
        const auto tag = vocab.tag_of(id);
        if (!tag) {
            // Control ids and task prompts carry no structure.
            if (id != Vocabulary::kPad && id != Vocabulary::kEos) {
                result.malformed = true;
            }
            continue;
        }
        if (tag->is_start) {
            stack.push_back(OpenNode{tag->key, {}, {}});
            continue;
        }
        // End tag: close up to the innermost open node with the same key.
        std::size_t match = stack.size();
        for (std::size_t i = stack.size(); i-- > 0;) {
            if (stack[i].key == tag->key) {
                match = i;
                break;
            }
        }
        if (match == stack.size()) {
            result.malformed = true;
            continue;
        }
        if (match + 1 != stack.size()) {
            result.malformed = true;
        }
        while (stack.size() > match) {
            OpenNode open = std::move(stack.back());
            stack.pop_back();
            attach(close_node(std::move(open), result.malformed));
        }
    }
    if (!stack.empty()) {
        result.malformed = true;
    }
    while (!stack.empty()) {
        OpenNode open = std::move(stack.back());
        stack.pop_back();
        attach(close_node(std::move(open), result.malformed));
    }
    return result;
}

}  // namespace serum

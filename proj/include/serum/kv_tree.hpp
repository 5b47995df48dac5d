#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "serum/vocabulary.hpp"

namespace serum {

struct KvNode;

/// Ordered key-value structure: a list of keyed nodes whose values are
/// either strings (leaves) or nested lists.
using KvTree = std::vector<KvNode>;

struct KvNode {
    std::string key;
    std::variant<std::string, KvTree> value;

    bool is_leaf() const { return std::holds_alternative<std::string>(value); }
    const std::string& leaf() const { return std::get<std::string>(value); }
    const KvTree& children() const { return std::get<KvTree>(value); }

    bool operator==(const KvNode& other) const = default;
};

/// Builds a tree from a JSON object whose values are strings or objects.
/// Throws std::invalid_argument on any other JSON value type.
KvTree kv_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json kv_to_json(const KvTree& tree);

/// Ground-truth contract: every leaf is a non-empty string and no mapping
/// is empty.
bool kv_is_well_formed(const KvTree& tree);

/// (key path joined by '.', leaf value) pairs in depth-first order.
std::vector<std::pair<std::string, std::string>> kv_flatten(const KvTree& tree);

/// Depth-first `<s_key>value<e_key>` serialisation; nested mappings nest
/// their tag pairs. Throws std::invalid_argument for unregistered keys.
std::vector<TokenId> serialize_total(const Vocabulary& vocab, const KvTree& tree);

struct ParseResult {
    KvTree tree;
    bool malformed = false;
};

/// Inverse of serialize_total. Never throws: unclosed tags close at the end
/// of the sequence, stray text outside tags is dropped, text mixed with
/// nested tags is dropped, and unmatched end tags are ignored; each repair
/// sets `malformed`.
ParseResult parse_total(const Vocabulary& vocab, std::span<const TokenId> ids);

/// Human-readable `<s_key>value<e_key>` rendering.
std::string render_total(const Vocabulary& vocab, const KvTree& tree);

}  // namespace serum

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace serum {

using TokenId = std::int32_t;

/// Character-level vocabulary with reserved control ids and dynamically
/// registered special tokens.
///
/// Layout: PAD, BOS, EOS, UNK, then one id per charset character in charset
/// order, then special tokens in registration order. Special tokens are
/// `<s_key>` / `<e_key>` pairs for structured output and `<task:name>`
/// prompts. Character encoding never yields a special id.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kUnk = 3;

    explicit Vocabulary(std::string_view charset);

    /// Registers `<s_key>` and `<e_key>`; idempotent.
    void register_key(const std::string& key);
    /// Registers `<task:name>`; idempotent.
    TokenId register_task(const std::string& name);

    std::vector<TokenId> encode(std::string_view text) const;
    /// Renders every id, control and special ids by their textual names.
    /// Throws std::out_of_range on an id outside the vocabulary.
    std::string decode(std::span<const TokenId> ids) const;
    /// Renders only character ids; control and special ids are skipped.
    std::string decode_chars(std::span<const TokenId> ids) const;

    std::size_t size() const { return names_.size(); }
    bool is_char(TokenId id) const;
    bool is_special(TokenId id) const;

    std::optional<TokenId> start_tag(const std::string& key) const;
    std::optional<TokenId> end_tag(const std::string& key) const;
    std::optional<TokenId> task_token(const std::string& name) const;

    struct Tag {
        std::string key;
        bool is_start = false;
    };
    /// Key tag carried by `id`, if it is an `<s_key>` / `<e_key>` token.
    std::optional<Tag> tag_of(TokenId id) const;

    const std::string& charset() const { return charset_; }
    const std::vector<std::string>& keys() const { return keys_; }
    const std::vector<std::string>& tasks() const { return tasks_; }
    const std::string& name_of(TokenId id) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

private:
    TokenId add_special(const std::string& name);

    std::string charset_;
    std::vector<std::string> names_;
    std::vector<TokenId> char_to_id_;  // indexed by unsigned char, -1 when absent
    TokenId first_special_ = 0;
    std::unordered_map<std::string, TokenId> special_ids_;
    std::unordered_map<TokenId, Tag> tags_;
    std::vector<std::string> keys_;
    std::vector<std::string> tasks_;
};

}  // namespace serum

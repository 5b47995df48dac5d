#include "serum/vocabulary.hpp"

#include <stdexcept>

namespace serum {

Vocabulary::Vocabulary(std::string_view charset)
    : charset_(charset), char_to_id_(256, -1) {
    names_ = {"<pad>", "<s>", "</s>", "<unk>"};
    for (char c : charset_) {
        const auto byte = static_cast<unsigned char>(c);
        if (char_to_id_[byte] != -1) {
            throw std::invalid_argument(std::string("duplicate character in charset: '") + c + "'");
        }
        char_to_id_[byte] = static_cast<TokenId>(names_.size());
        names_.emplace_back(1, c);
    }
    first_special_ = static_cast<TokenId>(names_.size());
}

TokenId Vocabulary::add_special(const std::string& name) {
    if (auto it = special_ids_.find(name); it != special_ids_.end()) {
        return it->second;
    }
    const auto id = static_cast<TokenId>(names_.size());
    names_.push_back(name);
    special_ids_.emplace(name, id);
    return id;
}

void Vocabulary::register_key(const std::string& key) {
    if (key.empty()) {
        throw std::invalid_argument("cannot register an empty key");
    }
    if (start_tag(key)) {
        return;
    }
    const TokenId s = add_special("<s_" + key + ">");
    const TokenId e = add_special("<e_" + key + ">");
    tags_[s] = Tag{key, true};
    tags_[e] = Tag{key, false};
    keys_.push_back(key);
}

TokenId Vocabulary::register_task(const std::string& name) {
    if (name.empty()) {
        throw std::invalid_argument("cannot register an empty task name");
    }
    if (auto id = task_token(name)) {
        return *id;
    }
    tasks_.push_back(name);
    return add_special("<task:" + name + ">");
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (char c : text) {
        const TokenId id = char_to_id_[static_cast<unsigned char>(c)];
        ids.push_back(id < 0 ? kUnk : id);
    }
    return ids;
}

const std::string& Vocabulary::name_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(names_.size()));
    }
    return names_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        out += name_of(id);
    }
    return out;
}

std::string Vocabulary::decode_chars(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        const std::string& name = name_of(id);
        if (is_char(id)) {
            out += name;
        }
    }
    return out;
}

bool Vocabulary::is_char(TokenId id) const { return id > kUnk && id < first_special_; }

bool Vocabulary::is_special(TokenId id) const {
    return id >= first_special_ && static_cast<std::size_t>(id) < names_.size();
}

std::optional<TokenId> Vocabulary::start_tag(const std::string& key) const {
    if (auto it = special_ids_.find("<s_" + key + ">"); it != special_ids_.end()) {
        return it->second;
    }
    return std::nullopt;
}

std::optional<TokenId> Vocabulary::end_tag(const std::string& key) const {
    if (auto it = special_ids_.find("<e_" + key + ">"); it != special_ids_.end()) {
        return it->second;
    }
    return std::nullopt;
}

std::optional<TokenId> Vocabulary::task_token(const std::string& name) const {
    if (auto it = special_ids_.find("<task:" + name + ">"); it != special_ids_.end()) {
        return it->second;
    }
    return std::nullopt;
}

std::optional<Vocabulary::Tag> Vocabulary::tag_of(TokenId id) const {
    if (auto it = tags_.find(id); it != tags_.end()) {
        return it->second;
    }
    return std::nullopt;
}

nlohmann::json Vocabulary::to_json() const {
    // Registration order is interleaved between keys and tasks, so the
    // special-token names are stored in id order to reproduce ids exactly.
    std::vector<std::string> specials(names_.begin() + first_special_, names_.end());
    return {{"charset", charset_}, {"specials", specials}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v(j.at("charset").get<std::string>());
    for (const auto& name : j.at("specials").get<std::vector<std::string>>()) {
        if (name.rfind("<task:", 0) == 0 && name.size() > 7) {
            v.register_task(name.substr(6, name.size() - 7));
        } else if (name.rfind("<s_", 0) == 0 && name.size() > 4) {
            v.register_key(name.substr(3, name.size() - 4));
        } else if (name.rfind("<e_", 0) == 0) {
            continue;  // registered together with its start tag
        } else {
            throw std::invalid_argument("unrecognised special token '" + name + "'");
        }
    }
    return v;
}

}  // namespace serum

#include "serum/synthetic_corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace serum {

namespace {

using Rows = std::array<std::uint8_t, 7>;

struct GlyphEntry {
    char c;
    Rows rows;
};

// clang-format off
constexpr GlyphEntry kFont[] = {
    {' ', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000}},
    {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    {'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
    {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    {'A', {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {'B', {0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110}},
    {'C', {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110}},
    {'D', {0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100}},
    {'E', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111}},
    {'F', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000}},
    {'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111}},
    {'H', {0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'J', {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100}},
    {'K', {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001}},
    {'L', {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111}},
    {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {'N', {0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001}},
    {'O', {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'P', {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000}},
    {'Q', {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101}},
    {'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
    {'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
    {'T', {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100}},
    {'U', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'V', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
    {'W', {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010}},
    {'X', {0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001}},
    {'Y', {0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100}},
    {'Z', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111}},
    {'.', {0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100}},
    {',', {0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b00100, 0b01000}},
    {':', {0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000}},
    {'/', {0b00000, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b00000}},
    {'-', {0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000}},
    {'#', {0b01010, 0b01010, 0b11111, 0b01010, 0b11111, 0b01010, 0b01010}},
    {'&', {0b01100, 0b10010, 0b10100, 0b01000, 0b10101, 0b10010, 0b01101}},
    {'\'', {0b01100, 0b00100, 0b01000, 0b00000, 0b00000, 0b00000, 0b00000}},
    {'(', {0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010}},
    {')', {0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000}},
    {'$', {0b00100, 0b01111, 0b10100, 0b01110, 0b00101, 0b11110, 0b00100}},
    {'%', {0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011}},
};
// clang-format on

constexpr const char* kCompanyFirst[] = {"ACME", "BLUE", "STAR", "GOLD", "NOVA", "ZEN",
                                         "OAK",  "RED",  "SUN",  "MAX",  "JOY", "KING"};
constexpr const char* kCompanySecond[] = {"MART", "CAFE", "SHOP", "FOODS", "DELI", "BAR",
                                          "CO",   "INN",  "STORE", "GRILL", "TEA", "PIZZA"};
constexpr const char* kStreets[] = {"MAIN", "OAK", "ELM", "PARK", "HILL", "LAKE", "PINE", "KING"};
constexpr const char* kStreetKinds[] = {"ST", "RD", "AVE", "LN"};
constexpr const char* kDistractors[] = {"THANK YOU",  "CASH", "TAX", "CHANGE",
                                        "RECEIPT #",  "TEL",  "ITEM", "SUBTOTAL",
                                        "VISIT AGAIN"};

template <typename T, std::size_t N>
const T& pick(const T (&items)[N], std::mt19937_64& rng) {
    return items[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string money(std::mt19937_64& rng) {
    const int cents = uniform_int(rng, 50, 99999);
    std::string frac = std::to_string(cents % 100);
    if (frac.size() < 2) {
        frac = "0" + frac;
    }
    return std::to_string(cents / 100) + "." + frac;
}

std::string two_digits(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::string field_value(const std::string& key, std::mt19937_64& rng) {
    if (key == "company") {
        return std::string(pick(kCompanyFirst, rng)) + " " + pick(kCompanySecond, rng);
    }
    if (key == "date") {
        return two_digits(uniform_int(rng, 1, 28)) + "/" + two_digits(uniform_int(rng, 1, 12)) +
               "/" + std::to_string(uniform_int(rng, 2015, 2023));
    }
    if (key == "total") {
        return money(rng);
    }
    if (key == "address") {
        return std::to_string(uniform_int(rng, 1, 99)) + " " + pick(kStreets, rng) + " " +
               pick(kStreetKinds, rng);
    }
    throw std::invalid_argument("unknown schema key '" + key + "'");
}

std::string distractor_text(std::mt19937_64& rng) {
    std::string text = pick(kDistractors, rng);
    if (text == "TAX" || text == "CASH" || text == "CHANGE" || text == "SUBTOTAL") {
        text += " " + money(rng);
    } else if (text == "RECEIPT #") {
        text += std::to_string(uniform_int(rng, 100, 9999));
    } else if (text == "TEL") {
        text += " 555-" + std::to_string(uniform_int(rng, 1000, 9999));
    } else if (text == "ITEM") {
        text += " X" + std::to_string(uniform_int(rng, 1, 9)) + " " + money(rng);
    }
    return text;
}

struct Box {
    int top, left, bottom, right;  // half-open

    bool overlaps(const Box& o, int gap) const {
        return top < o.bottom + gap && o.top < bottom + gap && left < o.right + gap &&
               o.left < right + gap;
    }
};

struct InkBox {
    int top = kGlyphHeight, left = 0, bottom = 0, right = 0;
    bool any = false;
};

// Ink extent of a line rendered at (0, 0).
InkBox ink_extent(const std::string& text, int scale) {
    InkBox box;
    box.left = static_cast<int>(text.size()) * kGlyphAdvance * scale;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const Rows* rows = glyph(text[i]);
        if (rows == nullptr) {
            continue;
        }
        for (int r = 0; r < kGlyphHeight; ++r) {
            for (int c = 0; c < kGlyphWidth; ++c) {
                if (((*rows)[r] >> (kGlyphWidth - 1 - c)) & 1) {
                    const int x = (static_cast<int>(i) * kGlyphAdvance + c) * scale;
                    box.any = true;
                    box.top = std::min(box.top, r * scale);
                    box.bottom = std::max(box.bottom, (r + 1) * scale);
                    box.left = std::min(box.left, x);
                    box.right = std::max(box.right, x + scale);
                }
            }
        }
    }
    return box;
}

void draw_line(Image& page, const std::string& text, int top, int left, int scale) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const Rows* rows = glyph(text[i]);
        if (rows == nullptr) {
            continue;
        }
        for (int r = 0; r < kGlyphHeight; ++r) {
            for (int c = 0; c < kGlyphWidth; ++c) {
                if (!(((*rows)[r] >> (kGlyphWidth - 1 - c)) & 1)) {
                    continue;
                }
                const int y0 = top + r * scale;
                const int x0 = left + (static_cast<int>(i) * kGlyphAdvance + c) * scale;
                for (int dy = 0; dy < scale; ++dy) {
                    for (int dx = 0; dx < scale; ++dx) {
                        for (int ch = 0; ch < page.channels; ++ch) {
                            page.at(y0 + dy, x0 + dx, ch) = 0.0f;
                        }
                    }
                }
            }
        }
    }
}

void box_blur(Image& page, int radius) {
    if (radius <= 0) {
        return;
    }
    Image tmp = page;
    auto pass = [&](const Image& src, Image& dst, bool horizontal) {
        for (int r = 0; r < src.height; ++r) {
            for (int c = 0; c < src.width; ++c) {
                for (int ch = 0; ch < src.channels; ++ch) {
                    float sum = 0.0f;
                    int n = 0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int rr = horizontal ? r : r + k;
                        const int cc = horizontal ? c + k : c;
                        if (rr >= 0 && rr < src.height && cc >= 0 && cc < src.width) {
                            sum += src.at(rr, cc, ch);
                            ++n;
                        }
                    }
                    dst.at(r, c, ch) = sum / static_cast<float>(n);
                }
            }
        }
    };
    pass(page, tmp, true);
    pass(tmp, page, false);
}

}  // namespace

const std::array<std::uint8_t, 7>* glyph(char c) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& entry : kFont) {
        if (entry.c == upper) {
            return &entry.rows;
        }
    }
    return nullptr;
}

DocumentSample render_document(const DocSpec& spec) {
    if (spec.num_fields < 0 || spec.num_fields > static_cast<int>(kReceiptSchema.size())) {
        throw std::invalid_argument("num_fields must lie in [0, " +
                                    std::to_string(kReceiptSchema.size()) + "]");
    }
    if (spec.min_font_scale < 1 || spec.max_font_scale < spec.min_font_scale) {
        throw std::invalid_argument("invalid font scale range");
    }
    std::mt19937_64 rng(spec.seed);
    DocumentSample sample;
    sample.sample_id = spec.sample_id.empty() ? "doc_" + std::to_string(spec.seed) : spec.sample_id;
    sample.image = Image(spec.page_height, spec.page_width, spec.channels, 1.0f);

    // Field subset keeps schema order in the ground truth.
    std::vector<std::size_t> keys(kReceiptSchema.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        keys[i] = i;
    }
    std::shuffle(keys.begin(), keys.end(), rng);
    keys.resize(static_cast<std::size_t>(spec.num_fields));
    std::sort(keys.begin(), keys.end());

    std::vector<std::string> lines;
    for (std::size_t k : keys) {
        const std::string key = kReceiptSchema[k];
        const std::string value = field_value(key, rng);
        sample.kv_ground_truth.push_back(KvNode{key, value});
        std::string label = key;
        std::transform(label.begin(), label.end(), label.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
        lines.push_back(label + ": " + value);
    }
    for (int i = 0; i < spec.distractor_lines; ++i) {
        lines.push_back(distractor_text(rng));
    }
    std::shuffle(lines.begin(), lines.end(), rng);

    constexpr int kMargin = 4;
    constexpr int kGap = 4;
    std::vector<Box> placed;
    for (const auto& text : lines) {
        const int scale = uniform_int(rng, spec.min_font_scale, spec.max_font_scale);
        const InkBox ink = ink_extent(text, scale);
        const int width = ink.right;
        const int height = kGlyphHeight * scale;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            const int max_top = spec.page_height - kMargin - height;
            const int max_left = spec.page_width - kMargin - width;
            if (max_top < kMargin || max_left < kMargin) {
                break;
            }
            const int top = uniform_int(rng, kMargin, max_top);
            const int left = uniform_int(rng, kMargin, max_left);
            const Box box{top + ink.top, left + ink.left, top + ink.bottom, left + ink.right};
            if (std::any_of(placed.begin(), placed.end(),
                            [&](const Box& b) { return b.overlaps(box, kGap); })) {
                continue;
            }
            placed.push_back(box);
            draw_line(sample.image, text, top, left, scale);
            TextRegion region;
            region.transcript = text;
            region.polygon = {{static_cast<double>(box.top), static_cast<double>(box.left)},
                              {static_cast<double>(box.top), static_cast<double>(box.right)},
                              {static_cast<double>(box.bottom), static_cast<double>(box.right)},
                              {static_cast<double>(box.bottom), static_cast<double>(box.left)}};
            sample.regions.push_back(std::move(region));
            ok = true;
        }
        if (!ok) {
            throw std::runtime_error("layout overflow for spec '" + sample.sample_id + "' (seed " +
                                     std::to_string(spec.seed) + "): cannot place line \"" + text +
                                     "\"");
        }
    }

    box_blur(sample.image, spec.blur_radius);
    if (spec.salt_pepper > 0.0) {
        std::bernoulli_distribution flip(spec.salt_pepper);
        std::bernoulli_distribution salt(0.5);
        for (int r = 0; r < sample.image.height; ++r) {
            for (int c = 0; c < sample.image.width; ++c) {
                if (flip(rng)) {
                    const float v = salt(rng) ? 1.0f : 0.0f;
                    for (int ch = 0; ch < sample.image.channels; ++ch) {
                        sample.image.at(r, c, ch) = v;
                    }
                }
            }
        }
    }
    for (float& v : sample.image.data) {
        v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    }
    return sample;
}

Manifest write_dataset(const std::vector<DocSpec>& specs, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec) {
        throw std::runtime_error("cannot create " + (out_dir / "images").string() + ": " +
                                 ec.message());
    }
    Manifest manifest;
    manifest.annotation_path = out_dir / "annotations.jsonl";
    std::ofstream annotations(manifest.annotation_path, std::ios::trunc);
    if (!annotations) {
        throw std::runtime_error("cannot write " + manifest.annotation_path.string());
    }
    for (const auto& spec : specs) {
        const DocumentSample sample = render_document(spec);
        const std::string relative = "images/" + sample.sample_id + ".png";
        write_png(out_dir / relative, sample.image);
        annotations << sample_record(sample, relative).dump() << '\n';
        manifest.sample_ids.push_back(sample.sample_id);
    }
    if (!annotations) {
        throw std::runtime_error("write failed for " + manifest.annotation_path.string());
    }
    nlohmann::ordered_json summary;
    summary["schema_version"] = manifest.schema_version;
    summary["count"] = manifest.sample_ids.size();
    summary["annotations"] = "annotations.jsonl";
    summary["sample_ids"] = manifest.sample_ids;
    std::ofstream(out_dir / "manifest.json") << summary.dump(2) << '\n';
    return manifest;
}

std::vector<DocSpec> make_specs(std::size_t count, std::uint64_t seed, const ModelConfig& config) {
    std::vector<DocSpec> specs;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        DocSpec spec;
        spec.seed = rng();
        char id[32];
        std::snprintf(id, sizeof(id), "doc_%05zu", i);
        spec.sample_id = id;
        spec.page_height = config.image_height;
        spec.page_width = config.image_width;
        spec.channels = config.image_channels;
        specs.push_back(spec);
    }
    return specs;
}

}  // namespace serum

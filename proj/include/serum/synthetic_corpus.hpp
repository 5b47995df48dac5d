#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "serum/document.hpp"

namespace serum {

/// Field keys of the receipt schema, in ground-truth order.
inline constexpr std::array<const char*, 4> kReceiptSchema{"company", "date", "total", "address"};
inline constexpr int kCorpusSchemaVersion = 1;

/// Parameters of one synthetic receipt page.
struct DocSpec {
    std::uint64_t seed = 0;
    std::string sample_id;  // defaults to "doc_<seed>"
    int page_height = 256;
    int page_width = 256;
    int channels = 3;
    int num_fields = 4;  // random subset of kReceiptSchema kept in schema order, 0..4
    int min_font_scale = 2;
    int max_font_scale = 2;
    int distractor_lines = 2;
    int blur_radius = 0;
    double salt_pepper = 0.0;
};

/// 5x7 bitmap glyph rows (bit 4 is the leftmost column); nullptr for
/// characters the font does not cover.
const std::array<std::uint8_t, 7>* glyph(char c);
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr int kGlyphAdvance = 6;

/// Renders a white page with one "KEY: value" line per field plus distractor
/// lines. Region polygons are the tight ink boxes of each line, captured
/// before noise is applied. Intensities are quantised to multiples of 1/255
/// so the page survives an 8-bit PNG round trip unchanged.
/// Throws std::runtime_error when a line cannot be placed within 100 tries.
DocumentSample render_document(const DocSpec& spec);

struct Manifest {
    std::filesystem::path annotation_path;
    std::vector<std::string> sample_ids;
    int schema_version = kCorpusSchemaVersion;
};

/// Writes images/<id>.png and annotations.jsonl (plus manifest.json) under
/// out_dir. IO failures are reported with the offending path.
Manifest write_dataset(const std::vector<DocSpec>& specs, const std::filesystem::path& out_dir);

/// Deterministic spec list for `count` pages derived from `seed`.
std::vector<DocSpec> make_specs(std::size_t count, std::uint64_t seed, const ModelConfig& config);

}  // namespace serum

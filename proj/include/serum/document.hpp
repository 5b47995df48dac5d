#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serum/config.hpp"
#include "serum/kv_tree.hpp"

namespace serum {

/// Row-major H x W x C intensities in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    float at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    bool operator==(const Image&) const = default;
};

/// Row-major binary mask.
struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}

    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t count() const;
    bool operator==(const Mask&) const = default;
};

/// Polygon vertex in image pixel coordinates; pixel (r, c) spans
/// [r, r+1) x [c, c+1).
struct Point {
    double row = 0.0;
    double col = 0.0;
    bool operator==(const Point&) const = default;
};

struct TextRegion {
    std::vector<Point> polygon;
    std::string transcript;

    /// Rasterises the polygon onto a rows x cols grid covering an
    /// image_height x image_width image: a cell is set when its centre lies
    /// inside the polygon (even-odd rule).
    Mask render_mask(int rows, int cols, int image_height, int image_width) const;
    bool operator==(const TextRegion&) const = default;
};

struct DocumentSample {
    std::string sample_id;
    Image image;
    std::vector<TextRegion> regions;
    KvTree kv_ground_truth;

    /// Union of all region masks at the given grid resolution.
    Mask text_mask(int rows, int cols) const;
};

/// Throws std::invalid_argument when a sample breaks the data invariants:
/// polygons with fewer than 3 points or outside the image, empty
/// transcripts, empty ground-truth leaves.
void validate_sample(const DocumentSample& sample);

bool point_in_polygon(const std::vector<Point>& polygon, double row, double col);

struct RecordError {
    std::size_t line = 0;
    std::string sample_id;
    std::string message;
};

struct LoadResult {
    std::vector<DocumentSample> samples;
    std::vector<RecordError> errors;
};

/// Reads a JSON-Lines annotation file; image paths are relative to it.
/// Images are normalised to [0, 1] and fitted to the config's H x W with an
/// aspect-preserving resize and white bottom/right padding; polygons follow
/// the same transform. Records that fail are reported in `errors` and
/// skipped, preserving the order of the rest. Throws only when the file
/// itself cannot be opened.
LoadResult load_samples(const std::filesystem::path& path, const ModelConfig& config);

/// Like load_samples but throws std::runtime_error on the first bad record.
std::vector<DocumentSample> load_samples_strict(const std::filesystem::path& path,
                                                const ModelConfig& config);

/// Annotation record for one sample (image path relative to the file).
nlohmann::ordered_json sample_record(const DocumentSample& sample, const std::string& image_path);

/// Aspect-preserving resize into height x width, padding with white.
/// Returns the scale applied to coordinates.
double fit_image(const Image& src, int height, int width, int channels, Image& dst);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace serum

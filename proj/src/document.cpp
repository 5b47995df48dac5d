#include "serum/document.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace serum {

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

bool point_in_polygon(const std::vector<Point>& polygon, double row, double col) {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = polygon[i];
        const Point& b = polygon[j];
        if ((a.row > row) != (b.row > row)) {
            const double cross = (b.col - a.col) * (row - a.row) / (b.row - a.row) + a.col;
            if (col < cross) {
                inside = !inside;
            }
        }
    }
    return inside;
}

Mask TextRegion::render_mask(int rows, int cols, int image_height, int image_width) const {
    Mask mask(rows, cols);
    if (polygon.size() < 3) {
        return mask;
    }
    double min_r = polygon[0].row, max_r = polygon[0].row;
    double min_c = polygon[0].col, max_c = polygon[0].col;
    for (const auto& p : polygon) {
        min_r = std::min(min_r, p.row);
        max_r = std::max(max_r, p.row);
        min_c = std::min(min_c, p.col);
        max_c = std::max(max_c, p.col);
    }
    const double cell_h = static_cast<double>(image_height) / rows;
    const double cell_w = static_cast<double>(image_width) / cols;
    for (int r = 0; r < rows; ++r) {
        const double y = (r + 0.5) * cell_h;
        if (y < min_r || y > max_r) {
            continue;
        }
        for (int c = 0; c < cols; ++c) {
            const double x = (c + 0.5) * cell_w;
            if (x >= min_c && x <= max_c && point_in_polygon(polygon, y, x)) {
                mask.at(r, c) = 1;
            }
        }
    }
    return mask;
}

Mask DocumentSample::text_mask(int rows, int cols) const {
    Mask out(rows, cols);
    for (const auto& region : regions) {
        const Mask m = region.render_mask(rows, cols, image.height, image.width);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] |= m.data[i];
        }
    }
    return out;
}

void validate_sample(const DocumentSample& sample) {
    for (std::size_t i = 0; i < sample.regions.size(); ++i) {
        const auto& region = sample.regions[i];
        const std::string where = "region " + std::to_string(i);
        if (region.polygon.size() < 3) {
            throw std::invalid_argument(where + ": polygon has " +
                                        std::to_string(region.polygon.size()) +
                                        " points, need at least 3");
        }
        for (const auto& p : region.polygon) {
            if (!std::isfinite(p.row) || !std::isfinite(p.col) || p.row < 0 || p.col < 0 ||
                p.row > sample.image.height || p.col > sample.image.width) {
                throw std::invalid_argument(where + ": polygon point (" + std::to_string(p.row) +
                                            ", " + std::to_string(p.col) +
                                            ") lies outside the image");
            }
        }
        if (region.transcript.empty()) {
            throw std::invalid_argument(where + ": empty transcript");
        }
    }
    for (const auto& [path, value] : kv_flatten(sample.kv_ground_truth)) {
        if (value.empty()) {
            throw std::invalid_argument("ground-truth value for '" + path + "' is empty");
        }
    }
}

double fit_image(const Image& src, int height, int width, int channels, Image& dst) {
    dst = Image(height, width, channels, 1.0f);
    if (src.height <= 0 || src.width <= 0) {
        throw std::invalid_argument("cannot resize an empty image");
    }
    const double scale = std::min(static_cast<double>(height) / src.height,
                                  static_cast<double>(width) / src.width);
    const int out_h = std::clamp(static_cast<int>(std::lround(src.height * scale)), 1, height);
    const int out_w = std::clamp(static_cast<int>(std::lround(src.width * scale)), 1, width);

    auto sample_channel = [&](int r, int c, int ch) -> float {
        if (src.channels == 1) {
            return src.at(r, c, 0);
        }
        if (channels == 1) {
            float sum = 0.0f;
            const int colour = std::min(src.channels, 3);
            for (int k = 0; k < colour; ++k) {
                sum += src.at(r, c, k);
            }
            return sum / static_cast<float>(colour);
        }
        return src.at(r, c, std::min(ch, std::min(src.channels, 3) - 1));
    };

    const bool identity = out_h == src.height && out_w == src.width;
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            for (int ch = 0; ch < channels; ++ch) {
                if (identity) {
                    dst.at(r, c, ch) = sample_channel(r, c, ch);
                    continue;
                }
                // Bilinear sample at the source position of this pixel centre.
                const double y = std::clamp((r + 0.5) / scale - 0.5, 0.0, src.height - 1.0);
                const double x = std::clamp((c + 0.5) / scale - 0.5, 0.0, src.width - 1.0);
                const int y0 = static_cast<int>(std::floor(y));
                const int x0 = static_cast<int>(std::floor(x));
                const int y1 = std::min(y0 + 1, src.height - 1);
                const int x1 = std::min(x0 + 1, src.width - 1);
                const double fy = y - y0;
                const double fx = x - x0;
                const double v = (1 - fy) * ((1 - fx) * sample_channel(y0, x0, ch) +
                                             fx * sample_channel(y0, x1, ch)) +
                                 fy * ((1 - fx) * sample_channel(y1, x0, ch) +
                                       fx * sample_channel(y1, x1, ch));
                dst.at(r, c, ch) = static_cast<float>(v);
            }
        }
    }
    return identity ? 1.0 : scale;
}

nlohmann::ordered_json sample_record(const DocumentSample& sample, const std::string& image_path) {
    nlohmann::ordered_json regions = nlohmann::ordered_json::array();
    for (const auto& region : sample.regions) {
        nlohmann::ordered_json polygon = nlohmann::ordered_json::array();
        for (const auto& p : region.polygon) {
            polygon.push_back({p.row, p.col});
        }
        regions.push_back({{"polygon", polygon}, {"text", region.transcript}});
    }
    nlohmann::ordered_json record;
    record["id"] = sample.sample_id;
    record["image"] = image_path;
    record["regions"] = regions;
    record["kv"] = kv_to_json(sample.kv_ground_truth);
    return record;
}

namespace {

DocumentSample parse_record(const nlohmann::ordered_json& record,
                            const std::filesystem::path& base_dir, const ModelConfig& config) {
    DocumentSample sample;
    sample.sample_id = record.at("id").get<std::string>();
    const auto image_path = base_dir / record.at("image").get<std::string>();
    if (!std::filesystem::exists(image_path)) {
        throw std::runtime_error("missing image file " + image_path.string());
    }
    const Image raw = read_png(image_path);
    const double scale = fit_image(raw, config.image_height, config.image_width,
                                   config.image_channels, sample.image);

    for (const auto& r : record.at("regions")) {
        TextRegion region;
        region.transcript = r.at("text").get<std::string>();
        for (const auto& p : r.at("polygon")) {
            if (!p.is_array() || p.size() != 2) {
                throw std::invalid_argument("polygon point must be a [row, col] pair");
            }
            region.polygon.push_back(Point{p[0].get<double>() * scale, p[1].get<double>() * scale});
        }
        sample.regions.push_back(std::move(region));
    }
    sample.kv_ground_truth = kv_from_json(record.at("kv"));
    validate_sample(sample);
    return sample;
}

}  // namespace

LoadResult load_samples(const std::filesystem::path& path, const ModelConfig& config) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open annotation file " + path.string());
    }
    const auto base_dir = path.parent_path();
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::string id;
        try {
            const auto record = nlohmann::ordered_json::parse(line);
            if (record.contains("id") && record["id"].is_string()) {
                id = record["id"].get<std::string>();
            }
            result.samples.push_back(parse_record(record, base_dir, config));
        } catch (const std::exception& e) {
            result.errors.push_back(RecordError{line_no, id, e.what()});
        }
    }
    return result;
}

std::vector<DocumentSample> load_samples_strict(const std::filesystem::path& path,
                                                const ModelConfig& config) {
    LoadResult result = load_samples(path, config);
    if (!result.errors.empty()) {
        const auto& e = result.errors.front();
        throw std::runtime_error(path.string() + ":" + std::to_string(e.line) + " record '" +
                                 e.sample_id + "': " + e.message);
    }
    return std::move(result.samples);
}

}  // namespace serum

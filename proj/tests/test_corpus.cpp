#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "serum/document.hpp"
#include "serum/synthetic_corpus.hpp"
#include "support.hpp"

using namespace serum;

namespace {

bool inked(const Image& img, int r, int c) { return img.at(r, c, 0) < 1.0f; }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("empty spec renders a blank page") {
    DocSpec spec;
    spec.num_fields = 0;
    spec.distractor_lines = 0;
    const auto doc = render_document(spec);
    CHECK(doc.regions.empty());
    CHECK(doc.kv_ground_truth.empty());
    for (float v : doc.image.data) {
        CHECK(v == 1.0f);
    }
}

TEST_CASE("rendering is deterministic") {
    const auto specs = make_specs(4, 99, ModelConfig::toy());
    CHECK(make_specs(4, 99, ModelConfig::toy()).size() == 4);
    for (const auto& spec : specs) {
        const auto a = render_document(spec);
        const auto b = render_document(spec);
        CHECK(a.image == b.image);
        CHECK(a.regions == b.regions);
        CHECK(a.kv_ground_truth == b.kv_ground_truth);
        CHECK_NOTHROW(validate_sample(a));
    }
}

TEST_CASE("a single field line holds its value and every inked pixel") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DocSpec spec;
        spec.seed = seed;
        spec.num_fields = 1;
        spec.distractor_lines = 0;
        const auto doc = render_document(spec);
        REQUIRE(doc.regions.size() == 1);
        REQUIRE(doc.kv_ground_truth.size() == 1);
        CHECK(doc.regions[0].transcript.find(doc.kv_ground_truth[0].leaf()) != std::string::npos);
        const Mask m = doc.regions[0].render_mask(256, 256, 256, 256);
        for (int r = 0; r < 256; ++r) {
            for (int c = 0; c < 256; ++c) {
                if (inked(doc.image, r, c)) {
                    CHECK(m.at(r, c) == 1);
                }
            }
        }
    }
}

TEST_CASE("region boxes are disjoint, cover all ink and are tight") {
    for (const auto& spec : make_specs(10, 4, ModelConfig::toy())) {
        const auto doc = render_document(spec);
        std::vector<Mask> masks;
        for (const auto& region : doc.regions) {
            masks.push_back(region.render_mask(256, 256, 256, 256));
        }
        for (int r = 0; r < 256; ++r) {
            for (int c = 0; c < 256; ++c) {
                int owners = 0;
                for (const auto& m : masks) {
                    owners += m.at(r, c);
                }
                CHECK(owners <= 1);
                if (inked(doc.image, r, c)) {
                    CHECK(owners == 1);
                }
            }
        }
        // Pixel-threshold oracle: the ink bounding box inside each region equals the region.
        for (std::size_t i = 0; i < masks.size(); ++i) {
            int top = 256, left = 256, bottom = -1, right = -1;
            for (int r = 0; r < 256; ++r) {
                for (int c = 0; c < 256; ++c) {
                    if (masks[i].at(r, c) && inked(doc.image, r, c)) {
                        top = std::min(top, r);
                        left = std::min(left, c);
                        bottom = std::max(bottom, r);
                        right = std::max(right, c);
                    }
                }
            }
            const auto& poly = doc.regions[i].polygon;
            CHECK(top == static_cast<int>(poly[0].row));
            CHECK(left == static_cast<int>(poly[0].col));
            CHECK(bottom + 1 == static_cast<int>(poly[2].row));
            CHECK(right + 1 == static_cast<int>(poly[2].col));
        }
    }
}

TEST_CASE("field keys are unique and follow the schema") {
    for (const auto& spec : make_specs(30, 8, ModelConfig::toy())) {
        const auto doc = render_document(spec);
        std::vector<std::string> keys;
        for (const auto& node : doc.kv_ground_truth) {
            keys.push_back(node.key);
        }
        std::size_t pos = 0;
        for (const auto& k : keys) {
            while (pos < kReceiptSchema.size() && k != kReceiptSchema[pos]) {
                ++pos;
            }
            CHECK(pos < kReceiptSchema.size());
            ++pos;
        }
        for (const auto& node : doc.kv_ground_truth) {
            int rendered = 0;
            for (const auto& region : doc.regions) {
                std::string label = node.key;
                for (auto& ch : label) {
                    ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                }
                rendered += region.transcript == label + ": " + node.leaf();
            }
            CHECK(rendered == 1);
        }
    }
}

TEST_CASE("write_dataset handles zero specs and is reproducible") {
    const auto root = std::filesystem::temp_directory_path() / "serum_test_corpus";
    std::filesystem::remove_all(root);
    const auto empty = write_dataset({}, root / "empty");
    CHECK(empty.sample_ids.empty());
    CHECK(std::filesystem::exists(empty.annotation_path));
    CHECK(std::filesystem::file_size(empty.annotation_path) == 0);

    const auto specs = make_specs(3, 12, ModelConfig::toy());
    const auto a = write_dataset(specs, root / "a");
    const auto b = write_dataset(specs, root / "b");
    CHECK(a.sample_ids.size() == 3);
    CHECK(a.sample_ids == b.sample_ids);
    CHECK(slurp(a.annotation_path) == slurp(b.annotation_path));
    CHECK(slurp(root / "a" / "manifest.json") == slurp(root / "b" / "manifest.json"));
    for (const auto& id : a.sample_ids) {
        CHECK(slurp(root / "a" / "images" / (id + ".png")) ==
              slurp(root / "b" / "images" / (id + ".png")));
    }
}

TEST_CASE("noise is applied after the annotation is captured") {
    auto spec = make_specs(1, 3, ModelConfig::toy()).front();
    const auto clean = render_document(spec);
    spec.blur_radius = 1;
    spec.salt_pepper = 0.01;
    const auto noisy = render_document(spec);
    CHECK(noisy.regions == clean.regions);
    CHECK(noisy.kv_ground_truth == clean.kv_ground_truth);
    CHECK_FALSE(noisy.image == clean.image);
}

TEST_CASE("a 500-document corpus renders within a minute") {
    const auto start = std::chrono::steady_clock::now();
    std::size_t regions = 0;
    for (const auto& spec : make_specs(500, 1, ModelConfig::toy())) {
        regions += render_document(spec).regions.size();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(regions > 0);
    CHECK(seconds < 60.0);
}

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "serum/document.hpp"

namespace serum {

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + png.message);
    }
    const bool colour = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = colour ? 3 : 1;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + message);
    }
    Image image(static_cast<int>(png.height), static_cast<int>(png.width), channels);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        image.data[i] = static_cast<float>(buffer[i]) / 255.0f;
    }
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw std::invalid_argument("write_png supports 1 or 3 channels, got " +
                                    std::to_string(image.channels));
    }
    std::vector<png_byte> buffer(image.data.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const float v = std::clamp(image.data[i], 0.0f, 1.0f);
        buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + png.message);
    }
}

}  // namespace serum

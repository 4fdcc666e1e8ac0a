#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pconet {

class ImageDecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decoded 8-bit image, interleaved rows, 1..4 channels.
struct RawImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

enum class ImageFormat { Png, Jpeg, Bmp };

/// Format from the file's leading bytes, or nullopt when unrecognised.
std::optional<ImageFormat> sniff_image_format(const std::filesystem::path& path);

/// PNG, JPEG or uncompressed BMP (8-bit palette, 24- or 32-bit).
/// Throws ImageDecodeError naming the path on any failure.
RawImage decode_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG with 1, 3 or 4 channels.
void write_png(const std::filesystem::path& path, const RawImage& image);

}  // namespace pconet

#include "pconet/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <jpeglib.h>
#include <png.h>

namespace pconet {
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageDecodeError(path.string() + ": cannot open");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<ImageFormat> sniff(const std::uint8_t* p, std::size_t n) {
    static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (n >= 8 && std::memcmp(p, png_sig, 8) == 0) return ImageFormat::Png;
    if (n >= 3 && p[0] == 0xFF && p[1] == 0xD8 && p[2] == 0xFF) return ImageFormat::Jpeg;
    if (n >= 2 && p[0] == 'B' && p[1] == 'M') return ImageFormat::Bmp;
    return std::nullopt;
}

RawImage decode_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw ImageDecodeError(path.string() + ": " + img.message);

    RawImage out;
    const bool alpha = img.format & PNG_FORMAT_FLAG_ALPHA;
    const bool color = img.format & PNG_FORMAT_FLAG_COLOR;
    img.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
    out.width = img.width;
    out.height = img.height;
    out.channels = PNG_IMAGE_PIXEL_CHANNELS(img.format);
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ImageDecodeError(path.string() + ": " + msg);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// No objects with destructors may live in this frame: libjpeg reports errors
// through longjmp.
bool decode_jpeg_raw(const std::uint8_t* data, std::size_t size, RawImage* out, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::strcpy(message, err.message);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out->width = cinfo.output_width;
    out->height = cinfo.output_height;
    out->channels = static_cast<std::size_t>(cinfo.output_components);
    out->pixels.resize(out->width * out->height * out->channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out->width * out->channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

RawImage decode_jpeg(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
    RawImage out;
    char message[JMSG_LENGTH_MAX] = {};
    if (!decode_jpeg_raw(bytes.data(), bytes.size(), &out, message))
        throw ImageDecodeError(path.string() + ": " + message);
    return out;
}

std::uint32_t le32(const std::uint8_t* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

RawImage decode_bmp(const std::vector<std::uint8_t>& b, const fs::path& path) {
    auto fail = [&](const std::string& why) { return ImageDecodeError(path.string() + ": BMP " + why); };
    if (b.size() < 54) throw fail("header truncated");
    const std::uint32_t data_offset = le32(&b[10]);
    const std::uint32_t dib_size = le32(&b[14]);
    if (dib_size < 40) throw fail("unsupported DIB header");
    const auto width = static_cast<std::int32_t>(le32(&b[18]));
    const auto height = static_cast<std::int32_t>(le32(&b[22]));
    const std::uint16_t bpp = le16(&b[28]);
    const std::uint32_t compression = le32(&b[30]);
    if (width <= 0 || height == 0) throw fail("has zero area");
    if (compression != 0 && !(compression == 3 && bpp == 32)) throw fail("compression not supported");
    if (bpp != 8 && bpp != 24 && bpp != 32) throw fail("bit depth " + std::to_string(bpp) + " not supported");

    const bool top_down = height < 0;
    const std::size_t w = static_cast<std::size_t>(width);
    const std::size_t h = static_cast<std::size_t>(top_down ? -static_cast<std::int64_t>(height) : height);
    const std::size_t stride = (w * bpp / 8 + 3) & ~std::size_t{3};
    if (data_offset + stride * h > b.size()) throw fail("pixel data truncated");

    std::vector<std::uint8_t> palette;
    if (bpp == 8) {
        std::uint32_t colors = le32(&b[46]);
        if (colors == 0) colors = 256;
        const std::size_t start = 14 + dib_size;
        if (start + colors * 4 > data_offset) throw fail("palette truncated");
        palette.assign(b.begin() + static_cast<std::ptrdiff_t>(start),
                       b.begin() + static_cast<std::ptrdiff_t>(start + colors * 4));
    }

    RawImage out{w, h, 3, std::vector<std::uint8_t>(w * h * 3)};
    for (std::size_t y = 0; y < h; ++y) {
        const std::uint8_t* row = &b[data_offset + (top_down ? y : h - 1 - y) * stride];
        std::uint8_t* dst = &out.pixels[y * w * 3];
        for (std::size_t x = 0; x < w; ++x, dst += 3) {
            const std::uint8_t* px;
            if (bpp == 8) {
                const std::size_t idx = row[x] * 4u;
                if (idx + 3 > palette.size()) throw fail("palette index out of range");
                px = &palette[idx];
            } else {
                px = row + x * (bpp / 8);
            }
            dst[0] = px[2];  // stored BGR(A)
            dst[1] = px[1];
            dst[2] = px[0];
        }
    }
    return out;
}

}  // namespace

std::optional<ImageFormat> sniff_image_format(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::uint8_t head[8] = {};
    in.read(reinterpret_cast<char*>(head), sizeof head);
    return sniff(head, static_cast<std::size_t>(in.gcount()));
}

RawImage decode_image(const fs::path& path) {
    const auto bytes = read_file(path);
    const auto format = sniff(bytes.data(), bytes.size());
    if (!format) throw ImageDecodeError(path.string() + ": not a PNG, JPEG or BMP file");
    RawImage img;
    switch (*format) {
        case ImageFormat::Png: img = decode_png(bytes, path); break;
        case ImageFormat::Jpeg: img = decode_jpeg(bytes, path); break;
        case ImageFormat::Bmp: img = decode_bmp(bytes, path); break;
    }
    if (img.width == 0 || img.height == 0) throw ImageDecodeError(path.string() + ": image has zero area");
    return img;
}

void write_png(const fs::path& path, const RawImage& image) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    switch (image.channels) {
        case 1: img.format = PNG_FORMAT_GRAY; break;
        case 3: img.format = PNG_FORMAT_RGB; break;
        case 4: img.format = PNG_FORMAT_RGBA; break;
        default: throw std::invalid_argument("write_png: unsupported channel count");
    }
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw std::runtime_error(path.string() + ": " + img.message);
}

}  // namespace pconet

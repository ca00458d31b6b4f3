#include "volsr/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <vector>

#include "volsr/errors.hpp"

namespace volsr {

void write_gray8_png(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels) {
    if (width <= 0 || height <= 0)
        throw ValidationError("png dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw ValidationError("png pixel count does not match dimensions");

    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng write failed: " + path.string());
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace volsr

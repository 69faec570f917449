#include "smr/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "smr/errors.hpp"

namespace smr {

std::vector<std::string> write_png_slices(const RgbVolume& vol, const std::string& prefix) {
    int width = vol.dims.x, height = vol.dims.y;
    int digits = std::max(3, int(std::to_string(vol.dims.z - 1).size()));
    std::vector<std::string> paths;
    paths.reserve(std::size_t(vol.dims.z));

    for (int z = 0; z < vol.dims.z; ++z) {
        std::string idx = std::to_string(z);
        std::string path = prefix + "_z" + std::string(std::size_t(digits) - idx.size(), '0') +
                           idx + ".png";

        std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"),
                                                           &std::fclose);
        if (!fp) throw DataError("png: cannot open " + path + " for writing");

        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw DataError("png: cannot allocate write structures");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw DataError("png: write failed for " + path);
        }

        png_init_io(png, fp.get());
        png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        std::vector<png_byte> row(std::size_t(width) * 3);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = std::clamp(vol.at(c, x, y, z), 0.0, 1.0);
                    row[std::size_t(x) * 3 + std::size_t(c)] =
                        png_byte(std::lround(v * 255.0));
                }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
        paths.push_back(path);
    }
    return paths;
}

} // namespace smr

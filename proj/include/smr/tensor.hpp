#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace smr {

/// (batch, channels, z, y, x), x fastest. Convolution weights reuse the same
/// carrier as (out_ch, in_ch, kz, ky, kx).
struct Shape5 {
    int n = 1, c = 1, z = 1, y = 1, x = 1;

    std::int64_t count() const {
        return std::int64_t(n) * c * std::int64_t(z) * y * x;
    }
    std::int64_t spatial() const { return std::int64_t(z) * y * x; }
    bool operator==(const Shape5&) const = default;
};

struct Tensor5 {
    Shape5 shape;
    std::vector<double> data;

    Tensor5() = default;
    explicit Tensor5(Shape5 s) : shape(s), data(std::size_t(s.count()), 0.0) {}

    static Tensor5 zeros(Shape5 s) { return Tensor5(s); }
    static Tensor5 full(Shape5 s, double v);
    static Tensor5 randn(Shape5 s, double stddev, std::mt19937_64& rng);

    std::int64_t index(int in, int ic, int iz, int iy, int ix) const {
        return (((std::int64_t(in) * shape.c + ic) * shape.z + iz) * shape.y + iy) *
                   shape.x +
               ix;
    }
    double& at(int in, int ic, int iz, int iy, int ix) {
        return data[std::size_t(index(in, ic, iz, iy, ix))];
    }
    double at(int in, int ic, int iz, int iy, int ix) const {
        return data[std::size_t(index(in, ic, iz, iy, ix))];
    }

    /// Throws DataError on shape/data length mismatch or non-finite values.
    void check() const;
};

} // namespace smr

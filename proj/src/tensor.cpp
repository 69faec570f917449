#include "smr/tensor.hpp"

#include <cmath>

#include "smr/errors.hpp"

namespace smr {

Tensor5 Tensor5::full(Shape5 s, double v) {
    Tensor5 t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor5 Tensor5::randn(Shape5 s, double stddev, std::mt19937_64& rng) {
    Tensor5 t(s);
    std::normal_distribution<double> nd(0.0, stddev);
    for (double& v : t.data) v = nd(rng);
    return t;
}

void Tensor5::check() const {
    if (shape.n < 1 || shape.c < 1 || shape.z < 1 || shape.y < 1 || shape.x < 1)
        throw DataError("Tensor5: non-positive shape");
    if (std::int64_t(data.size()) != shape.count())
        throw DataError("Tensor5: data length does not match shape");
    for (double v : data)
        if (!std::isfinite(v)) throw DataError("Tensor5: non-finite value");
}

} // namespace smr

#pragma once

#include <vector>

#include "smr/volume.hpp"

namespace smr {

/// In-place separable orthonormal DCT-II along each axis of an x-fastest
/// row-major volume, and its exact inverse (DCT-III with the same
/// normalization). Both preserve the L2 norm.
void dct3(std::vector<double>& data, Dims3 dims);
void idct3(std::vector<double>& data, Dims3 dims);

/// Complex volumes transform real and imaginary parts independently.
ComplexVolume dct3(const ComplexVolume& v);
ComplexVolume idct3(const ComplexVolume& v);

} // namespace smr

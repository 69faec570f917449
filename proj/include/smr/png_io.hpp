#pragma once

#include <string>
#include <vector>

#include "smr/codec.hpp"

namespace smr {

/// Writes one 8-bit RGB PNG per z-slice of `vol`, named
/// `<prefix>_z<index>.png` (zero-padded index). Returns the written paths.
/// Channel values are clamped to [0, 1] before quantization.
std::vector<std::string> write_png_slices(const RgbVolume& vol, const std::string& prefix);

} // namespace smr

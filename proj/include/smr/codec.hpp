#pragma once

#include <map>
#include <string>
#include <vector>

#include "smr/volume.hpp"

namespace smr {

/// Amplitude-scaled RGB rendering of one complex volume. Channels are stored
/// planar (all R, then all G, then all B), each plane x-fastest row-major, so
/// a volume maps directly onto a (channel, z, y, x) tensor sample.
struct RgbVolume {
    Dims3 dims;
    std::vector<double> data; // 3 * voxel_count, values in [0, 1]
    double amp_scale = 1.0;   // amplitude mapped to channel magnitude 1
    std::map<std::string, std::string> meta;

    static RgbVolume zeros(Dims3 d);

    std::int64_t index(int c, int x, int y, int z) const {
        return ((std::int64_t(c) * dims.z + z) * dims.y + y) * dims.x + x;
    }
    double& at(int c, int x, int y, int z) { return data[index(c, x, y, z)]; }
    double at(int c, int x, int y, int z) const { return data[index(c, x, y, z)]; }

    /// Throws DataError on bad dims/length, non-finite or out-of-[0,1] values,
    /// or a non-positive amp_scale.
    void validate() const;
};

/// Phase -> hue on [0, 360): 0 at phase 0, counter-clockwise positive, then
/// hue -> RGB via the standard HSV sector formula at S = V = 1, and the triple
/// scaled by |value| / amp_scale with amp_scale = max |value| over the volume.
/// An all-zero volume gets amp_scale 1 and meta["amp_scale_defaulted"] = "1".
RgbVolume encode(const ComplexVolume& v);

/// Inverse of encode. Channels are clamped to [0, 1] first; amplitude is
/// max(R,G,B) * amp_scale, phase comes from the hue of the max-normalized
/// triple. Zero triples decode to 0.
ComplexVolume decode(const RgbVolume& r);

/// encode with a caller-chosen amplitude scale, returning the raw channel
/// planes without the [0, 1] invariant. Used to encode a reference volume in
/// the scale of another (values may exceed 1 when amp_scale is too small).
std::vector<double> encode_channels(const ComplexVolume& v, double amp_scale);

/// decode for raw channel planes laid out like RgbVolume::data; clamps to
/// [0, 1] before inversion.
ComplexVolume decode_channels(const std::vector<double>& channels, Dims3 dims,
                              double amp_scale);

} // namespace smr

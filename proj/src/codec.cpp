#include "smr/codec.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "smr/errors.hpp"

namespace smr {
namespace {

constexpr double kPi = 3.14159265358979323846;

/// Hue in degrees [0, 360) -> unit RGB at S = V = 1 (sector formula).
void hue_to_rgb(double hue, double& r, double& g, double& b) {
    double hp = hue / 60.0;
    double x = 1.0 - std::abs(std::fmod(hp, 2.0) - 1.0);
    switch (int(hp) % 6) {
        case 0: r = 1; g = x; b = 0; break;
        case 1: r = x; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = x; break;
        case 3: r = 0; g = x; b = 1; break;
        case 4: r = x; g = 0; b = 1; break;
        default: r = 1; g = 0; b = x; break;
    }
}

/// Max-normalized RGB triple (max channel exactly 1) -> hue in degrees.
double rgb_to_hue(double r, double g, double b) {
    double maxc = std::max({r, g, b});
    double minc = std::min({r, g, b});
    double delta = maxc - minc;
    if (delta <= 0.0) return 0.0;
    double h;
    if (maxc == r)
        h = std::fmod((g - b) / delta + 6.0, 6.0);
    else if (maxc == g)
        h = (b - r) / delta + 2.0;
    else
        h = (r - g) / delta + 4.0;
    return h * 60.0;
}

} // namespace

RgbVolume RgbVolume::zeros(Dims3 d) {
    RgbVolume r;
    r.dims = d;
    r.data.assign(std::size_t(3 * d.product()), 0.0);
    return r;
}

void RgbVolume::validate() const {
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
        throw DataError("RgbVolume: non-positive dims");
    if (std::int64_t(data.size()) != 3 * dims.product())
        throw DataError("RgbVolume: data length does not match dims");
    if (!(amp_scale > 0.0) || !std::isfinite(amp_scale))
        throw DataError("RgbVolume: amp_scale must be positive and finite");
    for (double v : data)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw DataError("RgbVolume: channel value outside [0, 1]");
}

RgbVolume encode(const ComplexVolume& v) {
    v.validate();
    RgbVolume out = RgbVolume::zeros(v.dims);
    double amp_scale = v.max_abs();
    if (amp_scale == 0.0) {
        amp_scale = 1.0;
        out.meta["amp_scale_defaulted"] = "1";
    }
    out.amp_scale = amp_scale;
    out.data = encode_channels(v, amp_scale);
    return out;
}

std::vector<double> encode_channels(const ComplexVolume& v, double amp_scale) {
    if (!(amp_scale > 0.0) || !std::isfinite(amp_scale))
        throw DataError("encode_channels: amp_scale must be positive and finite");
    std::size_t n = v.data.size();
    std::vector<double> out(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double amp = std::abs(v.data[i]);
        if (amp == 0.0) continue;
        double hue = std::arg(v.data[i]) * 180.0 / kPi;
        if (hue < 0.0) hue += 360.0;
        double r, g, b;
        hue_to_rgb(hue, r, g, b);
        double scale = amp / amp_scale;
        out[i] = r * scale;
        out[n + i] = g * scale;
        out[2 * n + i] = b * scale;
    }
    return out;
}

ComplexVolume decode(const RgbVolume& r) {
    r.validate();
    ComplexVolume out = decode_channels(r.data, r.dims, r.amp_scale);
    return out;
}

ComplexVolume decode_channels(const std::vector<double>& channels, Dims3 dims,
                              double amp_scale) {
    if (!(amp_scale > 0.0) || !std::isfinite(amp_scale))
        throw DataError("decode_channels: amp_scale must be positive and finite");
    std::size_t n = std::size_t(dims.product());
    if (channels.size() != 3 * n)
        throw DataError("decode_channels: channel length does not match dims");
    ComplexVolume out = ComplexVolume::zeros(dims);
    auto clamp01 = [](double x) { return std::clamp(std::isfinite(x) ? x : 0.0, 0.0, 1.0); };
    for (std::size_t i = 0; i < n; ++i) {
        double r = clamp01(channels[i]);
        double g = clamp01(channels[n + i]);
        double b = clamp01(channels[2 * n + i]);
        double maxc = std::max({r, g, b});
        if (maxc == 0.0) continue;
        double hue = rgb_to_hue(r / maxc, g / maxc, b / maxc);
        double phase = hue > 180.0 ? (hue - 360.0) * kPi / 180.0 : hue * kPi / 180.0;
        out.data[i] = std::polar(maxc * amp_scale, phase);
    }
    return out;
}

} // namespace smr

#include "smr/mdf.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "smr/errors.hpp"
#include "smr/hdf5_file.hpp"

namespace smr {
namespace {

[[noreturn]] void missing(const std::string& field) {
    throw DataError("mdf ingest: missing required field " + field);
}

std::int64_t read_scalar_int(const h5::File& f, const std::string& path) {
    std::vector<std::int64_t> v = f.read_int(path);
    if (v.empty()) missing(path);
    return v[0];
}

double read_scalar_double(const h5::File& f, const std::string& path) {
    std::vector<double> v = f.read_double(path);
    if (v.empty()) missing(path);
    return v[0];
}

/// Spectra of every frame, frame/channel/frequency indexed regardless of the
/// on-disk orientation. isTransposed swaps the frame axis to the back.
struct Spectra {
    std::vector<cplx> data;
    std::size_t frames = 0, channels = 0, freqs = 0;
    bool transposed = false;

    cplx at(std::size_t frame, std::size_t ch, std::size_t k) const {
        if (transposed) return data[(k * channels + ch) * frames + frame];
        return data[(frame * channels + ch) * freqs + k];
    }
};

Spectra load_spectra(const h5::File& f) {
    if (!f.exists("/measurement/data")) missing("/measurement/data");
    if (!f.exists("/measurement/isFourierTransformed"))
        missing("/measurement/isFourierTransformed");
    if (read_scalar_int(f, "/measurement/isFourierTransformed") != 1)
        throw DataError("mdf ingest: /measurement/isFourierTransformed must be 1 "
                        "(time-domain data is not supported)");

    Spectra s;
    std::vector<hsize_t> shape;
    s.data = f.read_complex("/measurement/data", shape);
    if (shape.size() != 3)
        throw DataError("mdf ingest: /measurement/data must be rank 3 "
                        "(frames x channels x frequencies), got rank " +
                        std::to_string(shape.size()));

    s.transposed = f.exists("/measurement/isTransposed") &&
                   read_scalar_int(f, "/measurement/isTransposed") == 1;
    if (s.transposed) {
        s.freqs = shape[0];
        s.channels = shape[1];
        s.frames = shape[2];
    } else {
        s.frames = shape[0];
        s.channels = shape[1];
        s.freqs = shape[2];
    }
    return s;
}

/// Frequency axis k -> k * bandwidth / (J/2), the rFFT bin spacing for J
/// time samples over a receive bandwidth equal to half the sampling rate.
std::vector<double> frequency_axis(const h5::File& f, std::size_t freqs) {
    if (!f.exists("/acquisition/receiver/numSamplingPoints"))
        missing("/acquisition/receiver/numSamplingPoints");
    if (!f.exists("/acquisition/receiver/bandwidth"))
        missing("/acquisition/receiver/bandwidth");
    std::int64_t J = read_scalar_int(f, "/acquisition/receiver/numSamplingPoints");
    double bandwidth = read_scalar_double(f, "/acquisition/receiver/bandwidth");
    if (J < 2) throw DataError("mdf ingest: numSamplingPoints must be >= 2");
    if (std::size_t(J / 2 + 1) < freqs)
        throw DataError("mdf ingest: " + std::to_string(freqs) +
                        " frequency bins inconsistent with numSamplingPoints " +
                        std::to_string(J));
    std::vector<double> freq(freqs);
    for (std::size_t k = 0; k < freqs; ++k)
        freq[k] = double(k) * bandwidth / (double(J) / 2.0);
    return freq;
}

std::vector<bool> background_mask(const h5::File& f, std::size_t frames) {
    std::vector<bool> bg(frames, false);
    if (!f.exists("/measurement/isBackgroundFrame")) return bg;
    std::vector<std::int64_t> raw = f.read_int("/measurement/isBackgroundFrame");
    if (raw.size() != frames)
        throw DataError("mdf ingest: isBackgroundFrame has " + std::to_string(raw.size()) +
                        " entries for " + std::to_string(frames) + " frames");
    for (std::size_t i = 0; i < frames; ++i) bg[i] = raw[i] != 0;
    return bg;
}

/// Stored-frame index for each ordered slot. framePermutation entries are
/// 1-based; permutation is applied before background frames are dropped when
/// it covers all frames, after when it covers only foreground frames.
std::vector<std::size_t> ordered_foreground_frames(const h5::File& f, std::size_t frames,
                                                   const std::vector<bool>& bg) {
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < frames; ++i)
        if (!bg[i]) fg.push_back(i);

    if (!f.exists("/measurement/framePermutation")) return fg;
    std::vector<std::int64_t> perm = f.read_int("/measurement/framePermutation");

    auto as_index = [&](std::int64_t p, std::size_t limit) -> std::size_t {
        if (p < 1 || std::size_t(p) > limit)
            throw DataError("mdf ingest: framePermutation entry " + std::to_string(p) +
                            " outside 1.." + std::to_string(limit));
        return std::size_t(p - 1);
    };

    std::vector<std::size_t> out;
    if (perm.size() == frames) {
        for (std::int64_t p : perm) {
            std::size_t stored = as_index(p, frames);
            if (!bg[stored]) out.push_back(stored);
        }
    } else if (perm.size() == fg.size()) {
        for (std::int64_t p : perm) out.push_back(fg[as_index(p, fg.size())]);
    } else {
        throw DataError("mdf ingest: framePermutation has " + std::to_string(perm.size()) +
                        " entries for " + std::to_string(frames) + " frames (" +
                        std::to_string(fg.size()) + " foreground)");
    }

    std::vector<std::size_t> sorted = out;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DataError("mdf ingest: framePermutation repeats a frame");
    return out;
}

/// Acquisition order of grid position (x,y,z) on a meandering robot path:
/// z planes in order, row direction alternating per plane, column direction
/// alternating per traversed row.
std::size_t meander_sequence(int x, int y, int z, Dims3 d) {
    int row = (z % 2 == 0) ? y : d.y - 1 - y;
    int col = (row % 2 == 0) ? x : d.x - 1 - x;
    return (std::size_t(z) * d.y + row) * d.x + col;
}

} // namespace

SystemMatrix ingest_mdf_system_matrix(const std::string& path) {
    h5::File f(path, h5::File::Mode::read);
    Spectra sp = load_spectra(f);
    std::vector<double> freq_axis = frequency_axis(f, sp.freqs);

    if (!f.exists("/calibration/size")) missing("/calibration/size");
    std::vector<std::int64_t> size = f.read_int("/calibration/size");
    if (size.size() != 3)
        throw DataError("mdf ingest: /calibration/size must have 3 entries");
    Dims3 dims{int(size[0]), int(size[1]), int(size[2])};
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
        throw DataError("mdf ingest: non-positive /calibration/size");

    std::vector<bool> bg = background_mask(f, sp.frames);
    std::vector<std::size_t> frame_of_slot = ordered_foreground_frames(f, sp.frames, bg);
    if (frame_of_slot.size() != std::size_t(dims.product()))
        throw DataError("mdf ingest: " + std::to_string(frame_of_slot.size()) +
                        " foreground frames for a " + std::to_string(dims.x) + "x" +
                        std::to_string(dims.y) + "x" + std::to_string(dims.z) + " grid");

    bool meander = f.exists("/calibration/isMeanderingGrid") &&
                   read_scalar_int(f, "/calibration/isMeanderingGrid") == 1;

    if (!f.exists("/calibration/snr")) missing("/calibration/snr");
    std::vector<double> snr_raw = f.read_double("/calibration/snr");
    if (snr_raw.size() != sp.channels * sp.freqs)
        throw DataError("mdf ingest: /calibration/snr has " + std::to_string(snr_raw.size()) +
                        " entries, expected channels*frequencies = " +
                        std::to_string(sp.channels * sp.freqs));

    std::optional<std::array<double, 3>> spacing;
    if (f.exists("/calibration/fieldOfView")) {
        std::vector<double> fov = f.read_double("/calibration/fieldOfView");
        if (fov.size() == 3)
            spacing = {{fov[0] / dims.x, fov[1] / dims.y, fov[2] / dims.z}};
    }

    SystemMatrix sm;
    sm.components.reserve(sp.channels * sp.freqs);
    sm.frequencies.reserve(sp.channels * sp.freqs);
    sm.snr = snr_raw; // (channel, frequency) row-major == channel-major flat order
    for (std::size_t c = 0; c < sp.channels; ++c) {
        for (std::size_t k = 0; k < sp.freqs; ++k) {
            ComplexVolume vol = ComplexVolume::zeros(dims);
            vol.voxel_spacing = spacing;
            for (int z = 0; z < dims.z; ++z)
                for (int y = 0; y < dims.y; ++y)
                    for (int x = 0; x < dims.x; ++x) {
                        std::size_t slot = meander
                                               ? meander_sequence(x, y, z, dims)
                                               : std::size_t(vol.index(x, y, z));
                        vol.at(x, y, z) = sp.at(frame_of_slot[slot], c, k);
                    }
            sm.components.push_back(std::move(vol));
            sm.frequencies.push_back(freq_axis[k]);
        }
    }
    sm.meta["source_format"] = "mdf-v2";
    sm.meta["source_path"] = path;
    sm.meta["receive_channels"] = std::to_string(sp.channels);
    sm.validate();
    return sm;
}

Measurement ingest_mdf_measurement(const std::string& path) {
    h5::File f(path, h5::File::Mode::read);
    Spectra sp = load_spectra(f);
    std::vector<double> freq_axis = frequency_axis(f, sp.freqs);

    std::vector<bool> bg = background_mask(f, sp.frames);
    std::size_t fg_count = 0;
    for (std::size_t i = 0; i < sp.frames; ++i)
        if (!bg[i]) ++fg_count;
    if (fg_count == 0) throw DataError("mdf ingest: no foreground frames in " + path);

    Measurement m;
    m.u_hat.resize(sp.channels * sp.freqs, cplx(0.0, 0.0));
    m.frequencies.resize(sp.channels * sp.freqs);
    for (std::size_t c = 0; c < sp.channels; ++c)
        for (std::size_t k = 0; k < sp.freqs; ++k) {
            cplx acc(0.0, 0.0);
            for (std::size_t fr = 0; fr < sp.frames; ++fr)
                if (!bg[fr]) acc += sp.at(fr, c, k);
            m.u_hat[c * sp.freqs + k] = acc / double(fg_count);
            m.frequencies[c * sp.freqs + k] = freq_axis[k];
        }
    m.validate();
    return m;
}

} // namespace smr

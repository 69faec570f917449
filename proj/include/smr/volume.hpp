#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace smr {

using cplx = std::complex<double>;

/// Integer triple used for grid dimensions, offsets and pad widths.
/// Axis order is (x, y, z); volumes are stored row-major with x fastest.
struct Idx3 {
    int x = 0;
    int y = 0;
    int z = 0;

    std::int64_t product() const {
        return std::int64_t(x) * std::int64_t(y) * std::int64_t(z);
    }
    bool operator==(const Idx3&) const = default;
};

using Dims3 = Idx3;

/// One frequency component of a system matrix: complex values sampled on a
/// 3D spatial grid. Data is row-major with x fastest.
struct ComplexVolume {
    Dims3 dims;
    std::vector<cplx> data;
    std::optional<std::array<double, 3>> voxel_spacing; // mm per axis

    ComplexVolume() = default;
    ComplexVolume(Dims3 d, std::vector<cplx> values);

    static ComplexVolume zeros(Dims3 d);

    std::int64_t index(int x, int y, int z) const {
        return std::int64_t(x) + std::int64_t(dims.x) * (std::int64_t(y) + std::int64_t(dims.y) * z);
    }
    cplx& at(int x, int y, int z) { return data[index(x, y, z)]; }
    const cplx& at(int x, int y, int z) const { return data[index(x, y, z)]; }

    std::int64_t voxel_count() const { return dims.product(); }

    /// Largest |value| over all voxels (0 for an empty or all-zero volume).
    double max_abs() const;

    /// Throws DataError if dims are non-positive, the data length does not
    /// match, or any value is non-finite.
    void validate() const;
};

/// Ordered collection of frequency components sharing one grid, with
/// per-component frequency and SNR. `meta` carries free-form provenance.
struct SystemMatrix {
    std::vector<ComplexVolume> components;
    std::vector<double> frequencies; // Hz
    std::vector<double> snr;         // dimensionless, >= 0
    std::map<std::string, std::string> meta;

    std::size_t component_count() const { return components.size(); }
    Dims3 dims() const { return components.empty() ? Dims3{} : components.front().dims; }

    void validate() const;
};

/// Fourier coefficients of one induced-voltage measurement.
struct Measurement {
    std::vector<cplx> u_hat;
    std::vector<double> frequencies; // Hz, aligned with u_hat

    void validate() const;
};

/// Real-valued particle concentration on a 3D grid.
struct ConcentrationImage {
    Dims3 dims;
    std::vector<double> values;
    std::map<std::string, std::string> meta;

    ConcentrationImage() = default;
    ConcentrationImage(Dims3 d, std::vector<double> vals);
    static ConcentrationImage zeros(Dims3 d);

    std::int64_t index(int x, int y, int z) const {
        return std::int64_t(x) + std::int64_t(dims.x) * (std::int64_t(y) + std::int64_t(dims.y) * z);
    }
    double& at(int x, int y, int z) { return values[index(x, y, z)]; }
    const double& at(int x, int y, int z) const { return values[index(x, y, z)]; }

    void validate() const;
};

/// Pads `v` with zeros: `before`/`after` voxels per axis. The original data
/// occupies the interior block starting at `before`.
ComplexVolume zero_pad(const ComplexVolume& v, Idx3 before, Idx3 after);

/// Extracts the block of size `dims` starting at `offset`. Throws DataError
/// when the request leaves the input volume.
ComplexVolume crop(const ComplexVolume& v, Idx3 offset, Dims3 dims);

/// Keeps exactly the components with snr >= threshold, order preserved.
/// An empty result is legal.
SystemMatrix snr_filter(const SystemMatrix& sm, double threshold);

/// Keeps at most `max_k` components, preferring the highest SNR; the
/// surviving components stay in their original order.
SystemMatrix keep_top_snr(const SystemMatrix& sm, std::size_t max_k);

/// SNR estimate for a component without a recorded value: RMS amplitude of
/// the whole volume over the RMS of the 8 corner blocks (treated as
/// signal-free background).
double estimate_snr_from_background(const ComplexVolume& v, int corner_block = 2);

} // namespace smr

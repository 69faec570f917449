#pragma once

#include <string>

#include "smr/volume.hpp"

namespace smr {

/// Loads a calibration scan stored in the MDF v2 layout (the format used by
/// the Open MPI dataset) and maps it onto the native SystemMatrix schema.
///
/// Required fields: /measurement/data (Fourier domain), /measurement/isFourierTransformed,
/// /calibration/size, /calibration/snr, /acquisition/receiver/numSamplingPoints,
/// /acquisition/receiver/bandwidth. Background frames, frame permutations and
/// meandering grids are undone when the corresponding flags are present.
/// Components of all receive channels are concatenated channel-major.
SystemMatrix ingest_mdf_system_matrix(const std::string& path);

/// Loads a phantom measurement stored in the MDF v2 layout. Frames are
/// averaged; the selected receive channel's spectra are concatenated in the
/// same channel-major order used by ingest_mdf_system_matrix.
Measurement ingest_mdf_measurement(const std::string& path);

} // namespace smr

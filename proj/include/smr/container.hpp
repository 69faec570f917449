#pragma once

#include <string>

#include "smr/volume.hpp"

namespace smr {

// Native HDF5 container layout:
//   /systemmatrix/data        float32, K x Nz x Ny x Nx x 2
//   /systemmatrix/frequencies float64, K
//   /systemmatrix/snr         float64, K
//   /systemmatrix/dims        int64, 3 (nx, ny, nz)
//   /systemmatrix/spacing     float64, 3 (optional)
//   /meta                     group with string attributes
// Complex values are serialized as 32-bit real pairs; the in-memory
// representation is 64-bit.

void save_system_matrix(const std::string& path, const SystemMatrix& sm);
SystemMatrix load_system_matrix(const std::string& path);

// /measurement/data float64 K x 2, /measurement/frequencies float64 K, /meta
void save_measurement(const std::string& path, const Measurement& m,
                      const std::map<std::string, std::string>& meta = {});
Measurement load_measurement(const std::string& path);

// /image/values float64 Nz x Ny x Nx, /image/dims int64 3, /meta
void save_image(const std::string& path, const ConcentrationImage& img);
ConcentrationImage load_image(const std::string& path);

} // namespace smr

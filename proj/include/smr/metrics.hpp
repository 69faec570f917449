#pragma once

#include <string>
#include <vector>

#include "smr/volume.hpp"

namespace smr {

/// Normalizer for NRMSE. MaxAbs is the default convention here; the others
/// exist to probe published values computed under a different one.
enum class NrmseNorm { max_abs, range, rms };

double nrmse(const ComplexVolume& est, const ComplexVolume& ref,
             NrmseNorm norm = NrmseNorm::max_abs);
double nrmse(const ConcentrationImage& est, const ConcentrationImage& ref,
             NrmseNorm norm = NrmseNorm::max_abs);

/// 10*log10(peak^2 / MSE) with peak = max |ref|; +inf when est == ref.
double psnr(const ComplexVolume& est, const ComplexVolume& ref);
double psnr(const ConcentrationImage& est, const ConcentrationImage& ref);

/// Mean local SSIM over a uniform window (default 7 per axis, shrunk to fit
/// small volumes), k1 = 0.01, k2 = 0.03, dynamic range = max |ref|. Windows
/// are truncated at borders; statistics are population moments.
/// slice_mode averages 2D-window SSIM per z-slice instead.
double ssim3d(const ConcentrationImage& est, const ConcentrationImage& ref, int window = 7,
              bool slice_mode = false);

/// One metric value for one subject; the CSV/JSON report unit.
struct MetricRow {
    std::string subject;
    std::string metric;
    double value = 0.0;
};

/// Recovery quality of one frequency component.
struct ComponentRow {
    std::size_t k = 0;
    double frequency = 0.0;
    double snr = 0.0;
    double nrmse = 0.0;
};

/// One row per component. Throws on K/dims mismatch.
std::vector<ComponentRow> component_report(const SystemMatrix& recovered,
                                           const SystemMatrix& truth,
                                           NrmseNorm norm = NrmseNorm::max_abs);

/// Mean of the per-component NRMSE values (the report's summary row).
double mean_component_nrmse(const SystemMatrix& recovered, const SystemMatrix& truth,
                            NrmseNorm norm = NrmseNorm::max_abs);

/// CSV with header "k,frequency,snr,nrmse", one line per row, and a trailing
/// "mean,,," summary line. Values print with round-trip precision.
std::string component_csv(const std::vector<ComponentRow>& rows);

/// "subject,metric,value" CSV with a header line.
std::string rows_to_csv(const std::vector<MetricRow>& rows);

} // namespace smr

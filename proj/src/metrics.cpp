#include "smr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "smr/errors.hpp"

namespace smr {
namespace {

void check_same_dims(Dims3 a, Dims3 b, const char* who) {
    if (!(a == b)) throw DataError(std::string(who) + ": dims mismatch");
}

double normalizer_complex(const ComplexVolume& ref, NrmseNorm norm) {
    switch (norm) {
        case NrmseNorm::max_abs:
            return ref.max_abs();
        case NrmseNorm::range: {
            double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
            for (const cplx& v : ref.data) {
                double a = std::abs(v);
                lo = std::min(lo, a);
                hi = std::max(hi, a);
            }
            return hi - lo;
        }
        case NrmseNorm::rms: {
            double s = 0.0;
            for (const cplx& v : ref.data) s += std::norm(v);
            return std::sqrt(s / double(ref.data.size()));
        }
    }
    return 0.0;
}

double normalizer_real(const std::vector<double>& ref, NrmseNorm norm) {
    switch (norm) {
        case NrmseNorm::max_abs: {
            double hi = 0.0;
            for (double v : ref) hi = std::max(hi, std::abs(v));
            return hi;
        }
        case NrmseNorm::range: {
            auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
            return *hi - *lo;
        }
        case NrmseNorm::rms: {
            double s = 0.0;
            for (double v : ref) s += v * v;
            return std::sqrt(s / double(ref.size()));
        }
    }
    return 0.0;
}

/// Windowed sums along one axis with border truncation, an axis at a time;
/// applying it per axis yields clamped 3D box sums.
void box_sum_axis(std::vector<double>& data, Dims3 d, int axis, int window) {
    int n = axis == 0 ? d.x : axis == 1 ? d.y : d.z;
    std::int64_t stride = axis == 0 ? 1 : axis == 1 ? d.x : std::int64_t(d.x) * d.y;
    std::int64_t lines = d.product() / n;
    int lo = (window - 1) / 2, hi = window / 2;

    std::vector<double> line(static_cast<std::size_t>(n));
    for (std::int64_t l = 0; l < lines; ++l) {
        // Walk line l of the chosen axis: decompose l over the other two axes.
        std::int64_t base;
        if (axis == 0) {
            base = l * d.x;
        } else if (axis == 1) {
            std::int64_t x = l % d.x, z = l / d.x;
            base = x + std::int64_t(d.x) * d.y * z;
        } else {
            base = l;
        }
        for (int i = 0; i < n; ++i) line[std::size_t(i)] = data[std::size_t(base + i * stride)];
        double acc = 0.0;
        for (int i = 0; i < std::min(hi + 1, n); ++i) acc += line[std::size_t(i)];
        for (int i = 0; i < n; ++i) {
            data[std::size_t(base + i * stride)] = acc;
            int leaving = i - lo, entering = i + 1 + hi;
            if (leaving >= 0) acc -= line[std::size_t(leaving)];
            if (entering < n) acc += line[std::size_t(entering)];
        }
    }
}

void box_sum3(std::vector<double>& data, Dims3 d, int wx, int wy, int wz) {
    box_sum_axis(data, d, 0, wx);
    box_sum_axis(data, d, 1, wy);
    box_sum_axis(data, d, 2, wz);
}

} // namespace

double nrmse(const ComplexVolume& est, const ComplexVolume& ref, NrmseNorm norm) {
    check_same_dims(est.dims, ref.dims, "nrmse");
    double denom = normalizer_complex(ref, norm);
    if (denom <= 0.0) throw DataError("nrmse: degenerate reference (zero normalizer)");
    double s = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) s += std::norm(est.data[i] - ref.data[i]);
    return std::sqrt(s / double(ref.data.size())) / denom;
}

double nrmse(const ConcentrationImage& est, const ConcentrationImage& ref, NrmseNorm norm) {
    check_same_dims(est.dims, ref.dims, "nrmse");
    double denom = normalizer_real(ref.values, norm);
    if (denom <= 0.0) throw DataError("nrmse: degenerate reference (zero normalizer)");
    double s = 0.0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
        double d = est.values[i] - ref.values[i];
        s += d * d;
    }
    return std::sqrt(s / double(ref.values.size())) / denom;
}

double psnr(const ComplexVolume& est, const ComplexVolume& ref) {
    check_same_dims(est.dims, ref.dims, "psnr");
    double peak = ref.max_abs();
    if (peak <= 0.0) throw DataError("psnr: all-zero reference");
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) mse += std::norm(est.data[i] - ref.data[i]);
    mse /= double(ref.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const ConcentrationImage& est, const ConcentrationImage& ref) {
    check_same_dims(est.dims, ref.dims, "psnr");
    double peak = 0.0;
    for (double v : ref.values) peak = std::max(peak, std::abs(v));
    if (peak <= 0.0) throw DataError("psnr: all-zero reference");
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
        double d = est.values[i] - ref.values[i];
        mse += d * d;
    }
    mse /= double(ref.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim3d(const ConcentrationImage& est, const ConcentrationImage& ref, int window,
              bool slice_mode) {
    check_same_dims(est.dims, ref.dims, "ssim3d");
    if (window < 1) throw ConfigError("ssim3d: window must be >= 1");
    Dims3 d = ref.dims;

    int w = window;
    int fit = std::min({d.x, d.y, slice_mode ? window : d.z});
    if (fit < w) {
        w = fit;
        std::cerr << "ssim3d: window shrunk to " << w << " to fit volume\n";
    }
    int wz = slice_mode ? 1 : w;

    double peak = 0.0;
    for (double v : ref.values) peak = std::max(peak, std::abs(v));
    if (peak <= 0.0) throw DataError("ssim3d: all-zero reference");
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);

    std::size_t n = ref.values.size();
    std::vector<double> se(est.values), sr(ref.values), see(n), srr(n), ser(n), cnt(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        see[i] = est.values[i] * est.values[i];
        srr[i] = ref.values[i] * ref.values[i];
        ser[i] = est.values[i] * ref.values[i];
    }
    box_sum3(se, d, w, w, wz);
    box_sum3(sr, d, w, w, wz);
    box_sum3(see, d, w, w, wz);
    box_sum3(srr, d, w, w, wz);
    box_sum3(ser, d, w, w, wz);
    box_sum3(cnt, d, w, w, wz);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double m = cnt[i];
        double mu_e = se[i] / m, mu_r = sr[i] / m;
        double var_e = see[i] / m - mu_e * mu_e;
        double var_r = srr[i] / m - mu_r * mu_r;
        double cov = ser[i] / m - mu_e * mu_r;
        total += ((2.0 * mu_e * mu_r + c1) * (2.0 * cov + c2)) /
                 ((mu_e * mu_e + mu_r * mu_r + c1) * (var_e + var_r + c2));
    }
    return total / double(n);
}

std::vector<ComponentRow> component_report(const SystemMatrix& recovered,
                                           const SystemMatrix& truth, NrmseNorm norm) {
    if (recovered.component_count() != truth.component_count())
        throw DataError("component_report: component count mismatch");
    std::vector<ComponentRow> rows(truth.component_count());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        rows[k].k = k;
        rows[k].frequency = truth.frequencies[k];
        rows[k].snr = truth.snr[k];
        rows[k].nrmse = nrmse(recovered.components[k], truth.components[k], norm);
    }
    return rows;
}

double mean_component_nrmse(const SystemMatrix& recovered, const SystemMatrix& truth,
                            NrmseNorm norm) {
    std::vector<ComponentRow> rows = component_report(recovered, truth, norm);
    double s = 0.0;
    for (const ComponentRow& r : rows) s += r.nrmse;
    return s / double(rows.size());
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::string component_csv(const std::vector<ComponentRow>& rows) {
    std::ostringstream os;
    os << "k,frequency,snr,nrmse\n";
    double mean = 0.0;
    for (const ComponentRow& r : rows) {
        os << r.k << ',' << fmt(r.frequency) << ',' << fmt(r.snr) << ',' << fmt(r.nrmse)
           << '\n';
        mean += r.nrmse;
    }
    if (!rows.empty()) os << "mean,,," << fmt(mean / double(rows.size())) << '\n';
    return os.str();
}

std::string rows_to_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream os;
    os << "subject,metric,value\n";
    for (const MetricRow& r : rows) os << r.subject << ',' << r.metric << ',' << fmt(r.value) << '\n';
    return os.str();
}

} // namespace smr

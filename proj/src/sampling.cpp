#include "smr/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "json.hpp"

#include "smr/errors.hpp"

namespace smr {
namespace {

using json = nlohmann::json;

void check_dims(Dims3 d, const char* who) {
    if (d.x <= 0 || d.y <= 0 || d.z <= 0)
        throw ConfigError(std::string(who) + ": non-positive dims");
}

/// Lattice offsets with 0 < |o| < r, nearest first, so occupied-neighbor
/// scans exit early in dense regions.
std::vector<std::array<int, 3>> ball_offsets(double r) {
    std::vector<std::array<int, 3>> out;
    int m = int(std::ceil(r)) - 1;
    double r2 = r * r;
    for (int dz = -m; dz <= m; ++dz)
        for (int dy = -m; dy <= m; ++dy)
            for (int dx = -m; dx <= m; ++dx) {
                int n2 = dx * dx + dy * dy + dz * dz;
                if (n2 > 0 && double(n2) < r2) out.push_back({dx, dy, dz});
            }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        int na = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        int nb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
        return na < nb;
    });
    return out;
}

/// Maximal dart-throwing sample: walk candidates in `order`, accept those
/// with no accepted point closer than r.
std::vector<std::int64_t> throw_darts(Dims3 d, const std::vector<std::int64_t>& order,
                                      double r) {
    std::vector<std::array<int, 3>> offs = ball_offsets(r);
    std::vector<std::uint8_t> occ(order.size(), 0);
    std::vector<std::int64_t> accepted;
    for (std::int64_t idx : order) {
        int x = int(idx % d.x);
        int y = int((idx / d.x) % d.y);
        int z = int(idx / (std::int64_t(d.x) * d.y));
        bool free = true;
        for (const auto& o : offs) {
            int nx = x + o[0], ny = y + o[1], nz = z + o[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= d.x || ny >= d.y || nz >= d.z) continue;
            if (occ[std::size_t(nx + std::int64_t(d.x) * (ny + std::int64_t(d.y) * nz))]) {
                free = false;
                break;
            }
        }
        if (free) {
            occ[std::size_t(idx)] = 1;
            accepted.push_back(idx);
        }
    }
    return accepted;
}

std::vector<std::int64_t> corner_indices(Dims3 d) {
    std::vector<std::int64_t> out;
    for (int z : {0, d.z - 1})
        for (int y : {0, d.y - 1})
            for (int x : {0, d.x - 1})
                out.push_back(x + std::int64_t(d.x) * (y + std::int64_t(d.y) * z));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double index_dist2(std::int64_t a, std::int64_t b, Dims3 d) {
    auto coords = [&](std::int64_t i) {
        return std::array<double, 3>{double(i % d.x), double((i / d.x) % d.y),
                                     double(i / (std::int64_t(d.x) * d.y))};
    };
    std::array<double, 3> pa = coords(a), pb = coords(b);
    double s = 0;
    for (int k = 0; k < 3; ++k) s += (pa[k] - pb[k]) * (pa[k] - pb[k]);
    return s;
}

} // namespace

void SamplingPattern::validate() const {
    check_dims(hr_dims, "SamplingPattern");
    std::int64_t n = hr_dims.product();
    if (indices.empty()) throw DataError("SamplingPattern: empty index list");
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] < 0 || indices[j] >= n)
            throw DataError("SamplingPattern: index out of range");
        if (j > 0 && indices[j] <= indices[j - 1])
            throw DataError("SamplingPattern: indices not strictly increasing");
    }
    if (kind == Kind::regular) {
        if (stride < 1) throw ConfigError("SamplingPattern: stride must be >= 1");
        Dims3 lr = regular_lr_dims(hr_dims, stride, offset);
        if (std::int64_t(indices.size()) != lr.product())
            throw DataError("SamplingPattern: regular index count mismatch");
    } else {
        for (std::int64_t a : adjusted)
            if (!std::binary_search(indices.begin(), indices.end(), a))
                throw DataError("SamplingPattern: adjusted index not in pattern");
    }
}

Dims3 regular_lr_dims(Dims3 hr, int stride, Idx3 offset) {
    check_dims(hr, "regular_lr_dims");
    if (stride < 1) throw ConfigError("regular_lr_dims: stride must be >= 1");
    if (stride > hr.x || stride > hr.y || stride > hr.z)
        throw ConfigError("regular_lr_dims: stride exceeds an axis");
    if (offset.x < 0 || offset.y < 0 || offset.z < 0 || offset.x >= stride ||
        offset.y >= stride || offset.z >= stride)
        throw ConfigError("regular_lr_dims: offsets must lie in [0, stride)");
    return {(hr.x - offset.x + stride - 1) / stride, (hr.y - offset.y + stride - 1) / stride,
            (hr.z - offset.z + stride - 1) / stride};
}

SamplingPattern regular_pattern(Dims3 hr_dims, int stride, Idx3 offset) {
    Dims3 lr = regular_lr_dims(hr_dims, stride, offset);
    SamplingPattern p;
    p.kind = SamplingPattern::Kind::regular;
    p.hr_dims = hr_dims;
    p.stride = stride;
    p.offset = offset;
    p.indices.reserve(std::size_t(lr.product()));
    for (int z = offset.z; z < hr_dims.z; z += stride)
        for (int y = offset.y; y < hr_dims.y; y += stride)
            for (int x = offset.x; x < hr_dims.x; x += stride)
                p.indices.push_back(x + std::int64_t(hr_dims.x) *
                                            (y + std::int64_t(hr_dims.y) * z));
    p.validate();
    return p;
}

SamplingPattern poisson_pattern(Dims3 hr_dims, std::int64_t target_count, std::uint64_t seed) {
    check_dims(hr_dims, "poisson_pattern");
    std::int64_t n = hr_dims.product();
    if (target_count < 1 || target_count > n)
        throw ConfigError("poisson_pattern: target_count outside 1.." + std::to_string(n));

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    // Bisect the radius: count decreases as r grows; r = 1 keeps everything.
    double lo = 1.0, hi = std::sqrt(index_dist2(0, n - 1, hr_dims)) + 1.0;
    std::int64_t tol = std::max<std::int64_t>(1, (target_count * 2 + 99) / 100);
    double best_r = lo;
    std::vector<std::int64_t> best = throw_darts(hr_dims, order, lo);
    std::int64_t best_diff = std::abs(std::int64_t(best.size()) - target_count);
    for (int it = 0; it < 48 && best_diff > tol; ++it) {
        double mid = 0.5 * (lo + hi);
        std::vector<std::int64_t> got = throw_darts(hr_dims, order, mid);
        std::int64_t diff = std::abs(std::int64_t(got.size()) - target_count);
        if (diff < best_diff) {
            best_diff = diff;
            best_r = mid;
            best = std::move(got);
        }
        if (std::int64_t(got.size()) > target_count)
            lo = mid;
        else
            hi = mid;
    }

    std::vector<std::int64_t> accepted = std::move(best);
    std::unordered_set<std::int64_t> in_set(accepted.begin(), accepted.end());
    std::vector<std::int64_t> adjusted;
    std::mt19937_64 fix_rng(seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::int64_t> corners = corner_indices(hr_dims);
    std::unordered_set<std::int64_t> corner_set(corners.begin(), corners.end());
    if (target_count >= std::int64_t(corners.size())) {
        for (std::int64_t c : corners) {
            if (in_set.count(c)) continue;
            // Replace the accepted point nearest to the missing corner.
            std::size_t victim = accepted.size();
            double victim_d2 = 0;
            for (std::size_t j = 0; j < accepted.size(); ++j) {
                if (corner_set.count(accepted[j])) continue;
                double d2 = index_dist2(accepted[j], c, hr_dims);
                if (victim == accepted.size() || d2 < victim_d2 ||
                    (d2 == victim_d2 && accepted[j] < accepted[victim])) {
                    victim = j;
                    victim_d2 = d2;
                }
            }
            if (victim == accepted.size()) {
                accepted.push_back(c); // fewer accepted points than corners
            } else {
                in_set.erase(accepted[victim]);
                accepted[victim] = c;
            }
            in_set.insert(c);
            adjusted.push_back(c);
        }
    }

    if (std::int64_t(accepted.size()) > target_count) {
        std::vector<std::size_t> removable;
        for (std::size_t j = 0; j < accepted.size(); ++j)
            if (!corner_set.count(accepted[j])) removable.push_back(j);
        std::shuffle(removable.begin(), removable.end(), fix_rng);
        removable.resize(std::size_t(std::int64_t(accepted.size()) - target_count));
        std::sort(removable.begin(), removable.end(), std::greater<>());
        for (std::size_t j : removable) {
            in_set.erase(accepted[j]);
            accepted.erase(accepted.begin() + std::ptrdiff_t(j));
        }
    } else if (std::int64_t(accepted.size()) < target_count) {
        std::vector<std::int64_t> absent;
        absent.reserve(std::size_t(n) - accepted.size());
        for (std::int64_t i = 0; i < n; ++i)
            if (!in_set.count(i)) absent.push_back(i);
        std::shuffle(absent.begin(), absent.end(), fix_rng);
        for (std::int64_t i = 0; std::int64_t(accepted.size()) < target_count; ++i) {
            accepted.push_back(absent[std::size_t(i)]);
            adjusted.push_back(absent[std::size_t(i)]);
        }
    }

    SamplingPattern p;
    p.kind = SamplingPattern::Kind::poisson;
    p.hr_dims = hr_dims;
    p.radius = best_r;
    p.seed = seed;
    p.indices = std::move(accepted);
    std::sort(p.indices.begin(), p.indices.end());
    std::sort(adjusted.begin(), adjusted.end());
    adjusted.erase(std::unique(adjusted.begin(), adjusted.end()), adjusted.end());
    p.adjusted = std::move(adjusted);
    p.validate();
    return p;
}

std::vector<cplx> apply_pattern(const ComplexVolume& v, const SamplingPattern& p) {
    if (!(v.dims == p.hr_dims))
        throw DataError("apply_pattern: volume dims do not match pattern dims");
    std::vector<cplx> y(p.indices.size());
    for (std::size_t j = 0; j < p.indices.size(); ++j)
        y[j] = v.data[std::size_t(p.indices[j])];
    return y;
}

ComplexVolume scatter_pattern(const std::vector<cplx>& samples, const SamplingPattern& p) {
    if (samples.size() != p.indices.size())
        throw DataError("scatter_pattern: sample count does not match pattern count");
    ComplexVolume v = ComplexVolume::zeros(p.hr_dims);
    for (std::size_t j = 0; j < p.indices.size(); ++j)
        v.data[std::size_t(p.indices[j])] = samples[j];
    return v;
}

ComplexVolume gather_lr_volume(const ComplexVolume& v, const SamplingPattern& p) {
    if (p.kind != SamplingPattern::Kind::regular)
        throw ConfigError("gather_lr_volume: pattern is not regular");
    if (!(v.dims == p.hr_dims))
        throw DataError("gather_lr_volume: volume dims do not match pattern dims");
    ComplexVolume out;
    out.dims = regular_lr_dims(p.hr_dims, p.stride, p.offset);
    out.data = apply_pattern(v, p); // sorted indices enumerate x-fastest
    if (v.voxel_spacing)
        out.voxel_spacing = {{(*v.voxel_spacing)[0] * p.stride, (*v.voxel_spacing)[1] * p.stride,
                              (*v.voxel_spacing)[2] * p.stride}};
    return out;
}

namespace {

cplx lerp3(const ComplexVolume& lr, double ux, double uy, double uz) {
    auto prep = [](double u, int n, int& i0, int& i1, double& f) {
        u = std::clamp(u, 0.0, double(n - 1));
        i0 = std::min(int(u), n - 2 < 0 ? 0 : n - 2);
        i1 = std::min(i0 + 1, n - 1);
        f = u - i0;
    };
    int x0, x1, y0, y1, z0, z1;
    double fx, fy, fz;
    prep(ux, lr.dims.x, x0, x1, fx);
    prep(uy, lr.dims.y, y0, y1, fy);
    prep(uz, lr.dims.z, z0, z1, fz);
    cplx c00 = lr.at(x0, y0, z0) * (1 - fx) + lr.at(x1, y0, z0) * fx;
    cplx c10 = lr.at(x0, y1, z0) * (1 - fx) + lr.at(x1, y1, z0) * fx;
    cplx c01 = lr.at(x0, y0, z1) * (1 - fx) + lr.at(x1, y0, z1) * fx;
    cplx c11 = lr.at(x0, y1, z1) * (1 - fx) + lr.at(x1, y1, z1) * fx;
    cplx c0 = c00 * (1 - fy) + c10 * fy;
    cplx c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

} // namespace

ComplexVolume trilinear_upsample(const ComplexVolume& lr, Dims3 hr_dims) {
    lr.validate();
    check_dims(hr_dims, "trilinear_upsample");
    if (hr_dims.x < lr.dims.x || hr_dims.y < lr.dims.y || hr_dims.z < lr.dims.z)
        throw ConfigError("trilinear_upsample: target dims smaller than source");
    ComplexVolume out = ComplexVolume::zeros(hr_dims);
    for (int z = 0; z < hr_dims.z; ++z)
        for (int y = 0; y < hr_dims.y; ++y)
            for (int x = 0; x < hr_dims.x; ++x)
                out.at(x, y, z) = lerp3(lr, (x + 0.5) * lr.dims.x / hr_dims.x - 0.5,
                                        (y + 0.5) * lr.dims.y / hr_dims.y - 0.5,
                                        (z + 0.5) * lr.dims.z / hr_dims.z - 0.5);
    return out;
}

ComplexVolume trilinear_upsample(const ComplexVolume& lr, Dims3 hr_dims, int stride,
                                 Idx3 offset) {
    lr.validate();
    Dims3 expect = regular_lr_dims(hr_dims, stride, offset);
    if (!(expect == lr.dims))
        throw ConfigError("trilinear_upsample: source dims do not match stride/offset grid");
    ComplexVolume out = ComplexVolume::zeros(hr_dims);
    for (int z = 0; z < hr_dims.z; ++z)
        for (int y = 0; y < hr_dims.y; ++y)
            for (int x = 0; x < hr_dims.x; ++x)
                out.at(x, y, z) =
                    lerp3(lr, double(x - offset.x) / stride, double(y - offset.y) / stride,
                          double(z - offset.z) / stride);
    return out;
}

std::string pattern_to_json(const SamplingPattern& p, bool include_indices) {
    json j;
    j["kind"] = p.kind == SamplingPattern::Kind::regular ? "regular" : "poisson";
    j["hr_dims"] = {p.hr_dims.x, p.hr_dims.y, p.hr_dims.z};
    j["count"] = p.indices.size();
    if (p.kind == SamplingPattern::Kind::regular) {
        j["stride"] = p.stride;
        j["offset"] = {p.offset.x, p.offset.y, p.offset.z};
    } else {
        j["seed"] = p.seed;
        j["radius"] = p.radius;
        j["adjusted"] = p.adjusted;
    }
    if (include_indices) j["indices"] = p.indices;
    return j.dump(2);
}

SamplingPattern pattern_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("pattern json: ") + e.what());
    }
    try {
        std::string kind = j.at("kind").get<std::string>();
        std::vector<int> hd = j.at("hr_dims").get<std::vector<int>>();
        if (hd.size() != 3) throw DataError("pattern json: hr_dims must have 3 entries");
        Dims3 dims{hd[0], hd[1], hd[2]};
        if (kind == "regular") {
            std::vector<int> off = j.value("offset", std::vector<int>{0, 0, 0});
            if (off.size() != 3) throw DataError("pattern json: offset must have 3 entries");
            return regular_pattern(dims, j.at("stride").get<int>(), {off[0], off[1], off[2]});
        }
        if (kind != "poisson") throw DataError("pattern json: unknown kind " + kind);
        std::uint64_t seed = j.at("seed").get<std::uint64_t>();
        std::int64_t count = j.at("count").get<std::int64_t>();
        if (!j.contains("indices")) return poisson_pattern(dims, count, seed);
        SamplingPattern p;
        p.kind = SamplingPattern::Kind::poisson;
        p.hr_dims = dims;
        p.seed = seed;
        p.radius = j.value("radius", 0.0);
        p.indices = j.at("indices").get<std::vector<std::int64_t>>();
        p.adjusted = j.value("adjusted", std::vector<std::int64_t>{});
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw DataError(std::string("pattern json: ") + e.what());
    }
}

} // namespace smr

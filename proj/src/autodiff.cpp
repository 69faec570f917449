#include "smr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "smr/errors.hpp"

namespace smr {

void adam_step(Tensor5& param, const Tensor5& grad, Tensor5& m, Tensor5& v, std::int64_t t,
               const AdamConfig& cfg) {
    if (!(param.shape == grad.shape) || !(param.shape == m.shape) || !(param.shape == v.shape))
        throw DataError("adam_step: shape mismatch");
    if (t < 1) throw ConfigError("adam_step: t must be >= 1");
    double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        double g = grad.data[i];
        m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
        v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
        double m_hat = m.data[i] / bc1;
        double v_hat = v.data[i] / bc2;
        param.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
    int cin, cout, kz, ky, kx, z, y, x;
    std::int64_t patch_rows() const { return std::int64_t(cin) * kz * ky * kx; }
    std::int64_t voxels() const { return std::int64_t(z) * y * x; }
    int pz() const { return (kz - 1) / 2; }
    int py() const { return (ky - 1) / 2; }
    int px() const { return (kx - 1) / 2; }
};

ConvGeom conv_geometry(const Shape5& xs, const Shape5& ws) {
    return ConvGeom{ws.c, ws.n, ws.z, ws.y, ws.x, xs.z, xs.y, xs.x};
}

/// Halo-padded layout: every kernel offset becomes one linear shift, so a
/// same-padded conv is k^3 GEMMs over a single contiguous column span with no
/// patch matrices. The span also covers halo columns between rows; they hold
/// garbage that padding (forward) or the zero halo of dY (backward) keeps out
/// of every real result.
struct PadGeom {
    int PZ, PY, PX;
    std::int64_t padvol, off0, span; // span = padvol - 2*off0, always >= 1

    std::int64_t shift(const ConvGeom& g, int dz, int dy, int dx) const {
        return (std::int64_t(dz - g.pz()) * PY + (dy - g.py())) * PX + (dx - g.px());
    }
};

PadGeom pad_geometry(const ConvGeom& g) {
    PadGeom p{g.z + 2 * g.pz(), g.y + 2 * g.py(), g.x + 2 * g.px(), 0, 0, 0};
    p.padvol = std::int64_t(p.PZ) * p.PY * p.PX;
    p.off0 = (std::int64_t(g.pz()) * p.PY + g.py()) * p.PX + g.px();
    p.span = p.padvol - 2 * p.off0;
    return p;
}

/// Grow-only per-thread scratch; conv shapes repeat every iteration, so after
/// warmup no allocation happens on the training path.
double* scratch_buffer(int which, std::int64_t count) {
    thread_local std::vector<double> bufs[3];
    auto& b = bufs[which];
    if (std::int64_t(b.size()) < count) b.resize(std::size_t(count));
    return b.data();
}

void pad_channels(const double* src, int channels, const ConvGeom& g, const PadGeom& p,
                  double* dst) {
    std::fill(dst, dst + std::int64_t(channels) * p.padvol, 0.0);
    for (int c = 0; c < channels; ++c)
        for (int z = 0; z < g.z; ++z)
            for (int y = 0; y < g.y; ++y) {
                const double* s = src + (std::int64_t(c) * g.z + z) * g.y * g.x +
                                  std::int64_t(y) * g.x;
                double* d = dst + std::int64_t(c) * p.padvol +
                            ((std::int64_t(z + g.pz()) * p.PY) + y + g.py()) * p.PX +
                            g.px();
                std::copy(s, s + g.x, d);
            }
}

/// Inverse of pad_channels on the interior; assigns or accumulates.
void compact_channels(const double* pad, int channels, const ConvGeom& g, const PadGeom& p,
                      double* dst, bool add) {
    for (int c = 0; c < channels; ++c)
        for (int z = 0; z < g.z; ++z)
            for (int y = 0; y < g.y; ++y) {
                const double* s = pad + std::int64_t(c) * p.padvol +
                                  ((std::int64_t(z + g.pz()) * p.PY) + y + g.py()) * p.PX +
                                  g.px();
                double* d = dst + (std::int64_t(c) * g.z + z) * g.y * g.x +
                            std::int64_t(y) * g.x;
                if (add)
                    for (int x = 0; x < g.x; ++x) d[x] += s[x];
                else
                    std::copy(s, s + g.x, d);
            }
}

/// Weights regrouped per offset: block o = (dz*ky+dy)*kx+dx is the contiguous
/// (cout x cin) matrix W[:, :, dz, dy, dx].
void regroup_weights(const double* w, const ConvGeom& g, double* wr) {
    std::int64_t k3 = std::int64_t(g.kz) * g.ky * g.kx;
    for (int co = 0; co < g.cout; ++co)
        for (int ci = 0; ci < g.cin; ++ci)
            for (std::int64_t o = 0; o < k3; ++o)
                wr[o * g.cout * g.cin + std::int64_t(co) * g.cin + ci] =
                    w[(std::int64_t(co) * g.cin + ci) * k3 + o];
}

} // namespace

int Graph::push(Tensor5 value, bool requires_grad, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Tensor5{}, requires_grad, std::move(back)});
    return int(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
    if (id < 0 || id >= int(nodes_.size())) throw DataError("Graph: invalid node id");
}

Tensor5& Graph::grad_buf(int id) {
    Node& nd = nodes_[std::size_t(id)];
    if (nd.grad.data.empty()) nd.grad = Tensor5::zeros(nd.value.shape);
    return nd.grad;
}

const Tensor5& Graph::value(int id) const {
    check_id(id);
    return nodes_[std::size_t(id)].value;
}

const Tensor5& Graph::grad(int id) const {
    check_id(id);
    const Node& nd = nodes_[std::size_t(id)];
    if (nd.grad.data.empty())
        throw DataError("Graph: gradient not available for this node (run backward, and "
                        "only query nodes on the loss path)");
    return nd.grad;
}

int Graph::leaf(Tensor5 value, bool requires_grad) {
    value.check();
    return push(std::move(value), requires_grad, {});
}

int Graph::conv3d(int x, int weight, int bias) {
    check_id(x);
    check_id(weight);
    check_id(bias);
    const Tensor5& in = nodes_[std::size_t(x)].value;
    const Tensor5& w = nodes_[std::size_t(weight)].value;
    const Tensor5& b = nodes_[std::size_t(bias)].value;
    if (w.shape.c != in.shape.c)
        throw DataError("conv3d: weight in_ch does not match input channels");
    if (w.shape.z % 2 == 0 || w.shape.y % 2 == 0 || w.shape.x % 2 == 0)
        throw ConfigError("conv3d: kernel dims must be odd for same padding");
    if (!(b.shape == Shape5{1, w.shape.n, 1, 1, 1}))
        throw DataError("conv3d: bias must be shaped (1, out_ch, 1, 1, 1)");

    ConvGeom g = conv_geometry(in.shape, w.shape);
    Shape5 out_shape{in.shape.n, g.cout, g.z, g.y, g.x};
    Tensor5 out(out_shape);

    Eigen::Map<const Eigen::VectorXd> bvec(b.data.data(), g.cout);
    PadGeom p = pad_geometry(g);
    std::int64_t k3 = std::int64_t(g.kz) * g.ky * g.kx;
    double* wr = scratch_buffer(2, k3 * g.cout * g.cin);
    regroup_weights(w.data.data(), g, wr);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < in.shape.n; ++n) {
        double* xp = scratch_buffer(0, g.cin * p.padvol);
        pad_channels(in.data.data() + in.index(n, 0, 0, 0, 0), g.cin, g, p, xp);
        double* yp = scratch_buffer(1, g.cout * p.padvol);
        std::fill(yp, yp + g.cout * p.padvol, 0.0);
        Eigen::Map<const RowMat> xmat(xp, g.cin, p.padvol);
        Eigen::Map<RowMat> ymat(yp, g.cout, p.padvol);
        std::int64_t o = 0;
        for (int dz = 0; dz < g.kz; ++dz)
            for (int dy = 0; dy < g.ky; ++dy)
                for (int dx = 0; dx < g.kx; ++dx, ++o) {
                    Eigen::Map<const RowMat> wo(wr + o * g.cout * g.cin, g.cout, g.cin);
                    ymat.middleCols(p.off0, p.span).noalias() +=
                        wo * xmat.middleCols(p.off0 + p.shift(g, dz, dy, dx), p.span);
                }
        Eigen::Map<RowMat> omat(out.data.data() + out.index(n, 0, 0, 0, 0), g.cout,
                                g.voxels());
        compact_channels(yp, g.cout, g, p, out.data.data() + out.index(n, 0, 0, 0, 0),
                         false);
        omat.colwise() += bvec;
    }

    bool rg = nodes_[std::size_t(x)].requires_grad ||
              nodes_[std::size_t(weight)].requires_grad ||
              nodes_[std::size_t(bias)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, x, weight, bias]() {
            const Tensor5& in_v = nodes_[std::size_t(x)].value;
            const Tensor5& w_v = nodes_[std::size_t(weight)].value;
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            ConvGeom geo = conv_geometry(in_v.shape, w_v.shape);
            bool need_x = nodes_[std::size_t(x)].requires_grad;
            bool need_w = nodes_[std::size_t(weight)].requires_grad;
            bool need_b = nodes_[std::size_t(bias)].requires_grad;
            int batch = in_v.shape.n;

            Eigen::Map<const RowMat> wmat(w_v.data.data(), geo.cout, geo.patch_rows());
            std::vector<RowMat> dw_per_sample(need_w ? std::size_t(batch) : 0);
            std::vector<Eigen::VectorXd> db_per_sample(need_b ? std::size_t(batch) : 0);
            Tensor5* dx = need_x ? &grad_buf(x) : nullptr;

            PadGeom p = pad_geometry(geo);
            std::int64_t k3 = std::int64_t(geo.kz) * geo.ky * geo.kx;
            double* wr = nullptr;
            if (need_x) {
                wr = scratch_buffer(2, k3 * geo.cout * geo.cin);
                regroup_weights(w_v.data.data(), geo, wr);
            }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int n = 0; n < batch; ++n) {
                Eigen::Map<const RowMat> dout_n(
                    dout.data.data() + dout.index(n, 0, 0, 0, 0), geo.cout, geo.voxels());
                double* dyp = nullptr;
                if (need_w || need_x) {
                    dyp = scratch_buffer(1, geo.cout * p.padvol);
                    pad_channels(dout.data.data() + dout.index(n, 0, 0, 0, 0), geo.cout,
                                 geo, p, dyp);
                }
                if (need_w) {
                    Eigen::Map<const RowMat> dymat(dyp, geo.cout, p.padvol);
                    // dW per offset is a plain inner product over the span; the halo
                    // columns of dY are zero there, so garbage in the padded input's
                    // overlap never contributes.
                    double* xp = scratch_buffer(0, geo.cin * p.padvol);
                    pad_channels(in_v.data.data() + in_v.index(n, 0, 0, 0, 0), geo.cin,
                                 geo, p, xp);
                    Eigen::Map<const RowMat> xmat(xp, geo.cin, p.padvol);
                    auto& dw_n = dw_per_sample[std::size_t(n)];
                    dw_n = RowMat::Zero(geo.cout, geo.patch_rows());
                    std::int64_t o = 0;
                    for (int dz = 0; dz < geo.kz; ++dz)
                        for (int dy = 0; dy < geo.ky; ++dy)
                            for (int dx = 0; dx < geo.kx; ++dx, ++o) {
                                RowMat dwo = dymat.middleCols(p.off0, p.span) *
                                             xmat.middleCols(
                                                     p.off0 + p.shift(geo, dz, dy, dx),
                                                     p.span)
                                                 .transpose();
                                for (int co = 0; co < geo.cout; ++co)
                                    for (int ci = 0; ci < geo.cin; ++ci)
                                        dw_n(co, std::int64_t(ci) * k3 + o) = dwo(co, ci);
                            }
                }
                if (need_x) {
                    // Transposed conv: dX[:, q] sums Wo^T dY[:, q - shift(o)]; the dY
                    // halo is zero, which realizes the out-of-range terms dropping out.
                    Eigen::Map<const RowMat> dymat(dyp, geo.cout, p.padvol);
                    double* dxp = scratch_buffer(0, geo.cin * p.padvol);
                    std::fill(dxp, dxp + geo.cin * p.padvol, 0.0);
                    Eigen::Map<RowMat> dxmat_pad(dxp, geo.cin, p.padvol);
                    std::int64_t o = 0;
                    for (int dz = 0; dz < geo.kz; ++dz)
                        for (int dy = 0; dy < geo.ky; ++dy)
                            for (int dx = 0; dx < geo.kx; ++dx, ++o) {
                                Eigen::Map<const RowMat> wo(wr + o * geo.cout * geo.cin,
                                                            geo.cout, geo.cin);
                                dxmat_pad.middleCols(p.off0, p.span).noalias() +=
                                    wo.transpose() *
                                    dymat.middleCols(p.off0 - p.shift(geo, dz, dy, dx),
                                                     p.span);
                            }
                    // Samples are disjoint, so += into the shared grad buffer is safe;
                    // += rather than = because the input may feed several consumers.
                    compact_channels(dxp, geo.cin, geo, p,
                                     dx->data.data() + dx->index(n, 0, 0, 0, 0), true);
                }
                if (need_b) {
                    // Plain index-order sums: Eigen's redux peels by pointer
                    // alignment, which would make results depend on where the
                    // buffer landed.
                    auto& db_n = db_per_sample[std::size_t(n)];
                    db_n = Eigen::VectorXd::Zero(geo.cout);
                    for (int co = 0; co < geo.cout; ++co)
                        for (std::int64_t v2 = 0; v2 < geo.voxels(); ++v2)
                            db_n[co] += dout_n(co, v2);
                }
            }
            // Sequential reduction keeps results independent of thread count.
            if (need_w) {
                Tensor5& dw = grad_buf(weight);
                Eigen::Map<RowMat> acc(dw.data.data(), geo.cout, geo.patch_rows());
                for (int n = 0; n < batch; ++n) acc += dw_per_sample[std::size_t(n)];
            }
            if (need_b) {
                Tensor5& db = grad_buf(bias);
                Eigen::Map<Eigen::VectorXd> acc(db.data.data(), geo.cout);
                for (int n = 0; n < batch; ++n) acc += db_per_sample[std::size_t(n)];
            }
        };
    return id;
}

int Graph::leaky_relu(int x, double slope) {
    check_id(x);
    const Tensor5& in = nodes_[std::size_t(x)].value;
    Tensor5 out(in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i)
        out.data[i] = in.data[i] >= 0.0 ? in.data[i] : slope * in.data[i];
    bool rg = nodes_[std::size_t(x)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, x, slope]() {
            const Tensor5& in_v = nodes_[std::size_t(x)].value;
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            Tensor5& dx = grad_buf(x);
            for (std::size_t i = 0; i < dx.data.size(); ++i)
                dx.data[i] += dout.data[i] * (in_v.data[i] >= 0.0 ? 1.0 : slope);
        };
    return id;
}

int Graph::nn_upsample(int x, int factor) {
    check_id(x);
    if (factor != 2 && factor != 3) throw ConfigError("nn_upsample: factor must be 2 or 3");
    const Tensor5& in = nodes_[std::size_t(x)].value;
    Shape5 os{in.shape.n, in.shape.c, in.shape.z * factor, in.shape.y * factor,
              in.shape.x * factor};
    Tensor5 out(os);
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int z = 0; z < os.z; ++z)
                for (int y = 0; y < os.y; ++y)
                    for (int xx = 0; xx < os.x; ++xx)
                        out.at(n, c, z, y, xx) =
                            in.at(n, c, z / factor, y / factor, xx / factor);
    bool rg = nodes_[std::size_t(x)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, x, factor]() {
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            Tensor5& dx = grad_buf(x);
            const Shape5& os = dout.shape;
            for (int n = 0; n < os.n; ++n)
                for (int c = 0; c < os.c; ++c)
                    for (int z = 0; z < os.z; ++z)
                        for (int y = 0; y < os.y; ++y)
                            for (int xx = 0; xx < os.x; ++xx)
                                dx.at(n, c, z / factor, y / factor, xx / factor) +=
                                    dout.at(n, c, z, y, xx);
        };
    return id;
}

int Graph::add(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor5& av = nodes_[std::size_t(a)].value;
    const Tensor5& bv = nodes_[std::size_t(b)].value;
    if (!(av.shape == bv.shape)) throw DataError("add: shape mismatch");
    Tensor5 out(av.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    bool rg = nodes_[std::size_t(a)].requires_grad || nodes_[std::size_t(b)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, a, b]() {
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            if (nodes_[std::size_t(a)].requires_grad) {
                Tensor5& da = grad_buf(a);
                for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += dout.data[i];
            }
            if (nodes_[std::size_t(b)].requires_grad) {
                Tensor5& db = grad_buf(b);
                for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] += dout.data[i];
            }
        };
    return id;
}

int Graph::scale(int x, double alpha) {
    check_id(x);
    const Tensor5& in = nodes_[std::size_t(x)].value;
    Tensor5 out(in.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = alpha * in.data[i];
    bool rg = nodes_[std::size_t(x)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, x, alpha]() {
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            Tensor5& dx = grad_buf(x);
            for (std::size_t i = 0; i < dx.data.size(); ++i)
                dx.data[i] += alpha * dout.data[i];
        };
    return id;
}

int Graph::concat_channels(const std::vector<int>& xs) {
    if (xs.empty()) throw ConfigError("concat_channels: no inputs");
    for (int idx : xs) check_id(idx);
    const Shape5 first = nodes_[std::size_t(xs[0])].value.shape;
    int c_total = 0;
    bool rg = false;
    for (int idx : xs) {
        const Shape5& s = nodes_[std::size_t(idx)].value.shape;
        if (s.n != first.n || s.z != first.z || s.y != first.y || s.x != first.x)
            throw DataError("concat_channels: batch/spatial dims differ");
        c_total += s.c;
        rg = rg || nodes_[std::size_t(idx)].requires_grad;
    }
    Shape5 os{first.n, c_total, first.z, first.y, first.x};
    Tensor5 out(os);
    std::int64_t spatial = os.spatial();
    for (int n = 0; n < os.n; ++n) {
        std::int64_t coff = 0;
        for (int idx : xs) {
            const Tensor5& v = nodes_[std::size_t(idx)].value;
            std::int64_t len = std::int64_t(v.shape.c) * spatial;
            std::copy_n(v.data.begin() + v.index(n, 0, 0, 0, 0), len,
                        out.data.begin() + out.index(n, int(coff), 0, 0, 0));
            coff += v.shape.c;
        }
    }
    int id = push(std::move(out), rg, {});
    if (rg) {
        std::vector<int> inputs = xs;
        nodes_[std::size_t(id)].back = [this, id, inputs, spatial]() {
            const Tensor5& dout = nodes_[std::size_t(id)].grad;
            for (int n = 0; n < dout.shape.n; ++n) {
                std::int64_t coff = 0;
                for (int idx : inputs) {
                    Node& src = nodes_[std::size_t(idx)];
                    std::int64_t len = std::int64_t(src.value.shape.c) * spatial;
                    if (src.requires_grad) {
                        Tensor5& dx = grad_buf(idx);
                        const double* from =
                            dout.data.data() + dout.index(n, int(coff), 0, 0, 0);
                        double* to = dx.data.data() + dx.index(n, 0, 0, 0, 0);
                        for (std::int64_t i = 0; i < len; ++i) to[i] += from[i];
                    }
                    coff += src.value.shape.c;
                }
            }
        };
    }
    return id;
}

int Graph::mse_loss(int pred, int target) {
    check_id(pred);
    check_id(target);
    const Tensor5& p = nodes_[std::size_t(pred)].value;
    const Tensor5& t = nodes_[std::size_t(target)].value;
    if (!(p.shape == t.shape)) throw DataError("mse_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        double d = p.data[i] - t.data[i];
        acc += d * d;
    }
    Tensor5 out(Shape5{1, 1, 1, 1, 1});
    out.data[0] = acc / double(p.data.size());
    bool rg = nodes_[std::size_t(pred)].requires_grad || nodes_[std::size_t(target)].requires_grad;
    int id = push(std::move(out), rg, {});
    if (rg)
        nodes_[std::size_t(id)].back = [this, id, pred, target]() {
            const Tensor5& p_v = nodes_[std::size_t(pred)].value;
            const Tensor5& t_v = nodes_[std::size_t(target)].value;
            double dl = nodes_[std::size_t(id)].grad.data[0];
            double scale = 2.0 / double(p_v.data.size());
            if (nodes_[std::size_t(pred)].requires_grad) {
                Tensor5& dp = grad_buf(pred);
                for (std::size_t i = 0; i < dp.data.size(); ++i)
                    dp.data[i] += dl * scale * (p_v.data[i] - t_v.data[i]);
            }
            if (nodes_[std::size_t(target)].requires_grad) {
                Tensor5& dt = grad_buf(target);
                for (std::size_t i = 0; i < dt.data.size(); ++i)
                    dt.data[i] -= dl * scale * (p_v.data[i] - t_v.data[i]);
            }
        };
    return id;
}

void Graph::backward(int root) {
    check_id(root);
    Node& r = nodes_[std::size_t(root)];
    if (r.value.shape.count() != 1)
        throw ConfigError("Graph::backward: root must be scalar-shaped");
    if (!r.grad.data.empty())
        throw ConfigError("Graph::backward: already swept");
    grad_buf(root).data[0] = 1.0;
    for (int id = root; id >= 0; --id) {
        Node& nd = nodes_[std::size_t(id)];
        if (nd.back && nd.requires_grad && !nd.grad.data.empty()) nd.back();
    }
}

} // namespace smr

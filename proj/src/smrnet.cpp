#include "smr/smrnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

#include "smr/codec.hpp"
#include "smr/errors.hpp"
#include "smr/hdf5_file.hpp"
#include "smr/metrics.hpp"

namespace smr {

void ModelConfig::validate() const {
    if (rrdb_blocks < 1) throw ConfigError("model: rrdb_blocks must be >= 1");
    if (up_blocks < 1) throw ConfigError("model: up_blocks must be >= 1");
    if (up_factor != 2 && up_factor != 3) throw ConfigError("model: up_factor must be 2 or 3");
    if (nf < 1 || gc < 1) throw ConfigError("model: nf and gc must be positive");
    if (!(res_scale > 0.0) || res_scale > 1.0)
        throw ConfigError("model: res_scale must be in (0, 1]");
    if (!(lrelu_slope >= 0.0) || lrelu_slope >= 1.0)
        throw ConfigError("model: lrelu_slope must be in [0, 1)");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model: kernel must be odd");
    (void)total_up_factor();
}

int ModelConfig::total_up_factor() const {
    std::int64_t f = 1;
    for (int u = 0; u < up_blocks && f <= 4; ++u) f *= up_factor;
    if (f != 2 && f != 3 && f != 4)
        throw ConfigError("model: up_factor^up_blocks must be 2, 3, or 4");
    return int(f);
}

void TrainConfig::validate() const {
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
    if (minibatch < 1) throw ConfigError("train: minibatch must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be positive");
    if (lr_halve_every < 1) throw ConfigError("train: lr_halve_every must be >= 1");
    if (val_every < 1) throw ConfigError("train: val_every must be >= 1");
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
        throw ConfigError("train: val_fraction must be in (0, 1)");
}

ModelCheckpoint::Param& ModelCheckpoint::find(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p;
    throw DataError("checkpoint: no parameter named " + name);
}

namespace {

void add_conv(ModelCheckpoint& mc, const std::string& prefix, int in_ch, int out_ch, int k,
              std::mt19937_64& rng) {
    double stddev = 0.1 * std::sqrt(2.0 / (double(in_ch) * k * k * k));
    ModelCheckpoint::Param w, b;
    w.name = prefix + ".w";
    w.value = Tensor5::randn(Shape5{out_ch, in_ch, k, k, k}, stddev, rng);
    b.name = prefix + ".b";
    b.value = Tensor5::zeros(Shape5{1, out_ch, 1, 1, 1});
    mc.params.push_back(std::move(w));
    mc.params.push_back(std::move(b));
}

} // namespace

ModelCheckpoint build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelCheckpoint mc;
    mc.config = cfg;
    std::mt19937_64 rng(seed);
    const int k = cfg.kernel;
    add_conv(mc, "head", 3, cfg.nf, k, rng);
    for (int r = 0; r < cfg.rrdb_blocks; ++r)
        for (int d = 0; d < 3; ++d)
            for (int i = 0; i < 5; ++i)
                add_conv(mc,
                         "rrdb" + std::to_string(r) + ".db" + std::to_string(d) + ".conv" +
                             std::to_string(i),
                         cfg.nf + i * cfg.gc, i == 4 ? cfg.nf : cfg.gc, k, rng);
    add_conv(mc, "trunk", cfg.nf, cfg.nf, k, rng);
    for (int u = 0; u < cfg.up_blocks; ++u) add_conv(mc, "up" + std::to_string(u), cfg.nf, cfg.nf, k, rng);
    add_conv(mc, "hr", cfg.nf, cfg.nf, k, rng);
    add_conv(mc, "out", cfg.nf, 3, k, rng);
    return mc;
}

int smrnet_forward(Graph& g, const ModelCheckpoint& model, int input, bool train_mode,
                   std::vector<int>* param_nodes) {
    const ModelConfig& cfg = model.config;
    std::vector<int> ids;
    ids.reserve(model.params.size());
    for (const auto& p : model.params) ids.push_back(g.leaf(p.value, train_mode));
    if (param_nodes) *param_nodes = ids;

    // Parameters are consumed in the exact order build_model emitted them.
    std::size_t at = 0;
    auto conv = [&](int x) {
        int w = ids[at], b = ids[at + 1];
        at += 2;
        return g.conv3d(x, w, b);
    };
    auto conv_lrelu = [&](int x) { return g.leaky_relu(conv(x), cfg.lrelu_slope); };

    auto dense_block = [&](int xin) {
        std::vector<int> feats{xin};
        for (int i = 0; i < 4; ++i)
            feats.push_back(conv_lrelu(feats.size() == 1 ? xin : g.concat_channels(feats)));
        int fused = conv(g.concat_channels(feats));
        return g.add(xin, g.scale(fused, cfg.res_scale));
    };
    auto rrdb = [&](int x0) {
        int y = dense_block(dense_block(dense_block(x0)));
        return g.add(x0, g.scale(y, cfg.res_scale));
    };

    int fea = conv(input);
    int x = fea;
    for (int r = 0; r < cfg.rrdb_blocks; ++r) x = rrdb(x);
    x = g.add(fea, conv(x));
    for (int u = 0; u < cfg.up_blocks; ++u)
        x = g.leaky_relu(conv(g.nn_upsample(x, cfg.up_factor)), cfg.lrelu_slope);
    x = conv_lrelu(x);
    x = conv(x);
    if (at != ids.size()) throw std::logic_error("smrnet_forward: parameter walk mismatch");
    return x;
}

double lr_at(const TrainConfig& tc, std::int64_t iteration) {
    std::int64_t h = iteration / tc.lr_halve_every;
    return std::ldexp(tc.lr0, -int(std::min<std::int64_t>(h, 10)));
}

void apply_orientation(const double* in, double* out, int channels, int n, int element) {
    if (element < 0 || element >= 48) throw ConfigError("orientation element must be in [0, 48)");
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const int* p = perms[element >> 3];
    const int flips = element & 7;
    const std::size_t cube = std::size_t(n) * n * n;
    for (int c = 0; c < channels; ++c) {
        const double* src = in + std::size_t(c) * cube;
        double* dst = out + std::size_t(c) * cube;
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const int o[3] = {z, y, x};
                    int s[3];
                    for (int a = 0; a < 3; ++a) {
                        int v = o[p[a]];
                        s[a] = (flips >> a & 1) ? n - 1 - v : v;
                    }
                    dst[(std::size_t(z) * n + y) * n + x] =
                        src[(std::size_t(s[0]) * n + s[1]) * n + s[2]];
                }
    }
}

namespace {

// rng() % m is biased by less than 2^-50 for the m used here; kept because it
// is identical across standard library implementations, unlike
// uniform_int_distribution.
std::size_t pick(std::mt19937_64& rng, std::size_t m) { return std::size_t(rng() % m); }

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[pick(rng, i)]);
}

struct CompData {
    std::vector<double> lr_chan, hr_chan; // planar RGB, LR grid / HR crop grid
    double amp_scale = 1.0;
};

} // namespace

TrainResult train(const ModelCheckpoint& model, const SystemMatrix& hr_sm,
                  const SamplingPattern& pattern, const TrainConfig& tc) {
#ifdef __GLIBC__
    // The graph churns through MB-sized activation buffers every iteration;
    // keep them on the heap instead of bouncing mmap/munmap through the kernel.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    const ModelConfig& cfg = model.config;
    cfg.validate();
    tc.validate();
    hr_sm.validate();
    pattern.validate();
    if (pattern.kind != SamplingPattern::Kind::regular)
        throw ConfigError("train: training pairs need a regular sampling pattern");
    if (!(pattern.hr_dims == hr_sm.dims()))
        throw DataError("train: pattern grid does not match the system matrix grid");
    if (pattern.stride != cfg.total_up_factor())
        throw ConfigError("train: pattern stride must equal the model's total upsampling factor");
    const std::size_t n_comp = hr_sm.component_count();
    if (n_comp < 2) throw DataError("train: need at least 2 components to split");

    const Dims3 hd = hr_sm.dims();
    const Dims3 ld = regular_lr_dims(hd, pattern.stride, pattern.offset);
    const int f = pattern.stride;
    const Dims3 od{ld.x * f, ld.y * f, ld.z * f};
    if (pattern.offset.x + od.x > hd.x || pattern.offset.y + od.y > hd.y ||
        pattern.offset.z + od.z > hd.z)
        throw DataError("train: upsampled grid overruns the volume; choose a pattern offset "
                        "with stride - 1 trailing rows to spare");

    bool augment = tc.augment;
    if (augment && !(ld.x == ld.y && ld.y == ld.z)) {
        std::fprintf(stderr, "train: non-cubic grid, orientation augmentation disabled\n");
        augment = false;
    }

    // Encode once; augmentation later permutes voxels of these planes, which
    // commutes with the voxelwise codec since amp_scale is orientation
    // invariant.
    std::vector<CompData> comps(n_comp);
    for (std::size_t k = 0; k < n_comp; ++k) {
        RgbVolume enc = encode(gather_lr_volume(hr_sm.components[k], pattern));
        comps[k].amp_scale = enc.amp_scale;
        comps[k].lr_chan = std::move(enc.data);
        comps[k].hr_chan =
            encode_channels(crop(hr_sm.components[k], pattern.offset, od), enc.amp_scale);
    }

    TrainResult res;
    std::mt19937_64 rng(tc.seed);
    {
        std::vector<std::size_t> order(n_comp);
        for (std::size_t i = 0; i < n_comp; ++i) order[i] = i;
        shuffle_indices(order, rng);
        std::size_t n_val =
            std::max<std::size_t>(1, std::size_t(std::llround(tc.val_fraction * double(n_comp))));
        if (n_val >= n_comp) n_val = n_comp - 1;
        res.train_components.assign(order.begin(), order.end() - std::ptrdiff_t(n_val));
        res.val_components.assign(order.end() - std::ptrdiff_t(n_val), order.end());
        std::sort(res.val_components.begin(), res.val_components.end());
    }
    std::vector<ComplexVolume> val_ref(res.val_components.size());
    for (std::size_t i = 0; i < res.val_components.size(); ++i)
        val_ref[i] = crop(hr_sm.components[res.val_components[i]], pattern.offset, od);

    const std::size_t n_train = res.train_components.size();
    const int mb = tc.minibatch;
    if (std::size_t(mb) > n_train)
        std::fprintf(stderr, "train: minibatch %d exceeds train split %zu, sampling with replacement\n",
                     mb, n_train);

    ModelCheckpoint cur = model;
    for (auto& p : cur.params) {
        if (p.m.data.empty()) p.m = Tensor5::zeros(p.value.shape);
        if (p.v.data.empty()) p.v = Tensor5::zeros(p.value.shape);
    }

    const std::size_t lr_vox = std::size_t(ld.product());
    const std::size_t hr_vox = std::size_t(od.product());
    Tensor5 input(Shape5{mb, 3, ld.z, ld.y, ld.x});
    Tensor5 target(Shape5{mb, 3, od.z, od.y, od.x});

    res.best_val_nrmse = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> scratch;

    auto validate_now = [&]() {
        double se_sum = 0.0, nrmse_sum = 0.0;
        std::size_t se_count = 0, nrmse_count = 0;
        for (std::size_t i = 0; i < res.val_components.size(); ++i) {
            const CompData& cd = comps[res.val_components[i]];
            Graph g;
            Tensor5 one(Shape5{1, 3, ld.z, ld.y, ld.x});
            std::copy(cd.lr_chan.begin(), cd.lr_chan.end(), one.data.begin());
            int out = smrnet_forward(g, cur, g.leaf(std::move(one)), false);
            const Tensor5& ov = g.value(out);
            for (std::size_t j = 0; j < ov.data.size(); ++j) {
                double d = ov.data[j] - cd.hr_chan[j];
                se_sum += d * d;
            }
            se_count += ov.data.size();
            if (val_ref[i].max_abs() > 0.0) {
                ComplexVolume est = decode_channels(ov.data, od, cd.amp_scale);
                nrmse_sum += nrmse(est, val_ref[i]);
                ++nrmse_count;
            }
        }
        double vmse = se_count ? se_sum / double(se_count) : nan;
        double vnrmse = nrmse_count ? nrmse_sum / double(nrmse_count) : nan;
        return std::pair<double, double>(vmse, vnrmse);
    };

    for (std::int64_t it = 1; it <= tc.iterations; ++it) {
        for (int s = 0; s < mb; ++s) {
            std::size_t k;
            if (std::size_t(mb) <= n_train) {
                if (s == 0) scratch = res.train_components;
                std::size_t j = std::size_t(s) + pick(rng, n_train - std::size_t(s));
                std::swap(scratch[std::size_t(s)], scratch[j]);
                k = scratch[std::size_t(s)];
            } else {
                k = res.train_components[pick(rng, n_train)];
            }
            int elem = augment ? int(pick(rng, 48)) : 0;
            apply_orientation(comps[k].lr_chan.data(), input.data.data() + std::size_t(s) * 3 * lr_vox,
                              3, ld.x, elem);
            apply_orientation(comps[k].hr_chan.data(), target.data.data() + std::size_t(s) * 3 * hr_vox,
                              3, od.x, elem);
        }

        Graph g;
        std::vector<int> pid;
        int out = smrnet_forward(g, cur, g.leaf(input), true, &pid);
        int loss = g.mse_loss(out, g.leaf(target));
        g.backward(loss);

        AdamConfig ac;
        ac.lr = lr_at(tc, it - 1);
        ++cur.adam_t;
        for (std::size_t i = 0; i < cur.params.size(); ++i) {
            auto& p = cur.params[i];
            adam_step(p.value, g.grad(pid[i]), p.m, p.v, cur.adam_t, ac);
        }
        ++cur.iteration;

        TrainLogRow row;
        row.iteration = cur.iteration;
        row.train_mse = g.value(loss).data[0];
        row.lr = ac.lr;
        row.val_mse = row.val_nrmse = nan;
        if (it % tc.val_every == 0 || it == tc.iterations) {
            auto [vmse, vnrmse] = validate_now();
            row.val_mse = vmse;
            row.val_nrmse = vnrmse;
            if (vnrmse < res.best_val_nrmse || res.best.params.empty()) {
                res.best = cur;
                res.best_val_nrmse = vnrmse;
                res.best_iteration = cur.iteration;
            }
        }
        res.curve.push_back(row);
    }
    res.best.meta["best_val_nrmse"] = std::to_string(res.best_val_nrmse);
    res.best.meta["best_iteration"] = std::to_string(res.best_iteration);
    return res;
}

namespace {

bool meta_triple(const std::map<std::string, std::string>& meta, const char* key, Idx3& out) {
    auto it = meta.find(key);
    if (it == meta.end()) return false;
    int x = 0, y = 0, z = 0;
    if (std::sscanf(it->second.c_str(), "%d,%d,%d", &x, &y, &z) != 3)
        throw DataError(std::string("meta ") + key + " must be 'x,y,z'");
    out = {x, y, z};
    return true;
}

} // namespace

SystemMatrix recover(const ModelCheckpoint& model, const SystemMatrix& lr_sm, int jobs) {
    model.config.validate();
    lr_sm.validate();
    if (lr_sm.component_count() == 0) throw DataError("recover: empty system matrix");
    const int f = model.config.total_up_factor();
    const Dims3 ld = lr_sm.dims();
    const Dims3 od{ld.x * f, ld.y * f, ld.z * f};

    Idx3 pad_before, pat_off, orig;
    bool have_pb = meta_triple(lr_sm.meta, "pad_before", pad_before);
    bool have_po = meta_triple(lr_sm.meta, "pattern_offset", pat_off);
    bool have_od = meta_triple(lr_sm.meta, "orig_dims", orig);
    bool do_crop = have_pb && have_po && have_od;
    if ((have_pb || have_po || have_od) && !do_crop)
        throw DataError("recover: pad_before/pattern_offset/orig_dims must appear together");
    Idx3 start{pad_before.x - pat_off.x, pad_before.y - pat_off.y, pad_before.z - pat_off.z};
    if (do_crop &&
        (start.x < 0 || start.y < 0 || start.z < 0 || start.x + orig.x > od.x ||
         start.y + orig.y > od.y || start.z + orig.z > od.z))
        throw DataError("recover: recorded crop does not fit the upsampled grid");

    SystemMatrix out;
    out.frequencies = lr_sm.frequencies;
    out.snr = lr_sm.snr;
    out.meta = lr_sm.meta;
    out.meta.erase("pad_before");
    out.meta.erase("pattern_offset");
    out.meta.erase("orig_dims");
    out.meta["recovery"] = "net";
    out.components.resize(lr_sm.component_count());

    int threads = jobs > 0 ? jobs : 0;
#ifdef _OPENMP
    if (threads == 0) threads = omp_get_max_threads();
#else
    threads = 1;
#endif
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t k = 0; k < std::int64_t(lr_sm.component_count()); ++k) {
        const ComplexVolume& lr = lr_sm.components[std::size_t(k)];
        ComplexVolume full;
        if (lr.max_abs() == 0.0) {
            full = ComplexVolume::zeros(od);
        } else {
            RgbVolume enc = encode(lr);
            Graph g;
            Tensor5 in(Shape5{1, 3, ld.z, ld.y, ld.x});
            std::copy(enc.data.begin(), enc.data.end(), in.data.begin());
            int node = smrnet_forward(g, model, g.leaf(std::move(in)), false);
            full = decode_channels(g.value(node).data, od, enc.amp_scale);
        }
        if (lr.voxel_spacing) {
            auto sp = *lr.voxel_spacing;
            full.voxel_spacing = {{sp[0] / f, sp[1] / f, sp[2] / f}};
        }
        out.components[std::size_t(k)] = do_crop ? crop(full, start, orig) : std::move(full);
    }
    return out;
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& model) {
    model.config.validate();
    h5::File file(path, h5::File::Mode::truncate);
    auto wi = [&](const std::string& p, std::int64_t v) {
        file.write(p, std::vector<std::int64_t>{v}, {1});
    };
    auto wd = [&](const std::string& p, double v) { file.write(p, std::vector<double>{v}, {1}); };
    const ModelConfig& c = model.config;
    wi("/config/rrdb_blocks", c.rrdb_blocks);
    wi("/config/up_blocks", c.up_blocks);
    wi("/config/up_factor", c.up_factor);
    wi("/config/nf", c.nf);
    wi("/config/gc", c.gc);
    wi("/config/kernel", c.kernel);
    wd("/config/res_scale", c.res_scale);
    wd("/config/lrelu_slope", c.lrelu_slope);
    wi("/state/adam_t", model.adam_t);
    wi("/state/iteration", model.iteration);
    for (const auto& p : model.params) {
        const Shape5& s = p.value.shape;
        std::vector<hsize_t> shape{hsize_t(s.n), hsize_t(s.c), hsize_t(s.z), hsize_t(s.y),
                                   hsize_t(s.x)};
        file.write("/params/" + p.name, p.value.data, shape);
        if (!p.m.data.empty()) {
            file.write("/adam/m/" + p.name, p.m.data, shape);
            file.write("/adam/v/" + p.name, p.v.data, shape);
        }
    }
    file.ensure_group("/meta");
    for (const auto& [k, v] : model.meta) file.set_attr("/meta", k, v);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    h5::File file(path, h5::File::Mode::read);
    auto ri = [&](const std::string& p) {
        auto v = file.read_int(p);
        if (v.size() != 1) throw DataError("checkpoint: " + p + " must be a scalar");
        return v[0];
    };
    auto rd = [&](const std::string& p) {
        auto v = file.read_double(p);
        if (v.size() != 1) throw DataError("checkpoint: " + p + " must be a scalar");
        return v[0];
    };
    ModelConfig c;
    c.rrdb_blocks = int(ri("/config/rrdb_blocks"));
    c.up_blocks = int(ri("/config/up_blocks"));
    c.up_factor = int(ri("/config/up_factor"));
    c.nf = int(ri("/config/nf"));
    c.gc = int(ri("/config/gc"));
    c.kernel = int(ri("/config/kernel"));
    c.res_scale = rd("/config/res_scale");
    c.lrelu_slope = rd("/config/lrelu_slope");

    ModelCheckpoint mc = build_model(c, 0);
    mc.adam_t = ri("/state/adam_t");
    mc.iteration = ri("/state/iteration");
    for (auto& p : mc.params) {
        auto data = file.read_double("/params/" + p.name);
        if (data.size() != p.value.data.size())
            throw DataError("checkpoint: parameter " + p.name + " has the wrong element count");
        p.value.data = std::move(data);
        std::string mp = "/adam/m/" + p.name;
        if (file.exists(mp)) {
            p.m.shape = p.v.shape = p.value.shape;
            p.m.data = file.read_double(mp);
            p.v.data = file.read_double("/adam/v/" + p.name);
            if (p.m.data.size() != p.value.data.size() || p.v.data.size() != p.value.data.size())
                throw DataError("checkpoint: moment buffers for " + p.name + " have the wrong size");
        } else {
            p.m = Tensor5();
            p.v = Tensor5();
        }
    }
    if (file.exists("/meta"))
        for (const auto& name : file.list_attrs("/meta")) mc.meta[name] = file.get_attr("/meta", name);
    return mc;
}

std::string curve_to_csv(const std::vector<TrainLogRow>& curve) {
    std::string out = "iteration,train_mse,val_mse,val_nrmse,lr\n";
    char buf[64];
    auto cell = [&](double v) -> std::string {
        if (std::isnan(v)) return {};
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const auto& r : curve) {
        out += std::to_string(r.iteration);
        out += ',';
        out += cell(r.train_mse);
        out += ',';
        out += cell(r.val_mse);
        out += ',';
        out += cell(r.val_nrmse);
        out += ',';
        out += cell(r.lr);
        out += '\n';
    }
    return out;
}

} // namespace smr

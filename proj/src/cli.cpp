#include "smr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smr/codec.hpp"
#include "smr/container.hpp"
#include "smr/cs.hpp"
#include "smr/errors.hpp"
#include "smr/experiment.hpp"
#include "smr/mdf.hpp"
#include "smr/metrics.hpp"
#include "smr/recon.hpp"
#include "smr/sampling.hpp"
#include "smr/simgen.hpp"
#include "smr/smrnet.hpp"
#include "smr/toml_lite.hpp"
#include "smr/volume.hpp"

namespace smr {

namespace {

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string triple_str(Idx3 v) {
    return std::to_string(v.x) + "," + std::to_string(v.y) + "," + std::to_string(v.z);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void require_input(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError(what + " path is required");
    if (!std::filesystem::exists(path))
        throw ConfigError(what + " path does not exist: " + path);
}

// Marker so scripts and tests can find the run directory of the most recent
// invocation of a stage without parsing stdout.
void note_latest(const std::string& out_base, const std::string& stage, const std::string& dir) {
    write_text(out_base + "/latest-" + stage + ".txt", dir + "\n");
}

/// Everything one invocation needs: parsed config, global overrides, and the
/// extra per-stage knobs folded into the manifest hash.
struct Invocation {
    ExperimentConfig cfg;
    std::string config_text; // raw config + canonical override lines
    bool force = false;

    std::string hash_text(const std::string& extras) const { return config_text + extras; }
};

nlohmann::json json_number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr; // JSON has no inf/nan; readers treat null as "not finite"
}

// -------------------------------------------------------------------------
// shared geometry: pad the HR grid so every stride divides it cleanly, then
// place the regular pattern with offset = padded mod stride (keeps the last
// upsampled voxel inside the grid; reproduces the canonical 40^3 layout).

struct HrPrep {
    SystemMatrix padded;
    SamplingPattern pattern;
    Idx3 before, after;
    Dims3 orig{};
};

HrPrep prep_regular(const SystemMatrix& hr, int stride) {
    HrPrep p;
    p.orig = hr.dims();
    auto up4 = [](int n) { return (n + 3) / 4 * 4; };
    Dims3 pd{up4(p.orig.x), up4(p.orig.y), up4(p.orig.z)};
    Idx3 diff{pd.x - p.orig.x, pd.y - p.orig.y, pd.z - p.orig.z};
    p.before = {(diff.x + 1) / 2, (diff.y + 1) / 2, (diff.z + 1) / 2};
    p.after = {diff.x / 2, diff.y / 2, diff.z / 2};
    p.padded = hr;
    for (auto& c : p.padded.components) c = zero_pad(c, p.before, p.after);
    p.pattern = regular_pattern(pd, stride, Idx3{pd.x % stride, pd.y % stride, pd.z % stride});
    return p;
}

void stamp_grid_meta(SystemMatrix& sm, const HrPrep& p, int stride) {
    sm.meta["pad_before"] = triple_str(p.before);
    sm.meta["pattern_offset"] = triple_str(p.pattern.offset);
    sm.meta["orig_dims"] = triple_str(p.orig);
    sm.meta["padded_dims"] = triple_str(p.padded.dims());
    sm.meta["pattern_stride"] = std::to_string(stride);
}

Idx3 parse_triple_meta(const SystemMatrix& sm, const std::string& key) {
    auto it = sm.meta.find(key);
    if (it == sm.meta.end()) throw DataError("input matrix lacks meta '" + key + "'");
    int x = 0, y = 0, z = 0;
    if (std::sscanf(it->second.c_str(), "%d,%d,%d", &x, &y, &z) != 3)
        throw DataError("meta '" + key + "' must be 'x,y,z'");
    return {x, y, z};
}

// -------------------------------------------------------------------------
// stages

int stage_simulate(const Invocation& inv) {
    const ExperimentConfig& c = inv.cfg;
    StageContext ctx = begin_stage(c.out, "simulate", inv.hash_text(""), c.seed, {}, inv.force);
    if (ctx.cached) {
        std::cout << "cached simulate " << ctx.dir << "\n";
        note_latest(c.out, "simulate", ctx.dir);
        return 0;
    }

    SystemMatrix sm = simulate_system_matrix(c.scanner, c.sim_dims, 0.0, c.seed, c.jobs);
    double rms_sum = 0.0;
    for (const auto& comp : sm.components) {
        double s2 = 0.0;
        for (const cplx& v : comp.data) s2 += std::norm(v);
        rms_sum += std::sqrt(s2 / double(comp.data.size()));
    }
    double noise_rms = c.sim_noise_rel * rms_sum / double(sm.component_count());
    add_system_noise(sm, noise_rms, c.seed);
    sm = snr_filter(sm, c.snr_threshold);
    if (sm.component_count() == 0)
        throw NumericError("simulate: no component passed the SNR threshold; lower noise_rel");
    sm = keep_top_snr(sm, std::size_t(c.sim_components));
    sm.meta["variant"] = "true";

    ConcentrationImage phantom = make_phantom(phantom_kind_from_string(c.phantom), c.sim_dims);

    Measurement clean = simulate_measurement(sm, phantom, 0.0, c.seed);
    double umax = 0.0;
    for (const cplx& v : clean.u_hat) umax = std::max(umax, std::abs(v));
    Measurement meas = simulate_measurement(sm, phantom, c.meas_noise_rel * umax, c.seed);

    save_system_matrix(ctx.path("sm_true.h5"), sm);
    save_image(ctx.path("phantom.h5"), phantom);
    save_measurement(ctx.path("measurement.h5"), meas);
    finish_stage(ctx, {"sm_true.h5", "phantom.h5", "measurement.h5"});
    note_latest(c.out, "simulate", ctx.dir);
    std::cout << "ok simulate " << ctx.dir << " components=" << sm.component_count() << "\n";
    return 0;
}

int stage_ingest(const Invocation& inv, const std::string& in, const std::string& kind) {
    require_input(in, "--in");
    if (kind != "sm" && kind != "measurement")
        throw ConfigError("--kind must be 'sm' or 'measurement'");
    StageContext ctx =
        begin_stage(inv.cfg.out, "ingest", inv.hash_text("kind=" + kind), inv.cfg.seed, {in},
                    inv.force);
    if (ctx.cached) {
        std::cout << "cached ingest " << ctx.dir << "\n";
        note_latest(inv.cfg.out, "ingest", ctx.dir);
        return 0;
    }
    std::string out_name;
    if (kind == "sm") {
        SystemMatrix sm = ingest_mdf_system_matrix(in);
        out_name = "sm_mdf.h5";
        save_system_matrix(ctx.path(out_name), sm);
        std::cout << "ok ingest " << ctx.dir << " dims=" << sm.dims().x << "x" << sm.dims().y
                  << "x" << sm.dims().z << " components=" << sm.component_count() << "\n";
    } else {
        Measurement m = ingest_mdf_measurement(in);
        out_name = "measurement_mdf.h5";
        save_measurement(ctx.path(out_name), m);
        std::cout << "ok ingest " << ctx.dir << " components=" << m.u_hat.size() << "\n";
    }
    finish_stage(ctx, {out_name});
    note_latest(inv.cfg.out, "ingest", ctx.dir);
    return 0;
}

int stage_subsample(const Invocation& inv, const std::string& in) {
    const ExperimentConfig& c = inv.cfg;
    require_input(in, "--in");
    StageContext ctx = begin_stage(c.out, "subsample", inv.hash_text(""), c.seed, {in}, inv.force);
    if (ctx.cached) {
        std::cout << "cached subsample " << ctx.dir << "\n";
        note_latest(c.out, "subsample", ctx.dir);
        return 0;
    }

    SystemMatrix hr = snr_filter(load_system_matrix(in), c.snr_threshold);
    if (hr.component_count() == 0) throw DataError("subsample: no components above SNR threshold");
    std::vector<std::string> outputs;

    if (c.sub_pattern == "regular") {
        int stride = c.stride();
        HrPrep prep = prep_regular(hr, stride);
        SystemMatrix lr;
        lr.frequencies = hr.frequencies;
        lr.snr = hr.snr;
        lr.meta = hr.meta;
        lr.components.reserve(hr.component_count());
        for (const auto& comp : prep.padded.components)
            lr.components.push_back(gather_lr_volume(comp, prep.pattern));
        stamp_grid_meta(lr, prep, stride);
        lr.meta["variant"] = "lr";
        save_system_matrix(ctx.path("sm_lr.h5"), lr);
        write_text(ctx.path("pattern.json"), pattern_to_json(prep.pattern) + "\n");
        outputs = {"sm_lr.h5", "pattern.json"};
        std::cout << "ok subsample " << ctx.dir << " lr=" << lr.dims().x << "x" << lr.dims().y
                  << "x" << lr.dims().z << "\n";
    } else {
        std::int64_t n = hr.dims().product();
        std::int64_t target = std::max<std::int64_t>(1, n / c.sub_factor);
        SamplingPattern pat = poisson_pattern(hr.dims(), target, c.seed);
        write_text(ctx.path("pattern.json"), pattern_to_json(pat, true) + "\n");
        outputs = {"pattern.json"};
        std::cout << "ok subsample " << ctx.dir << " samples=" << pat.count()
                  << " radius=" << fmt_num(pat.radius) << "\n";
    }
    finish_stage(ctx, outputs);
    note_latest(c.out, "subsample", ctx.dir);
    return 0;
}

int stage_train(const Invocation& inv, const std::string& in) {
    const ExperimentConfig& c = inv.cfg;
    require_input(in, "--in");
    StageContext ctx = begin_stage(c.out, "train", inv.hash_text(""), c.seed, {in}, inv.force);
    if (ctx.cached) {
        std::cout << "cached train " << ctx.dir << "\n";
        note_latest(c.out, "train", ctx.dir);
        return 0;
    }

    SystemMatrix hr = snr_filter(load_system_matrix(in), c.snr_threshold);
    if (hr.component_count() < 2) throw DataError("train: need at least 2 components above threshold");
    int stride = c.stride();
    HrPrep prep = prep_regular(hr, stride);

    ModelConfig mc = c.model;
    // total upsampling must match the decimation stride
    if (stride == 4) {
        mc.up_factor = 2;
        mc.up_blocks = 2;
    } else {
        mc.up_factor = stride;
        mc.up_blocks = 1;
    }
    ModelCheckpoint model = build_model(mc, c.seed);
    TrainConfig tc = c.train;
    tc.seed = c.seed;

    TrainResult result = train(model, prep.padded, prep.pattern, tc);
    result.best.meta["subsample_factor"] = std::to_string(c.sub_factor);
    save_checkpoint(ctx.path("checkpoint.h5"), result.best);
    write_text(ctx.path("curve.csv"), curve_to_csv(result.curve));
    nlohmann::json split;
    split["train"] = result.train_components;
    split["val"] = result.val_components;
    split["best_iteration"] = result.best_iteration;
    split["best_val_nrmse"] = json_number(result.best_val_nrmse);
    write_text(ctx.path("split.json"), split.dump(2) + "\n");
    finish_stage(ctx, {"checkpoint.h5", "curve.csv", "split.json"});
    note_latest(c.out, "train", ctx.dir);
    std::cout << "ok train " << ctx.dir << " best_val_nrmse=" << fmt_num(result.best_val_nrmse)
              << " at_iteration=" << result.best_iteration << "\n";
    return 0;
}

int stage_recover_net(const Invocation& inv, const std::string& in, const std::string& checkpoint,
                      const std::string& baseline) {
    const ExperimentConfig& c = inv.cfg;
    require_input(in, "--in");
    bool trilinear = baseline == "trilinear";
    if (!baseline.empty() && !trilinear)
        throw ConfigError("--baseline only supports 'trilinear'");
    std::vector<std::string> inputs{in};
    if (!trilinear) {
        require_input(checkpoint, "--checkpoint");
        inputs.push_back(checkpoint);
    }
    StageContext ctx = begin_stage(c.out, "recover-net", inv.hash_text("baseline=" + baseline),
                                   c.seed, inputs, inv.force);
    if (ctx.cached) {
        std::cout << "cached recover-net " << ctx.dir << "\n";
        note_latest(c.out, "recover-net", ctx.dir);
        return 0;
    }

    SystemMatrix lr = load_system_matrix(in);
    SystemMatrix rec;
    std::string out_name;
    if (trilinear) {
        int stride = lr.meta.count("pattern_stride")
                         ? std::atoi(lr.meta.at("pattern_stride").c_str())
                         : 0;
        if (stride < 1) throw DataError("recover-net: input lacks meta 'pattern_stride'");
        Idx3 off = parse_triple_meta(lr, "pattern_offset");
        Idx3 before = parse_triple_meta(lr, "pad_before");
        Dims3 padded = parse_triple_meta(lr, "padded_dims");
        Dims3 orig = parse_triple_meta(lr, "orig_dims");
        rec = lr;
        for (auto& comp : rec.components)
            comp = crop(trilinear_upsample(comp, padded, stride, off), before, orig);
        for (const char* k : {"pad_before", "pattern_offset", "orig_dims", "padded_dims",
                              "pattern_stride"})
            rec.meta.erase(k);
        rec.meta["recovery"] = "trilinear";
        rec.meta["variant"] = "trilinear";
        out_name = "sm_trilinear.h5";
    } else {
        ModelCheckpoint model = load_checkpoint(checkpoint);
        rec = recover(model, lr, c.jobs);
        rec.meta["variant"] = "net";
        out_name = "sm_net.h5";
    }
    save_system_matrix(ctx.path(out_name), rec);
    finish_stage(ctx, {out_name});
    note_latest(c.out, "recover-net", ctx.dir);
    std::cout << "ok recover-net " << ctx.dir << " dims=" << rec.dims().x << "x" << rec.dims().y
              << "x" << rec.dims().z << "\n";
    return 0;
}

int stage_recover_cs(const Invocation& inv, const std::string& in, const std::string& pattern) {
    const ExperimentConfig& c = inv.cfg;
    require_input(in, "--in");
    require_input(pattern, "--pattern");
    StageContext ctx =
        begin_stage(c.out, "recover-cs", inv.hash_text(""), c.seed, {in, pattern}, inv.force);
    if (ctx.cached) {
        std::cout << "cached recover-cs " << ctx.dir << "\n";
        note_latest(c.out, "recover-cs", ctx.dir);
        return 0;
    }

    SystemMatrix sm = snr_filter(load_system_matrix(in), c.snr_threshold);
    if (sm.component_count() == 0) throw DataError("recover-cs: no components above SNR threshold");
    SamplingPattern pat = pattern_from_json(read_text(pattern));
    if (!(pat.hr_dims == sm.dims()))
        throw DataError("recover-cs: pattern grid does not match the system matrix grid");

    SystemMatrix rec = cs_recover_matrix(sm, pat, c.cs, c.jobs);
    rec.meta["variant"] = "cs";
    save_system_matrix(ctx.path("sm_cs.h5"), rec);

    SystemMatrix zf = sm;
    for (auto& comp : zf.components) comp = scatter_pattern(apply_pattern(comp, pat), pat);
    zf.meta["recovery"] = "zero-filled";
    zf.meta["variant"] = "zero-filled";
    save_system_matrix(ctx.path("sm_zerofill.h5"), zf);

    finish_stage(ctx, {"sm_cs.h5", "sm_zerofill.h5"});
    note_latest(c.out, "recover-cs", ctx.dir);
    std::cout << "ok recover-cs " << ctx.dir << " samples=" << pat.count() << "\n";
    return 0;
}

int stage_sweep_cs(const Invocation& inv, const std::string& in, const std::string& pattern,
                   int subset) {
    const ExperimentConfig& c = inv.cfg;
    require_input(in, "--in");
    require_input(pattern, "--pattern");
    if (subset < 1) throw ConfigError("--subset must be >= 1");
    StageContext ctx =
        begin_stage(c.out, "sweep-cs", inv.hash_text("subset=" + std::to_string(subset)), c.seed,
                    {in, pattern}, inv.force);
    if (ctx.cached) {
        std::cout << "cached sweep-cs " << ctx.dir << "\n";
        note_latest(c.out, "sweep-cs", ctx.dir);
        return 0;
    }

    SystemMatrix sm = snr_filter(load_system_matrix(in), c.snr_threshold);
    if (sm.component_count() == 0) throw DataError("sweep-cs: no components above SNR threshold");
    SamplingPattern pat = pattern_from_json(read_text(pattern));
    if (!(pat.hr_dims == sm.dims()))
        throw DataError("sweep-cs: pattern grid does not match the system matrix grid");

    // evenly spread subset, deterministic
    SystemMatrix sub;
    sub.meta = sm.meta;
    std::size_t k_all = sm.component_count();
    std::size_t step = std::max<std::size_t>(1, k_all / std::size_t(subset));
    for (std::size_t k = 0; k < k_all && sub.components.size() < std::size_t(subset); k += step) {
        sub.components.push_back(sm.components[k]);
        sub.frequencies.push_back(sm.frequencies[k]);
        sub.snr.push_back(sm.snr[k]);
    }

    std::vector<double> mus = c.cs_sweep_mu.empty() ? std::vector<double>{c.cs.mu} : c.cs_sweep_mu;
    std::vector<double> shrinks =
        c.cs_sweep_shrink.empty() ? std::vector<double>{c.cs.shrink_weight} : c.cs_sweep_shrink;
    std::vector<CsParams> grid;
    for (double mu : mus)
        for (double w : shrinks) {
            CsParams p = c.cs;
            p.mu = mu;
            p.shrink_weight = w;
            grid.push_back(p);
        }

    CsSweepResult sweep = cs_param_sweep(sub, pat, grid, c.jobs);
    std::string csv = "mu,shrink_weight,outer_iters,inner_iters,tol,mean_nrmse\n";
    for (const auto& row : sweep.table)
        csv += fmt_num(row.params.mu) + "," + fmt_num(row.params.shrink_weight) + "," +
               std::to_string(row.params.outer_iters) + "," +
               std::to_string(row.params.inner_iters) + "," + fmt_num(row.params.tol) + "," +
               fmt_num(row.mean_nrmse) + "\n";
    write_text(ctx.path("sweep.csv"), csv);
    nlohmann::json best;
    best["mu"] = sweep.best.mu;
    best["shrink_weight"] = sweep.best.shrink_weight;
    best["outer_iters"] = sweep.best.outer_iters;
    best["inner_iters"] = sweep.best.inner_iters;
    best["tol"] = sweep.best.tol;
    write_text(ctx.path("best.json"), best.dump(2) + "\n");
    finish_stage(ctx, {"sweep.csv", "best.json"});
    note_latest(c.out, "sweep-cs", ctx.dir);
    std::cout << "ok sweep-cs " << ctx.dir << " grid=" << grid.size()
              << " best_mu=" << fmt_num(sweep.best.mu)
              << " best_shrink=" << fmt_num(sweep.best.shrink_weight) << "\n";
    return 0;
}

int stage_reconstruct(const Invocation& inv, const std::string& sm_path, const std::string& meas,
                      std::string label) {
    const ExperimentConfig& c = inv.cfg;
    require_input(sm_path, "--sm");
    require_input(meas, "--meas");
    StageContext ctx = begin_stage(c.out, "reconstruct", inv.hash_text("label=" + label), c.seed,
                                   {sm_path, meas}, inv.force);
    if (ctx.cached) {
        std::cout << "cached reconstruct " << ctx.dir << "\n";
        note_latest(c.out, "reconstruct", ctx.dir);
        return 0;
    }

    SystemMatrix sm = load_system_matrix(sm_path);
    Measurement m = load_measurement(meas);
    if (label.empty())
        label = sm.meta.count("variant") ? sm.meta.at("variant") : std::string("sm");
    ReconParams rp = c.recon;
    rp.shuffle_seed = c.recon.shuffle_seed;
    ConcentrationImage img = reconstruct_phantom(sm, m, rp);
    std::string out_name = "image_" + label + ".h5";
    save_image(ctx.path(out_name), img);
    finish_stage(ctx, {out_name});
    note_latest(c.out, "reconstruct", ctx.dir);
    std::cout << "ok reconstruct " << ctx.dir << " label=" << label << "\n";
    return 0;
}

ConcentrationImage magnitude_image(const ComplexVolume& v) {
    ConcentrationImage img = ConcentrationImage::zeros(v.dims);
    for (std::size_t i = 0; i < v.data.size(); ++i) img.values[i] = std::abs(v.data[i]);
    return img;
}

int stage_evaluate(const Invocation& inv, const std::string& recovered, const std::string& truth,
                   const std::string& image, const std::string& truth_image,
                   const std::string& method, int rate) {
    const ExperimentConfig& c = inv.cfg;
    bool sm_mode = !recovered.empty();
    bool img_mode = !image.empty();
    if (sm_mode == img_mode)
        throw ConfigError("evaluate: pass exactly one of --recovered (with --truth) or --image "
                          "(with --truth-image)");
    if (method.empty()) throw ConfigError("evaluate: --method is required");

    std::vector<std::string> inputs;
    if (sm_mode) {
        require_input(recovered, "--recovered");
        require_input(truth, "--truth");
        inputs = {recovered, truth};
    } else {
        require_input(image, "--image");
        require_input(truth_image, "--truth-image");
        inputs = {image, truth_image};
    }
    StageContext ctx =
        begin_stage(c.out, "evaluate",
                    inv.hash_text("method=" + method + " rate=" + std::to_string(rate)), c.seed,
                    inputs, inv.force);
    if (ctx.cached) {
        std::cout << "cached evaluate " << ctx.dir << "\n";
        note_latest(c.out, "evaluate", ctx.dir);
        return 0;
    }

    std::string subject = method + "-" + std::to_string(rate) + "x";
    std::vector<MetricRow> rows;
    nlohmann::json summary;
    summary["method"] = method;
    summary["rate"] = rate;
    std::vector<std::string> outputs;

    if (sm_mode) {
        SystemMatrix rec = load_system_matrix(recovered);
        SystemMatrix ref = load_system_matrix(truth);
        std::vector<ComponentRow> comp = component_report(rec, ref);
        double mean_nrmse = 0.0, mean_psnr = 0.0, mean_ssim = 0.0;
        for (std::size_t k = 0; k < comp.size(); ++k) {
            mean_nrmse += comp[k].nrmse;
            mean_psnr += psnr(rec.components[k], ref.components[k]);
            mean_ssim += ssim3d(magnitude_image(rec.components[k]),
                                magnitude_image(ref.components[k]));
        }
        double n = double(comp.size());
        mean_nrmse /= n;
        mean_psnr /= n;
        mean_ssim /= n;
        write_text(ctx.path("components.csv"), component_csv(comp));
        rows.push_back({subject, "nrmse", mean_nrmse});
        rows.push_back({subject, "psnr", mean_psnr});
        rows.push_back({subject, "ssim", mean_ssim});
        summary["domain"] = "system-matrix";
        summary["metrics"] = {{"nrmse", json_number(mean_nrmse)},
                              {"psnr", json_number(mean_psnr)},
                              {"ssim", json_number(mean_ssim)}};
        summary["components_csv"] = "components.csv";
        outputs = {"components.csv", "metrics.csv", "summary.json"};
    } else {
        ConcentrationImage est = load_image(image);
        ConcentrationImage ref = load_image(truth_image);
        double v_nrmse = nrmse(est, ref);
        double v_psnr = psnr(est, ref);
        double v_ssim = ssim3d(est, ref);
        rows.push_back({subject, "nrmse", v_nrmse});
        rows.push_back({subject, "psnr", v_psnr});
        rows.push_back({subject, "ssim", v_ssim});
        summary["domain"] = "image";
        summary["metrics"] = {{"nrmse", json_number(v_nrmse)},
                              {"psnr", json_number(v_psnr)},
                              {"ssim", json_number(v_ssim)}};
        outputs = {"metrics.csv", "summary.json"};
    }

    write_text(ctx.path("metrics.csv"), rows_to_csv(rows));
    write_text(ctx.path("summary.json"), summary.dump(2) + "\n");
    finish_stage(ctx, outputs);
    note_latest(c.out, "evaluate", ctx.dir);
    std::cout << "ok evaluate " << ctx.dir << " " << subject;
    for (const auto& r : rows) std::cout << " " << r.metric << "=" << fmt_num(r.value);
    std::cout << "\n";
    return 0;
}

int stage_report(const Invocation& inv, std::vector<std::string> summaries) {
    const ExperimentConfig& c = inv.cfg;
    if (summaries.empty()) throw ConfigError("report: pass at least one summary.json via --in");
    for (std::string& s : summaries) {
        if (std::filesystem::is_directory(s)) s += "/summary.json";
        require_input(s, "--in");
    }
    StageContext ctx = begin_stage(c.out, "report", inv.hash_text(""), c.seed, summaries, inv.force);
    if (ctx.cached) {
        std::cout << "cached report " << ctx.dir << "\n";
        note_latest(c.out, "report", ctx.dir);
        return 0;
    }

    struct Entry {
        std::string method, domain;
        int rate = 0;
        double nrmse = 0.0, psnr = 0.0, ssim = 0.0;
    };
    std::vector<Entry> entries;
    for (const std::string& s : summaries) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text(s));
            Entry e;
            e.method = j.at("method").get<std::string>();
            e.rate = j.at("rate").get<int>();
            e.domain = j.at("domain").get<std::string>();
            auto grab = [&](const char* k) {
                const auto& v = j.at("metrics").at(k);
                return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
            };
            e.nrmse = grab("nrmse");
            e.psnr = grab("psnr");
            e.ssim = grab("ssim");
            entries.push_back(e);
        } catch (const nlohmann::json::exception& ex) {
            throw DataError("report: bad summary " + s + ": " + ex.what());
        }
    }
    auto rank = [](const std::string& m) {
        if (m == "trilinear") return 0;
        if (m == "zero-filled") return 1;
        if (m == "cs") return 2;
        if (m == "net") return 3;
        return 4;
    };
    std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
        if (rank(a.method) != rank(b.method)) return rank(a.method) < rank(b.method);
        if (a.method != b.method) return a.method < b.method;
        return a.rate < b.rate;
    });

    std::string csv = "method,rate,domain,nrmse,psnr,ssim\n";
    nlohmann::json table;
    table["columns"] = {"nrmse", "psnr", "ssim"};
    nlohmann::json methods = nlohmann::json::array();
    std::string cur;
    for (const Entry& e : entries) {
        csv += e.method + "," + std::to_string(e.rate) + "," + e.domain + "," +
               fmt_num(e.nrmse) + "," + fmt_num(e.psnr) + "," + fmt_num(e.ssim) + "\n";
        if (e.method != cur) {
            methods.push_back({{"method", e.method}, {"rows", nlohmann::json::array()}});
            cur = e.method;
        }
        methods.back()["rows"].push_back({{"rate", e.rate},
                                          {"domain", e.domain},
                                          {"nrmse", json_number(e.nrmse)},
                                          {"psnr", json_number(e.psnr)},
                                          {"ssim", json_number(e.ssim)}});
    }
    table["methods"] = methods;
    write_text(ctx.path("table.csv"), csv);
    write_text(ctx.path("table.json"), table.dump(2) + "\n");
    finish_stage(ctx, {"table.csv", "table.json"});
    note_latest(c.out, "report", ctx.dir);
    std::cout << "ok report " << ctx.dir << " rows=" << entries.size() << "\n";
    return 0;
}

int run_impl(int argc, const char* const* argv) {
    CLI::App app{"System-matrix recovery toolkit: simulation, subsampling, "
                 "super-resolution and compressed-sensing recovery, reconstruction, metrics"};
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t cli_seed = 0;
    int cli_jobs = 0;
    std::string cli_out;
    bool force = false;
    app.add_option("--config", config_path, "TOML config file")->envname("SMR_CONFIG");
    auto* seed_opt = app.add_option("--seed", cli_seed, "override config seed")->envname("SMR_SEED");
    auto* jobs_opt = app.add_option("--jobs", cli_jobs, "worker cap for parallel stages")
                         ->envname("SMR_JOBS");
    auto* out_opt = app.add_option("--out", cli_out, "output base directory")->envname("SMR_OUT");
    app.add_flag("--force", force, "redo the stage even when cached")->envname("SMR_FORCE");

    std::string in_path, kind = "sm", checkpoint, baseline, pattern, sm_path, meas_path, label;
    std::string recovered, truth, image, truth_image, method;
    std::vector<std::string> report_in;
    int subset = 16, rate = 0;

    auto* c_sim = app.add_subcommand("simulate", "synthesize system matrix, phantom, measurement");
    auto* c_ing = app.add_subcommand("ingest", "convert an MDF file into the native container");
    c_ing->add_option("--in", in_path, "MDF file")->required();
    c_ing->add_option("--kind", kind, "sm | measurement");
    auto* c_sub = app.add_subcommand("subsample", "decimate an HR system matrix");
    c_sub->add_option("--in", in_path, "HR system matrix")->required();
    auto* c_trn = app.add_subcommand("train", "train the super-resolution network");
    c_trn->add_option("--in", in_path, "HR system matrix")->required();
    auto* c_rnet = app.add_subcommand("recover-net", "upsample an LR matrix with a checkpoint");
    c_rnet->add_option("--in", in_path, "LR system matrix")->required();
    c_rnet->add_option("--checkpoint", checkpoint, "trained model");
    c_rnet->add_option("--baseline", baseline, "'trilinear' for the interpolation baseline");
    auto* c_rcs = app.add_subcommand("recover-cs", "compressed-sensing recovery from a pattern");
    c_rcs->add_option("--in", in_path, "system matrix sampled by the pattern")->required();
    c_rcs->add_option("--pattern", pattern, "pattern JSON")->required();
    auto* c_swp = app.add_subcommand("sweep-cs", "grid-search CS parameters on a subset");
    c_swp->add_option("--in", in_path, "system matrix")->required();
    c_swp->add_option("--pattern", pattern, "pattern JSON")->required();
    c_swp->add_option("--subset", subset, "components to sweep on");
    auto* c_rec = app.add_subcommand("reconstruct", "phantom image from SM + measurement");
    c_rec->add_option("--sm", sm_path, "system matrix")->required();
    c_rec->add_option("--meas", meas_path, "measurement")->required();
    c_rec->add_option("--label", label, "image label (default: SM variant)");
    auto* c_evl = app.add_subcommand("evaluate", "metrics for a recovery or a reconstruction");
    c_evl->add_option("--recovered", recovered, "recovered system matrix");
    c_evl->add_option("--truth", truth, "reference system matrix");
    c_evl->add_option("--image", image, "reconstructed image");
    c_evl->add_option("--truth-image", truth_image, "reference image");
    c_evl->add_option("--method", method, "method label for the report")->required();
    c_evl->add_option("--rate", rate, "subsampling factor label");
    auto* c_rep = app.add_subcommand("report", "summary table from evaluate outputs");
    c_rep->add_option("--in", report_in, "summary.json files or their run dirs")->required();

    for (CLI::App* sub :
         {c_sim, c_ing, c_sub, c_trn, c_rnet, c_rcs, c_swp, c_rec, c_evl, c_rep})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "smr: config-error: " << e.what() << "\n";
        return 2;
    }

    Invocation inv;
    if (!config_path.empty()) {
        toml::Table t = toml::Table::parse_file(config_path);
        inv.cfg = ExperimentConfig::from_toml(t);
        inv.config_text = t.source();
    }
    if (seed_opt->count()) inv.cfg.seed = std::uint64_t(cli_seed);
    if (jobs_opt->count()) inv.cfg.jobs = cli_jobs;
    if (out_opt->count()) inv.cfg.out = cli_out;
    inv.cfg.train.seed = inv.cfg.seed;
    inv.cfg.validate();
    inv.force = force;
    inv.config_text += "\n#seed=" + std::to_string(inv.cfg.seed) + "\n";

    std::error_code ec;
    std::filesystem::create_directories(inv.cfg.out, ec);
    if (ec) throw DataError("cannot create output directory " + inv.cfg.out + ": " + ec.message());

    if (c_sim->parsed()) return stage_simulate(inv);
    if (c_ing->parsed()) return stage_ingest(inv, in_path, kind);
    if (c_sub->parsed()) return stage_subsample(inv, in_path);
    if (c_trn->parsed()) return stage_train(inv, in_path);
    if (c_rnet->parsed()) return stage_recover_net(inv, in_path, checkpoint, baseline);
    if (c_rcs->parsed()) return stage_recover_cs(inv, in_path, pattern);
    if (c_swp->parsed()) return stage_sweep_cs(inv, in_path, pattern, subset);
    if (c_rec->parsed()) return stage_reconstruct(inv, sm_path, meas_path, label);
    if (c_evl->parsed())
        return stage_evaluate(inv, recovered, truth, image, truth_image, method, rate);
    if (c_rep->parsed()) return stage_report(inv, report_in);
    throw ConfigError("no subcommand given");
}

std::string one_line(const char* what) {
    std::string s = what ? what : "";
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    try {
        return run_impl(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "smr: config-error: " << one_line(e.what()) << "\n";
        return kConfigExit;
    } catch (const DataError& e) {
        std::cerr << "smr: data-error: " << one_line(e.what()) << "\n";
        return kDataExit;
    } catch (const NumericError& e) {
        std::cerr << "smr: numeric-error: " << one_line(e.what()) << "\n";
        return kNumericExit;
    } catch (const std::exception& e) {
        std::cerr << "smr: internal-error: " << one_line(e.what()) << "\n";
        return kNumericExit;
    }
}

} // namespace smr

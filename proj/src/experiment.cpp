#include "smr/experiment.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <hdf5.h>
#include <set>

#include <fftw3.h>

#include "json.hpp"
#include "smr/errors.hpp"

namespace smr {

const char* const kVersion = "1.0.0";

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read input file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(buf, std::size_t(in.gcount()), h);
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string manifest_to_json(const StageManifest& m) {
    nlohmann::json j;
    j["stage"] = m.stage;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["versions"] = m.versions;
    j["wall_clock_sec"] = m.wall_clock_sec;
    j["timestamp"] = m.timestamp;
    return j.dump(2) + "\n";
}

StageManifest manifest_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    StageManifest m;
    try {
        m.stage = j.at("stage").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.versions = j.at("versions").get<std::map<std::string, std::string>>();
        m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
        m.timestamp = j.at("timestamp").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    return m;
}

namespace {

std::map<std::string, std::string> library_versions() {
    std::map<std::string, std::string> v;
    v["smr"] = kVersion;
    v["hdf5"] = std::to_string(H5_VERS_MAJOR) + "." + std::to_string(H5_VERS_MINOR) + "." +
                std::to_string(H5_VERS_RELEASE);
    v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
    v["fftw"] = fftw_version;
    return v;
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

StageContext begin_stage(const std::string& out_base, const std::string& stage,
                         const std::string& config_text, std::uint64_t seed,
                         const std::vector<std::string>& input_paths, bool force) {
    StageContext ctx;
    std::uint64_t h = fnv1a(stage);
    h = fnv1a(config_text, h);
    h = fnv1a(&seed, sizeof seed, h);
    for (const std::string& p : input_paths) {
        std::uint64_t fh = hash_file(p);
        h = fnv1a(&fh, sizeof fh, h);
        ctx.manifest.inputs[p] = hash_hex(fh);
    }
    ctx.manifest.stage = stage;
    ctx.manifest.config_hash = hash_hex(h);
    ctx.manifest.seed = seed;
    ctx.manifest.versions = library_versions();
    ctx.dir = out_base + "/" + stage + "-" + ctx.manifest.config_hash;
    ctx.started = std::chrono::steady_clock::now();

    std::error_code ec;
    std::filesystem::create_directories(ctx.dir, ec);
    if (ec) throw DataError("cannot create run directory " + ctx.dir + ": " + ec.message());

    std::string mpath = ctx.dir + "/manifest.json";
    if (!force && std::filesystem::exists(mpath)) {
        std::ifstream in(mpath, std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            StageManifest prev = manifest_from_json(text);
            if (prev.config_hash == ctx.manifest.config_hash) {
                ctx.manifest = prev;
                ctx.cached = true;
            }
        } catch (const DataError&) {
            // stale or corrupt manifest: redo the stage
        }
    }
    return ctx;
}

void finish_stage(StageContext& ctx, const std::vector<std::string>& outputs) {
    if (ctx.cached) return;
    ctx.manifest.outputs = outputs;
    ctx.manifest.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
    ctx.manifest.timestamp = utc_now();
    std::ofstream out(ctx.dir + "/manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in " + ctx.dir);
    out << manifest_to_json(ctx.manifest);
}

namespace {

const std::set<std::string> kKnownKeys = {
    "seed", "jobs", "out",
    "simulate.dims", "simulate.components", "simulate.noise_rel", "simulate.snr_threshold",
    "simulate.phantom", "simulate.meas_noise_rel", "simulate.base_frequency",
    "simulate.drive_cycles", "simulate.sample_points", "simulate.gradient",
    "simulate.drive_amplitude", "simulate.particle_diameter", "simulate.temperature",
    "simulate.saturation_magnetization",
    "subsample.factor", "subsample.pattern",
    "model.rrdb_blocks", "model.up_blocks", "model.up_factor", "model.nf", "model.gc",
    "model.res_scale", "model.lrelu_slope", "model.kernel",
    "train.iterations", "train.minibatch", "train.lr0", "train.lr_halve_every",
    "train.augment", "train.val_every", "train.val_fraction",
    "cs.mu", "cs.outer_iters", "cs.inner_iters", "cs.shrink_weight", "cs.tol",
    "cs.sweep_mu", "cs.sweep_shrink",
    "recon.lambda_rel", "recon.iterations", "recon.snr_threshold",
    "recon.enforce_real_nonneg", "recon.shuffle_seed",
};

std::array<double, 3> axis_triple(const toml::Table& t, const std::string& key, double fallback) {
    if (!t.has(key)) return {fallback, fallback, fallback};
    if (t.at(key).kind == toml::Value::Kind::array) {
        auto a = t.get_double_array(key, {});
        if (a.size() != 3)
            throw ConfigError("config: '" + key + "' must be a scalar or a 3-element array");
        return {a[0], a[1], a[2]};
    }
    double v = t.get_double(key, fallback);
    return {v, v, v};
}

} // namespace

ExperimentConfig ExperimentConfig::from_toml(const toml::Table& t) {
    for (const std::string& k : t.keys())
        if (kKnownKeys.count(k) == 0 && k.rfind("paths.", 0) != 0)
            throw ConfigError("config: unknown key '" + k + "'");

    ExperimentConfig c;
    c.seed = std::uint64_t(t.get_int("seed", std::int64_t(c.seed)));
    c.jobs = int(t.get_int("jobs", c.jobs));
    c.out = t.get_string("out", c.out);

    if (t.has("simulate.dims")) {
        if (t.at("simulate.dims").kind == toml::Value::Kind::array) {
            auto a = t.get_double_array("simulate.dims", {});
            if (a.size() != 3) throw ConfigError("config: 'simulate.dims' must have 3 entries");
            c.sim_dims = {int(a[0]), int(a[1]), int(a[2])};
        } else {
            int d = int(t.get_int("simulate.dims", 32));
            c.sim_dims = {d, d, d};
        }
    }
    c.sim_components = t.get_int("simulate.components", c.sim_components);
    c.sim_noise_rel = t.get_double("simulate.noise_rel", c.sim_noise_rel);
    c.snr_threshold = t.get_double("simulate.snr_threshold", c.snr_threshold);
    c.phantom = t.get_string("simulate.phantom", c.phantom);
    c.meas_noise_rel = t.get_double("simulate.meas_noise_rel", c.meas_noise_rel);

    c.scanner.base_frequency = t.get_double("simulate.base_frequency", c.scanner.base_frequency);
    if (t.has("simulate.drive_cycles")) {
        auto cycles = t.get_double_array("simulate.drive_cycles", {});
        if (cycles.size() != 3)
            throw ConfigError("config: 'simulate.drive_cycles' must have 3 entries");
        for (int a = 0; a < 3; ++a)
            c.scanner.drive_frequencies[std::size_t(a)] = cycles[std::size_t(a)] * c.scanner.base_frequency;
    } else {
        for (int a = 0; a < 3; ++a) {
            double cycles = c.scanner.drive_frequencies[std::size_t(a)] / 781.25;
            c.scanner.drive_frequencies[std::size_t(a)] = cycles * c.scanner.base_frequency;
        }
    }
    c.scanner.sample_points = int(t.get_int("simulate.sample_points", c.scanner.sample_points));
    c.scanner.gradient = axis_triple(t, "simulate.gradient", c.scanner.gradient[0]);
    c.scanner.drive_amplitudes =
        axis_triple(t, "simulate.drive_amplitude", c.scanner.drive_amplitudes[0]);
    c.scanner.particle_diameter =
        t.get_double("simulate.particle_diameter", c.scanner.particle_diameter);
    c.scanner.temperature = t.get_double("simulate.temperature", c.scanner.temperature);
    c.scanner.saturation_magnetization =
        t.get_double("simulate.saturation_magnetization", c.scanner.saturation_magnetization);

    c.sub_factor = int(t.get_int("subsample.factor", c.sub_factor));
    c.sub_pattern = t.get_string("subsample.pattern", c.sub_pattern);

    c.model.rrdb_blocks = int(t.get_int("model.rrdb_blocks", c.model.rrdb_blocks));
    c.model.up_blocks = int(t.get_int("model.up_blocks", c.model.up_blocks));
    c.model.up_factor = int(t.get_int("model.up_factor", c.model.up_factor));
    c.model.nf = int(t.get_int("model.nf", c.model.nf));
    c.model.gc = int(t.get_int("model.gc", c.model.gc));
    c.model.res_scale = t.get_double("model.res_scale", c.model.res_scale);
    c.model.lrelu_slope = t.get_double("model.lrelu_slope", c.model.lrelu_slope);
    c.model.kernel = int(t.get_int("model.kernel", c.model.kernel));

    c.train.iterations = t.get_int("train.iterations", c.train.iterations);
    c.train.minibatch = int(t.get_int("train.minibatch", c.train.minibatch));
    c.train.lr0 = t.get_double("train.lr0", c.train.lr0);
    c.train.lr_halve_every = t.get_int("train.lr_halve_every", c.train.lr_halve_every);
    c.train.augment = t.get_bool("train.augment", c.train.augment);
    c.train.val_every = t.get_int("train.val_every", c.train.val_every);
    c.train.val_fraction = t.get_double("train.val_fraction", c.train.val_fraction);
    c.train.seed = c.seed;

    c.cs.mu = t.get_double("cs.mu", c.cs.mu);
    c.cs.outer_iters = int(t.get_int("cs.outer_iters", c.cs.outer_iters));
    c.cs.inner_iters = int(t.get_int("cs.inner_iters", c.cs.inner_iters));
    c.cs.shrink_weight = t.get_double("cs.shrink_weight", c.cs.shrink_weight);
    c.cs.tol = t.get_double("cs.tol", c.cs.tol);
    c.cs_sweep_mu = t.get_double_array("cs.sweep_mu", {});
    c.cs_sweep_shrink = t.get_double_array("cs.sweep_shrink", {});

    c.recon.lambda_rel = t.get_double("recon.lambda_rel", c.recon.lambda_rel);
    c.recon.iterations = int(t.get_int("recon.iterations", c.recon.iterations));
    c.recon.snr_threshold = t.get_double("recon.snr_threshold", c.recon.snr_threshold);
    c.recon.enforce_real_nonneg = t.get_bool("recon.enforce_real_nonneg", c.recon.enforce_real_nonneg);
    c.recon.shuffle_seed = std::uint64_t(t.get_int("recon.shuffle_seed", 0));

    for (const std::string& k : t.keys())
        if (k.rfind("paths.", 0) == 0) c.paths[k.substr(6)] = t.get_string(k, "");

    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (jobs < 0) throw ConfigError("config: jobs must be >= 0");
    if (out.empty()) throw ConfigError("config: out must not be empty");
    scanner.validate();
    if (sim_dims.x < 1 || sim_dims.y < 1 || sim_dims.z < 1)
        throw ConfigError("config: simulate.dims must be positive");
    if (sim_components < 1) throw ConfigError("config: simulate.components must be >= 1");
    if (sim_noise_rel < 0.0) throw ConfigError("config: simulate.noise_rel must be >= 0");
    if (meas_noise_rel < 0.0) throw ConfigError("config: simulate.meas_noise_rel must be >= 0");
    if (snr_threshold < 0.0) throw ConfigError("config: simulate.snr_threshold must be >= 0");
    phantom_kind_from_string(phantom);
    (void)stride();
    if (sub_pattern != "regular" && sub_pattern != "poisson")
        throw ConfigError("config: subsample.pattern must be 'regular' or 'poisson'");
    model.validate();
    train.validate();
    cs.validate();
    recon.validate();
    for (double m : cs_sweep_mu)
        if (!(m > 0.0)) throw ConfigError("config: cs.sweep_mu entries must be positive");
    for (double w : cs_sweep_shrink)
        if (!(w > 0.0)) throw ConfigError("config: cs.sweep_shrink entries must be positive");
}

int ExperimentConfig::stride() const {
    switch (sub_factor) {
    case 8: return 2;
    case 27: return 3;
    case 64: return 4;
    default: throw ConfigError("config: subsample.factor must be 8, 27, or 64");
    }
}

} // namespace smr

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smr/cs.hpp"
#include "smr/recon.hpp"
#include "smr/simgen.hpp"
#include "smr/smrnet.hpp"
#include "smr/toml_lite.hpp"

namespace smr {

extern const char* const kVersion;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Content hash of a file (streamed). Throws DataError when unreadable.
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

/// Everything one pipeline stage needs to be reproduced: identity, inputs by
/// content hash, outputs, library versions, and wall clock.
struct StageManifest {
    std::string stage;
    std::string config_hash; // hex over (stage, config text, seed, input hashes)
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs; // path -> content hash hex
    std::vector<std::string> outputs;          // file names relative to the run dir
    std::map<std::string, std::string> versions;
    double wall_clock_sec = 0.0;
    std::string timestamp; // UTC, second resolution
};

std::string manifest_to_json(const StageManifest& m);
StageManifest manifest_from_json(const std::string& text);

/// Open (or find) the run directory <out_base>/<stage>-<hash>. When a
/// manifest with the same hash is already present the stage is a no-op
/// unless forced.
struct StageContext {
    std::string dir;
    bool cached = false;
    StageManifest manifest;
    std::chrono::steady_clock::time_point started;

    std::string path(const std::string& name) const { return dir + "/" + name; }
};

StageContext begin_stage(const std::string& out_base, const std::string& stage,
                         const std::string& config_text, std::uint64_t seed,
                         const std::vector<std::string>& input_paths, bool force);
/// Records outputs + wall clock and writes manifest.json into the run dir.
void finish_stage(StageContext& ctx, const std::vector<std::string>& outputs);

/// All stage parameters in one place, filled from a config file with
/// defaults matching the desk-scale pipeline. Sections: top-level (seed,
/// jobs, out), [simulate], [subsample], [model], [train], [cs], [recon],
/// [paths].
struct ExperimentConfig {
    std::uint64_t seed = 1;
    int jobs = 0;
    std::string out = "runs";

    // simulate
    ScannerConfig scanner;
    Dims3 sim_dims{32, 32, 32};
    std::int64_t sim_components = 256; // keep top-K by SNR after thresholding
    double sim_noise_rel = 0.05;       // noise RMS relative to the mean clean component RMS
    double snr_threshold = 3.0;
    std::string phantom = "shape";
    double meas_noise_rel = 0.0; // measurement noise relative to max |u|

    // subsample
    int sub_factor = 8; // 8 | 27 | 64
    std::string sub_pattern = "regular";

    ModelConfig model;
    TrainConfig train;
    CsParams cs;
    std::vector<double> cs_sweep_mu, cs_sweep_shrink;
    ReconParams recon;

    std::map<std::string, std::string> paths; // optional input paths by role

    static ExperimentConfig from_toml(const toml::Table& t);
    void validate() const;

    /// Subsampling stride per axis: cbrt(sub_factor).
    int stride() const;
};

} // namespace smr

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smr/autodiff.hpp"
#include "smr/sampling.hpp"
#include "smr/tensor.hpp"
#include "smr/volume.hpp"

namespace smr {

/// Super-resolution network topology: head conv, R residual-in-residual
/// dense blocks, trunk conv with a global skip, U nearest-neighbor
/// up-convolution blocks, and a two-conv reconstruction tail.
struct ModelConfig {
    int rrdb_blocks = 9;   // R
    int up_blocks = 1;     // U
    int up_factor = 2;     // per up block, 2 or 3
    int nf = 64;           // feature channels
    int gc = 32;           // dense growth channels
    double res_scale = 0.2;
    double lrelu_slope = 0.2;
    int kernel = 3;        // odd, applied throughout

    void validate() const;
    /// up_factor^up_blocks; must land in {2, 3, 4}.
    int total_up_factor() const;
};

struct TrainConfig {
    std::int64_t iterations = 2000;
    int minibatch = 2;
    double lr0 = 1e-4;
    std::int64_t lr_halve_every = 4000; // lr = lr0 * 2^-min(iter/this, 10)
    std::uint64_t seed = 1;
    bool augment = true;
    std::int64_t val_every = 500;
    double val_fraction = 0.1;

    void validate() const;
};

/// Live model and its serialized form: named parameters plus optional Adam
/// moment buffers. Parameter order is fixed by the topology.
struct ModelCheckpoint {
    struct Param {
        std::string name;
        Tensor5 value, m, v;
    };

    ModelConfig config;
    std::vector<Param> params;
    std::int64_t adam_t = 0;
    std::int64_t iteration = 0;
    std::map<std::string, std::string> meta; // codec convention, provenance

    Param& find(const std::string& name);
};

/// Fresh model; conv weights drawn fan-in-normal with gain 0.1
/// (std = 0.1 * sqrt(2 / fan_in)), biases zero. Deterministic in seed.
ModelCheckpoint build_model(const ModelConfig& cfg, std::uint64_t seed = 0);

/// Wires one forward pass onto `g`. Parameters enter as leaves with
/// requires_grad = train_mode; their node ids (aligned with model.params)
/// are returned through param_nodes when non-null.
int smrnet_forward(Graph& g, const ModelCheckpoint& model, int input, bool train_mode,
                   std::vector<int>* param_nodes = nullptr);

/// lr0 halved every lr_halve_every iterations, clamped at lr0 * 2^-10.
double lr_at(const TrainConfig& tc, std::int64_t iteration);

struct TrainLogRow {
    std::int64_t iteration = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;   // NaN when this iteration did not validate
    double val_nrmse = 0.0; // NaN likewise
    double lr = 0.0;
};

struct TrainResult {
    ModelCheckpoint best;  // lowest validation complex NRMSE
    double best_val_nrmse = 0.0;
    std::int64_t best_iteration = 0;
    std::vector<TrainLogRow> curve;
    std::vector<std::size_t> train_components, val_components;
};

/// Trains on (LR, HR) pairs cut from hr_sm by the regular pattern: inputs
/// are RGB-encoded LR components, targets the HR crop aligned with the
/// pattern encoded at the LR amplitude scale. A shared random orientation
/// from the 48-element rotation/reflection group augments each pair.
/// Validation (MSE on RGB, NRMSE after decode) runs every val_every
/// iterations on the held-out split; the best-validation checkpoint wins.
TrainResult train(const ModelCheckpoint& model, const SystemMatrix& hr_sm,
                  const SamplingPattern& pattern, const TrainConfig& tc);

/// Per-component inference: encode, forward, clamp, decode at the input's
/// amp_scale. When lr_sm.meta carries pad_before/pattern_offset/orig_dims
/// (set by the subsampling stage) the output is cropped back onto the
/// original HR grid. All-zero components pass through as zeros. jobs <= 0
/// uses all cores.
SystemMatrix recover(const ModelCheckpoint& model, const SystemMatrix& lr_sm, int jobs = 0);

void save_checkpoint(const std::string& path, const ModelCheckpoint& model);
ModelCheckpoint load_checkpoint(const std::string& path);

/// CSV: iteration,train_mse,val_mse,val_nrmse,lr with empty cells for NaN.
std::string curve_to_csv(const std::vector<TrainLogRow>& curve);

/// One orientation of the 48-element cube symmetry group (6 axis
/// permutations x 8 sign flips) applied to planar channel data on a cubic
/// grid. element in [0, 48); channels move voxelwise.
void apply_orientation(const double* in, double* out, int channels, int n_cube, int element);

} // namespace smr

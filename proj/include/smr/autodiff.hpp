#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "smr/tensor.hpp"

namespace smr {

/// Bias-corrected Adam without weight decay. `t` is the step count after
/// incrementing (first call passes t = 1). m/v must match the parameter
/// shape and persist across calls.
struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(Tensor5& param, const Tensor5& grad, Tensor5& m, Tensor5& v, std::int64_t t,
               const AdamConfig& cfg);

/// Define-by-run reverse-mode tape over Tensor5 nodes. Exactly the ops the
/// network needs; every op allocates a new node holding its output value.
/// Node ids are creation-ordered, which is also a topological order, so
/// backward() is a single reverse sweep. One Graph per training step; a
/// Graph is single-threaded (ops may parallelize internally).
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete; // backward closures capture this
    Graph& operator=(const Graph&) = delete;

    /// New input node. Gradients are only accumulated into nodes created
    /// with requires_grad (and nodes depending on them).
    int leaf(Tensor5 value, bool requires_grad = false);

    /// Same-padded stride-1 cross-correlation. weight is (out_ch, in_ch,
    /// kz, ky, kx) with odd kernel dims; bias shape (1, out_ch, 1, 1, 1).
    int conv3d(int x, int weight, int bias);

    int leaky_relu(int x, double slope = 0.2);

    /// Replicates each voxel factor^3 times; factor 2 or 3.
    int nn_upsample(int x, int factor);

    int add(int a, int b);
    int scale(int x, double alpha);

    /// Stacks along the channel axis; batch and spatial dims must agree.
    int concat_channels(const std::vector<int>& xs);

    /// Mean squared difference over all elements; scalar-shaped output.
    int mse_loss(int pred, int target);

    const Tensor5& value(int id) const;
    /// Valid after backward() for nodes gradient actually reached; throws
    /// otherwise (node unused by the loss, or requires_grad unset).
    const Tensor5& grad(int id) const;

    /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root
    /// must be scalar-shaped.
    void backward(int root);

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor5 value;
        Tensor5 grad;
        bool requires_grad = false;
        std::function<void()> back; // empty for leaves
    };

    int push(Tensor5 value, bool requires_grad, std::function<void()> back);
    Tensor5& grad_buf(int id);
    void check_id(int id) const;

    std::vector<Node> nodes_;
};

} // namespace smr

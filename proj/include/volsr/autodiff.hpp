#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "volsr/kernels.hpp"

namespace volsr::ad {

/// Tensor shapes are plain dimension lists; volumetric tensors use the
/// canonical 5-rank [batch, channels, depth, height, width] layout.
using Shape = std::vector<int>;

std::size_t numel(const Shape& s);

class Graph;

/// Lightweight handle into a Graph's tape. The id doubles as the node's
/// topological position: every op's inputs have smaller ids.
struct Tensor {
    Graph* graph = nullptr;
    int id = -1;

    bool valid() const { return graph != nullptr && id >= 0; }
    const Shape& shape() const;
    std::span<const double> value() const;
    std::span<const double> grad() const;
};

/// Reverse-mode tape over dense double tensors. Values are computed eagerly
/// as ops are recorded; backward() replays the tape once in reverse order.
/// Single-threaded, deterministic accumulation.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- leaves -----------------------------------------------------------
    Tensor leaf(Shape shape, std::span<const double> values, bool requires_grad);
    Tensor constant(Shape shape, std::span<const double> values);
    Tensor scalar(double v);  // non-differentiable scalar constant, shape {1}

    // --- operators --------------------------------------------------------
    // Stride-1 zero-padded 3D convolution (cross-correlation). bias may be
    // an invalid Tensor to omit it.
    Tensor conv3d(Tensor input, Tensor weight, Tensor bias, std::array<int, 3> padding);

    // Elementwise; equal shapes or scalar (single-element) broadcast.
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor div(Tensor a, Tensor b);
    Tensor scale(Tensor a, double c);
    Tensor relu(Tensor a);  // subgradient at 0 is 0
    Tensor square(Tensor a);
    Tensor sqrt_eps(Tensor a, double eps);  // sqrt(a + eps), eps > 0

    Tensor mean(Tensor a);
    Tensor sum(Tensor a);
    Tensor concat_channels(Tensor a, Tensor b);
    Tensor crop_center(Tensor a, std::array<int, 3> target_dhw);
    // Keeps every second sample per spatial axis (indices 0, 2, 4, ...).
    Tensor stride2_subsample(Tensor a);
    // Scales each across-channel fiber to unit Euclidean norm (+eps inside
    // the square root).
    Tensor channel_unit_normalize(Tensor a, double eps = 1e-10);
    Tensor global_skip_add(Tensor input, Tensor residual) { return add(input, residual); }

    /// Populates gradients of `root` (which must be scalar) with respect to
    /// every reachable tensor that requires gradients.
    void backward(Tensor root);

    // --- node access ------------------------------------------------------
    const Shape& shape(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
    std::span<const double> value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::span<const double> grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        std::vector<int> inputs;
        std::function<void(Graph&, int)> backward_fn;
        bool requires_grad = false;
    };

    friend struct Tensor;

    Tensor make_node(Shape shape, std::vector<int> inputs, bool requires_grad);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    void ensure_grad(int id);
    // Adds g into node id's gradient unless the node does not require one.
    void accumulate(int id, std::span<const double> g);
    double* grad_data(int id);

    Tensor binary_elementwise(Tensor a, Tensor b, int op);

    std::vector<Node> nodes_;
};

/// Central finite-difference gradient check. `build` must construct a scalar
/// loss from the leaf tensor it is given. Returns the maximum over
/// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const Shape& shape, std::span<const double> point,
                  const std::function<Tensor(Graph&, Tensor)>& build, double eps = 1e-5);

}  // namespace volsr::ad

#include "volsr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "volsr/errors.hpp"

namespace volsr::ad {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

const Shape& Tensor::shape() const { return graph->shape(id); }
std::span<const double> Tensor::value() const { return graph->value(id); }
std::span<const double> Tensor::grad() const { return graph->grad(id); }

namespace {

void check_shape(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor shape may not be empty");
    for (int d : s)
        if (d <= 0) throw ShapeError("tensor dims must be positive");
}

bool is_scalar(const Shape& s) { return numel(s) == 1; }

void check_rank5(const Shape& s, const char* what) {
    if (s.size() != 5) throw ShapeError(std::string(what) + " requires a rank-5 tensor");
}

}  // namespace

Tensor Graph::make_node(Shape shape, std::vector<int> inputs, bool requires_grad) {
    check_shape(shape);
    Node n;
    n.shape = std::move(shape);
    n.value.resize(numel(n.shape));
    n.inputs = std::move(inputs);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::ensure_grad(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

double* Graph::grad_data(int id) {
    ensure_grad(id);
    return node(id).grad.data();
}

void Graph::accumulate(int id, std::span<const double> g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    ensure_grad(id);
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

Tensor Graph::leaf(Shape shape, std::span<const double> values, bool requires_grad) {
    Tensor t = make_node(std::move(shape), {}, requires_grad);
    Node& n = node(t.id);
    if (values.size() != n.value.size()) throw ShapeError("leaf value count does not match shape");
    std::copy(values.begin(), values.end(), n.value.begin());
    return t;
}

Tensor Graph::constant(Shape shape, std::span<const double> values) {
    return leaf(std::move(shape), values, false);
}

Tensor Graph::scalar(double v) {
    double buf[1] = {v};
    return constant(Shape{1}, std::span<const double>(buf, 1));
}

Tensor Graph::conv3d(Tensor input, Tensor weight, Tensor bias, std::array<int, 3> padding) {
    check_rank5(input.shape(), "conv3d input");
    check_rank5(weight.shape(), "conv3d weight");
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (ws[1] != is[1])
        throw ShapeError("conv3d channel mismatch: input has " + std::to_string(is[1]) +
                         ", weight expects " + std::to_string(ws[1]));
    kernels::Conv3dDims c;
    c.n = is[0];
    c.ci = is[1];
    c.d = is[2];
    c.h = is[3];
    c.w = is[4];
    c.co = ws[0];
    c.kd = ws[2];
    c.kh = ws[3];
    c.kw = ws[4];
    c.pd = padding[0];
    c.ph = padding[1];
    c.pw = padding[2];
    if (c.pd < 0 || c.ph < 0 || c.pw < 0) throw ShapeError("conv3d padding must be >= 0");
    if (!c.valid()) throw ShapeError("conv3d kernel larger than padded input");

    const bool has_bias = bias.valid();
    if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != c.co))
        throw ShapeError("conv3d bias must have shape [out_channels]");

    std::vector<int> inputs{input.id, weight.id};
    if (has_bias) inputs.push_back(bias.id);
    bool rg = requires_grad(input.id) || requires_grad(weight.id) ||
              (has_bias && requires_grad(bias.id));
    Tensor out = make_node(Shape{c.n, c.co, c.od(), c.oh(), c.ow()}, std::move(inputs), rg);

    kernels::conv3d_forward(node(out.id).value.data(), value(input.id).data(),
                            value(weight.id).data(), has_bias ? value(bias.id).data() : nullptr, c);

    const int in_id = input.id, w_id = weight.id, b_id = has_bias ? bias.id : -1;
    node(out.id).backward_fn = [c, in_id, w_id, b_id](Graph& g, int self) {
        const double* gout = g.grad(self).data();
        if (g.requires_grad(in_id))
            kernels::conv3d_backward_input(g.grad_data(in_id), gout, g.value(w_id).data(), c);
        if (g.requires_grad(w_id))
            kernels::conv3d_backward_weight(g.grad_data(w_id), gout, g.value(in_id).data(), c);
        if (b_id >= 0 && g.requires_grad(b_id))
            kernels::conv3d_backward_bias(g.grad_data(b_id), gout, c);
    };
    return out;
}

// op: 0 add, 1 sub, 2 mul, 3 div
Tensor Graph::binary_elementwise(Tensor a, Tensor b, int op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const bool a_scalar = is_scalar(sa), b_scalar = is_scalar(sb);
    if (!a_scalar && !b_scalar && sa != sb)
        throw ShapeError("elementwise op requires equal shapes or a scalar operand");

    const Shape& out_shape = b_scalar ? sa : sb;
    bool rg = requires_grad(a.id) || requires_grad(b.id);
    Tensor out = make_node(out_shape, {a.id, b.id}, rg);

    auto va = value(a.id);
    auto vb = value(b.id);
    auto& vo = node(out.id).value;
    const std::size_t n = vo.size();
    for (std::size_t i = 0; i < n; ++i) {
        double x = va[a_scalar ? 0 : i];
        double y = vb[b_scalar ? 0 : i];
        vo[i] = op == 0 ? x + y : op == 1 ? x - y : op == 2 ? x * y : x / y;
    }

    const int aid = a.id, bid = b.id;
    node(out.id).backward_fn = [op, aid, bid, a_scalar, b_scalar](Graph& g, int self) {
        auto up = g.grad(self);
        auto va2 = g.value(aid);
        auto vb2 = g.value(bid);
        const std::size_t m = up.size();
        if (g.requires_grad(aid)) {
            double* ga = g.grad_data(aid);
            for (std::size_t i = 0; i < m; ++i) {
                double y = vb2[b_scalar ? 0 : i];
                double d = op == 0 ? up[i]
                           : op == 1 ? up[i]
                           : op == 2 ? up[i] * y
                                     : up[i] / y;
                ga[a_scalar ? 0 : i] += d;
            }
        }
        if (g.requires_grad(bid)) {
            double* gb = g.grad_data(bid);
            for (std::size_t i = 0; i < m; ++i) {
                double x = va2[a_scalar ? 0 : i];
                double y = vb2[b_scalar ? 0 : i];
                double d = op == 0 ? up[i]
                           : op == 1 ? -up[i]
                           : op == 2 ? up[i] * x
                                     : -up[i] * x / (y * y);
                gb[b_scalar ? 0 : i] += d;
            }
        }
    };
    return out;
}

Tensor Graph::add(Tensor a, Tensor b) { return binary_elementwise(a, b, 0); }
Tensor Graph::sub(Tensor a, Tensor b) { return binary_elementwise(a, b, 1); }
Tensor Graph::mul(Tensor a, Tensor b) { return binary_elementwise(a, b, 2); }
Tensor Graph::div(Tensor a, Tensor b) { return binary_elementwise(a, b, 3); }

Tensor Graph::scale(Tensor a, double c) {
    Tensor out = make_node(a.shape(), {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = c * va[i];
    const int aid = a.id;
    node(out.id).backward_fn = [aid, c](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        double* ga = g.grad_data(aid);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += c * up[i];
    };
    return out;
}

Tensor Graph::relu(Tensor a) {
    Tensor out = make_node(a.shape(), {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] > 0.0 ? va[i] : 0.0;
    const int aid = a.id;
    node(out.id).backward_fn = [aid](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        auto va2 = g.value(aid);
        double* ga = g.grad_data(aid);
        for (std::size_t i = 0; i < up.size(); ++i)
            if (va2[i] > 0.0) ga[i] += up[i];
    };
    return out;
}

Tensor Graph::square(Tensor a) {
    Tensor out = make_node(a.shape(), {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * va[i];
    const int aid = a.id;
    node(out.id).backward_fn = [aid](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        auto va2 = g.value(aid);
        double* ga = g.grad_data(aid);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += 2.0 * va2[i] * up[i];
    };
    return out;
}

Tensor Graph::sqrt_eps(Tensor a, double eps) {
    if (!(eps > 0.0)) throw ValidationError("sqrt_eps requires eps > 0");
    Tensor out = make_node(a.shape(), {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = std::sqrt(va[i] + eps);
    const int aid = a.id, oid = out.id;
    node(out.id).backward_fn = [aid, oid](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        auto vo2 = g.value(oid);
        double* ga = g.grad_data(aid);
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += 0.5 * up[i] / vo2[i];
    };
    return out;
}

Tensor Graph::mean(Tensor a) {
    Tensor out = make_node(Shape{1}, {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    double s = 0.0;
    for (double v : va) s += v;
    const double inv = 1.0 / static_cast<double>(va.size());
    node(out.id).value[0] = s * inv;
    const int aid = a.id;
    node(out.id).backward_fn = [aid, inv](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        const double u = g.grad(self)[0] * inv;
        double* ga = g.grad_data(aid);
        const std::size_t n = g.value(aid).size();
        for (std::size_t i = 0; i < n; ++i) ga[i] += u;
    };
    return out;
}

Tensor Graph::sum(Tensor a) {
    Tensor out = make_node(Shape{1}, {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    double s = 0.0;
    for (double v : va) s += v;
    node(out.id).value[0] = s;
    const int aid = a.id;
    node(out.id).backward_fn = [aid](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        const double u = g.grad(self)[0];
        double* ga = g.grad_data(aid);
        const std::size_t n = g.value(aid).size();
        for (std::size_t i = 0; i < n; ++i) ga[i] += u;
    };
    return out;
}

Tensor Graph::concat_channels(Tensor a, Tensor b) {
    check_rank5(a.shape(), "concat_channels");
    check_rank5(b.shape(), "concat_channels");
    const Shape sa = a.shape();  // copied: make_node may reallocate the tape
    const Shape sb = b.shape();
    for (int i : {0, 2, 3, 4})
        if (sa[static_cast<std::size_t>(i)] != sb[static_cast<std::size_t>(i)])
            throw ShapeError("concat_channels requires identical non-channel dims");

    Shape out_shape = sa;
    out_shape[1] = sa[1] + sb[1];
    bool rg = requires_grad(a.id) || requires_grad(b.id);
    Tensor out = make_node(out_shape, {a.id, b.id}, rg);

    const std::size_t spatial = static_cast<std::size_t>(sa[2]) * sa[3] * sa[4];
    const std::size_t ca = static_cast<std::size_t>(sa[1]) * spatial;
    const std::size_t cb = static_cast<std::size_t>(sb[1]) * spatial;
    auto va = value(a.id);
    auto vb = value(b.id);
    auto& vo = node(out.id).value;
    for (int n = 0; n < sa[0]; ++n) {
        std::copy(va.begin() + static_cast<std::ptrdiff_t>(n * ca),
                  va.begin() + static_cast<std::ptrdiff_t>((n + 1) * ca),
                  vo.begin() + static_cast<std::ptrdiff_t>(n * (ca + cb)));
        std::copy(vb.begin() + static_cast<std::ptrdiff_t>(n * cb),
                  vb.begin() + static_cast<std::ptrdiff_t>((n + 1) * cb),
                  vo.begin() + static_cast<std::ptrdiff_t>(n * (ca + cb) + ca));
    }

    const int aid = a.id, bid = b.id;
    const int batch = sa[0];
    node(out.id).backward_fn = [aid, bid, ca, cb, batch](Graph& g, int self) {
        auto up = g.grad(self);
        if (g.requires_grad(aid)) {
            double* ga = g.grad_data(aid);
            for (int n = 0; n < batch; ++n)
                for (std::size_t i = 0; i < ca; ++i) ga[n * ca + i] += up[n * (ca + cb) + i];
        }
        if (g.requires_grad(bid)) {
            double* gb = g.grad_data(bid);
            for (int n = 0; n < batch; ++n)
                for (std::size_t i = 0; i < cb; ++i) gb[n * cb + i] += up[n * (ca + cb) + ca + i];
        }
    };
    return out;
}

Tensor Graph::crop_center(Tensor a, std::array<int, 3> target_dhw) {
    check_rank5(a.shape(), "crop_center");
    const Shape s = a.shape();  // copied: make_node may reallocate the tape
    auto [td, th, tw] = target_dhw;
    if (td <= 0 || th <= 0 || tw <= 0) throw ShapeError("crop_center target dims must be positive");
    if (td > s[2] || th > s[3] || tw > s[4])
        throw ShapeError("crop_center target larger than input");
    const int od = (s[2] - td) / 2, oh = (s[3] - th) / 2, ow = (s[4] - tw) / 2;

    Tensor out = make_node(Shape{s[0], s[1], td, th, tw}, {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    const int nc = s[0] * s[1];
    const std::size_t in_chan = static_cast<std::size_t>(s[2]) * s[3] * s[4];
    const std::size_t out_chan = static_cast<std::size_t>(td) * th * tw;
    for (int c = 0; c < nc; ++c)
        for (int z = 0; z < td; ++z)
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x)
                    vo[c * out_chan + (static_cast<std::size_t>(z) * th + y) * tw + x] =
                        va[c * in_chan +
                           (static_cast<std::size_t>(z + od) * s[3] + (y + oh)) * s[4] + (x + ow)];

    const int aid = a.id;
    const int D = s[2], H = s[3], W = s[4];
    node(out.id).backward_fn = [aid, nc, td, th, tw, od, oh, ow, H, W, in_chan, out_chan, D](
                                   Graph& g, int self) {
        (void)D;
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        double* ga = g.grad_data(aid);
        for (int c = 0; c < nc; ++c)
            for (int z = 0; z < td; ++z)
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        ga[c * in_chan + (static_cast<std::size_t>(z + od) * H + (y + oh)) * W +
                           (x + ow)] +=
                            up[c * out_chan + (static_cast<std::size_t>(z) * th + y) * tw + x];
    };
    return out;
}

Tensor Graph::stride2_subsample(Tensor a) {
    check_rank5(a.shape(), "stride2_subsample");
    const Shape s = a.shape();  // copied: make_node may reallocate the tape
    const int td = (s[2] + 1) / 2, th = (s[3] + 1) / 2, tw = (s[4] + 1) / 2;
    Tensor out = make_node(Shape{s[0], s[1], td, th, tw}, {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    const int nc = s[0] * s[1];
    const std::size_t in_chan = static_cast<std::size_t>(s[2]) * s[3] * s[4];
    const std::size_t out_chan = static_cast<std::size_t>(td) * th * tw;
    for (int c = 0; c < nc; ++c)
        for (int z = 0; z < td; ++z)
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x)
                    vo[c * out_chan + (static_cast<std::size_t>(z) * th + y) * tw + x] =
                        va[c * in_chan +
                           (static_cast<std::size_t>(2 * z) * s[3] + 2 * y) * s[4] + 2 * x];

    const int aid = a.id;
    const int H = s[3], W = s[4];
    node(out.id).backward_fn = [aid, nc, td, th, tw, H, W, in_chan, out_chan](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        double* ga = g.grad_data(aid);
        for (int c = 0; c < nc; ++c)
            for (int z = 0; z < td; ++z)
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        ga[c * in_chan + (static_cast<std::size_t>(2 * z) * H + 2 * y) * W + 2 * x] +=
                            up[c * out_chan + (static_cast<std::size_t>(z) * th + y) * tw + x];
    };
    return out;
}

Tensor Graph::channel_unit_normalize(Tensor a, double eps) {
    check_rank5(a.shape(), "channel_unit_normalize");
    if (!(eps > 0.0)) throw ValidationError("channel_unit_normalize requires eps > 0");
    const Shape s = a.shape();  // copied: make_node may reallocate the tape
    Tensor out = make_node(s, {a.id}, requires_grad(a.id));
    auto va = value(a.id);
    auto& vo = node(out.id).value;
    const int batch = s[0], ch = s[1];
    const std::size_t spatial = static_cast<std::size_t>(s[2]) * s[3] * s[4];
    for (int n = 0; n < batch; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * ch * spatial;
        for (std::size_t p = 0; p < spatial; ++p) {
            double ss = 0.0;
            for (int c = 0; c < ch; ++c) {
                double v = va[base + c * spatial + p];
                ss += v * v;
            }
            double inv = 1.0 / std::sqrt(ss + eps);
            for (int c = 0; c < ch; ++c) vo[base + c * spatial + p] = va[base + c * spatial + p] * inv;
        }
    }

    const int aid = a.id, oid = out.id;
    node(out.id).backward_fn = [aid, oid, batch, ch, spatial, eps](Graph& g, int self) {
        if (!g.requires_grad(aid)) return;
        auto up = g.grad(self);
        auto va2 = g.value(aid);
        auto vo2 = g.value(oid);
        double* ga = g.grad_data(aid);
        for (int n = 0; n < batch; ++n) {
            const std::size_t base = static_cast<std::size_t>(n) * ch * spatial;
            for (std::size_t p = 0; p < spatial; ++p) {
                double ss = 0.0, dot = 0.0;
                for (int c = 0; c < ch; ++c) {
                    const std::size_t i = base + c * spatial + p;
                    ss += va2[i] * va2[i];
                    dot += up[i] * vo2[i];
                }
                double inv = 1.0 / std::sqrt(ss + eps);
                for (int c = 0; c < ch; ++c) {
                    const std::size_t i = base + c * spatial + p;
                    ga[i] += inv * (up[i] - vo2[i] * dot);
                }
            }
        }
    };
    return out;
}

void Graph::backward(Tensor root) {
    if (root.graph != this || root.id < 0 || root.id >= node_count())
        throw ValidationError("backward root does not belong to this graph");
    if (numel(shape(root.id)) != 1)
        throw ValidationError("backward requires a scalar root tensor");

    // Reachable set via reverse traversal along input edges.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{root.id};
    reachable[static_cast<std::size_t>(root.id)] = 1;
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        for (int in : node(id).inputs)
            if (!reachable[static_cast<std::size_t>(in)]) {
                reachable[static_cast<std::size_t>(in)] = 1;
                stack.push_back(in);
            }
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (reachable[i] && nodes_[i].requires_grad) {
            nodes_[i].grad.assign(nodes_[i].value.size(), 0.0);
        }
    if (!node(root.id).requires_grad) return;  // nothing trainable below the root
    node(root.id).grad[0] = 1.0;

    // Tape order is topological; one reverse sweep visits each node once.
    for (int id = root.id; id >= 0; --id) {
        Node& n = node(id);
        if (!reachable[static_cast<std::size_t>(id)] || !n.requires_grad || !n.backward_fn)
            continue;
        n.backward_fn(*this, id);
    }
}

double grad_check(const Shape& shape, std::span<const double> point,
                  const std::function<Tensor(Graph&, Tensor)>& build, double eps) {
    const std::size_t n = numel(shape);
    if (point.size() != n) throw ShapeError("grad_check point does not match shape");

    std::vector<double> x(point.begin(), point.end());
    std::vector<double> analytic(n);
    {
        Graph g;
        Tensor leaf = g.leaf(shape, x, true);
        Tensor loss = build(g, leaf);
        if (numel(loss.shape()) != 1) throw ValidationError("grad_check requires a scalar loss");
        g.backward(loss);
        auto gr = leaf.grad();
        std::copy(gr.begin(), gr.end(), analytic.begin());
    }

    auto eval = [&](const std::vector<double>& p) {
        Graph g;
        Tensor leaf = g.leaf(shape, p, false);
        Tensor loss = build(g, leaf);
        return loss.value()[0];
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double save = x[i];
        x[i] = save + eps;
        double fp = eval(x);
        x[i] = save - eps;
        double fm = eval(x);
        x[i] = save;
        double numeric = (fp - fm) / (2.0 * eps);
        double err = std::abs(analytic[i] - numeric) /
                     std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace volsr::ad

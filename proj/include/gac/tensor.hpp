#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace gac {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

// Define-by-run graph node. data is row-major. grad persists across backward
// calls; scratch holds the contribution of the pass in flight, which is folded
// into grad at the end of the pass so that repeated backward calls on the same
// graph accumulate bit-exact multiples.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    std::vector<double> scratch;
    bool requires_grad = false;
    bool on_grad_path = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// Thread-local switch: while disabled, ops compute values but record no graph
// edges, so the results behave as constants.
class GradMode {
  public:
    static bool enabled() { return flag(); }
    static void set_enabled(bool on) { flag() = on; }

  private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
  public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        return filled(shape, 0.0, requires_grad);
    }

    static Tensor filled(const Shape& shape, double value, bool requires_grad = false) {
        auto node = std::make_shared<TensorNode>();
        node->shape = shape;
        node->data.assign(static_cast<size_t>(shape_numel(shape)), value);
        node->requires_grad = requires_grad;
        node->on_grad_path = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor of(const Shape& shape, std::vector<double> values, bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
            throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_to_string(shape));
        }
        auto node = std::make_shared<TensorNode>();
        node->shape = shape;
        node->data = std::move(values);
        node->requires_grad = requires_grad;
        node->on_grad_path = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(double value) { return of({1}, {value}); }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        node_->on_grad_path = on || !node_->parents.empty();
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<double>& grad() const {
        if (node_->grad.empty()) {
            throw std::runtime_error("tensor has no gradient (backward not run, or tensor not "
                                     "reachable from the loss)");
        }
        return node_->grad;
    }
    std::vector<double>& mutable_grad() {
        if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    double item() const {
        if (numel() != 1) {
            throw std::invalid_argument("item() requires a scalar tensor, got shape " +
                                        shape_to_string(shape()));
        }
        return node_->data[0];
    }

    // Value copy with no graph history.
    Tensor detach() const {
        auto node = std::make_shared<TensorNode>();
        node->shape = node_->shape;
        node->data = node_->data;
        return Tensor(std::move(node));
    }

    std::shared_ptr<TensorNode>& node() { return node_; }
    const std::shared_ptr<TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Builds an op-result node. When grad mode is off or no input carries a
// gradient path, the result is a plain constant with no edges.
inline Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool track = GradMode::enabled();
    if (track) {
        bool any_path = false;
        for (const auto& p : parents) any_path = any_path || p.node()->on_grad_path;
        track = any_path;
    }
    if (track) {
        node->on_grad_path = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

namespace detail {

inline std::vector<TensorNode*> topo_order(TensorNode* root) {
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->on_grad_path && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients of every node on the path
// to a requires_grad leaf are accumulated; calling twice on the same graph
// doubles them bit-exactly.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    shape_to_string(loss.shape()));
    }
    TensorNode* root = loss.node().get();
    if (!root->on_grad_path) return;

    std::vector<TensorNode*> order = detail::topo_order(root);
    for (TensorNode* n : order) n->scratch.assign(n->data.size(), 0.0);
    root->scratch[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
    for (TensorNode* n : order) {
        if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
        for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->scratch[i];
        n->scratch.clear();
        n->scratch.shrink_to_fit();
    }
}

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

enum class EwOp { add, sub, mul, div, neg, log, exp, square };

inline const char* ew_name(EwOp op) {
    switch (op) {
        case EwOp::add: return "add";
        case EwOp::sub: return "sub";
        case EwOp::mul: return "mul";
        case EwOp::div: return "div";
        case EwOp::neg: return "neg";
        case EwOp::log: return "log";
        case EwOp::exp: return "exp";
        case EwOp::square: return "square";
    }
    return "?";
}

inline Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(ew_name(op)) + ": shape mismatch " +
                                    shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
    }
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(av.size());
    switch (op) {
        case EwOp::add:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
            break;
        case EwOp::sub:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
            break;
        case EwOp::mul:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
            break;
        case EwOp::div:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
            break;
        default:
            throw std::invalid_argument(std::string(ew_name(op)) + " is not a binary op");
    }
    return make_op(a.shape(), std::move(out), {a, b}, [op](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        TensorNode* pb = self.parents[1].get();
        const auto& g = self.scratch;
        switch (op) {
            case EwOp::add:
                if (pa->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i];
                if (pb->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pb->scratch[i] += g[i];
                break;
            case EwOp::sub:
                if (pa->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i];
                if (pb->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pb->scratch[i] -= g[i];
                break;
            case EwOp::mul:
                if (pa->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] * pb->data[i];
                if (pb->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pb->scratch[i] += g[i] * pa->data[i];
                break;
            case EwOp::div:
                if (pa->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] / pb->data[i];
                if (pb->on_grad_path)
                    for (size_t i = 0; i < g.size(); ++i)
                        pb->scratch[i] -= g[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
                break;
            default: break;
        }
    });
}

inline Tensor elementwise(EwOp op, const Tensor& a, double b) {
    const auto& av = a.data();
    std::vector<double> out(av.size());
    switch (op) {
        case EwOp::add:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + b;
            break;
        case EwOp::sub:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - b;
            break;
        case EwOp::mul:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * b;
            break;
        case EwOp::div:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / b;
            break;
        default:
            throw std::invalid_argument(std::string(ew_name(op)) +
                                        " does not take a scalar right operand");
    }
    return make_op(a.shape(), std::move(out), {a}, [op, b](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        const auto& g = self.scratch;
        switch (op) {
            case EwOp::add:
            case EwOp::sub:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i];
                break;
            case EwOp::mul:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] * b;
                break;
            case EwOp::div:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] / b;
                break;
            default: break;
        }
    });
}

inline Tensor elementwise(EwOp op, const Tensor& a) {
    const auto& av = a.data();
    std::vector<double> out(av.size());
    switch (op) {
        case EwOp::neg:
            for (size_t i = 0; i < av.size(); ++i) out[i] = -av[i];
            break;
        case EwOp::log:
            // Invalid arguments propagate as non-finite values by design.
            for (size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i]);
            break;
        case EwOp::exp:
            for (size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
            break;
        case EwOp::square:
            for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
            break;
        default:
            throw std::invalid_argument(std::string(ew_name(op)) + " is not a unary op");
    }
    return make_op(a.shape(), std::move(out), {a}, [op](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        const auto& g = self.scratch;
        switch (op) {
            case EwOp::neg:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] -= g[i];
                break;
            case EwOp::log:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] / pa->data[i];
                break;
            case EwOp::exp:
                for (size_t i = 0; i < g.size(); ++i) pa->scratch[i] += g[i] * self.data[i];
                break;
            case EwOp::square:
                for (size_t i = 0; i < g.size(); ++i)
                    pa->scratch[i] += g[i] * 2.0 * pa->data[i];
                break;
            default: break;
        }
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(EwOp::div, a, b); }
inline Tensor add(const Tensor& a, double b) { return elementwise(EwOp::add, a, b); }
inline Tensor sub(const Tensor& a, double b) { return elementwise(EwOp::sub, a, b); }
inline Tensor mul(const Tensor& a, double b) { return elementwise(EwOp::mul, a, b); }
inline Tensor div(const Tensor& a, double b) { return elementwise(EwOp::div, a, b); }
inline Tensor neg(const Tensor& a) { return elementwise(EwOp::neg, a); }
inline Tensor log(const Tensor& a) { return elementwise(EwOp::log, a); }
inline Tensor exp(const Tensor& a) { return elementwise(EwOp::exp, a); }
inline Tensor square(const Tensor& a) { return elementwise(EwOp::square, a); }

// max(x, floor); the subgradient at the clamp boundary passes through.
inline Tensor clamp_min(const Tensor& a, double floor) {
    const auto& av = a.data();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] < floor ? floor : av[i];
    return make_op(a.shape(), std::move(out), {a}, [floor](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        for (size_t i = 0; i < self.scratch.size(); ++i)
            if (pa->data[i] >= floor) pa->scratch[i] += self.scratch[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions and views
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op({1}, {s}, {a}, [](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        double g = self.scratch[0];
        for (size_t i = 0; i < pa->scratch.size(); ++i) pa->scratch[i] += g;
    });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double n = static_cast<double>(a.numel());
    return make_op({1}, {s / n}, {a}, [n](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        double g = self.scratch[0];
        for (size_t i = 0; i < pa->scratch.size(); ++i) pa->scratch[i] += g / n;
    });
}

inline Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(a.shape()) +
                                    " as " + shape_to_string(shape));
    }
    return make_op(shape, a.data(), {a}, [](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        if (!pa->on_grad_path) return;
        for (size_t i = 0; i < self.scratch.size(); ++i) pa->scratch[i] += self.scratch[i];
    });
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: expects rank-2 tensors, got " +
                                    shape_to_string(a.shape()) + " and " +
                                    shape_to_string(b.shape()));
    }
    const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul: inner extents disagree, " +
                                    shape_to_string(a.shape()) + " x " +
                                    shape_to_string(b.shape()));
    }
    std::vector<double> out(static_cast<size_t>(n * m), 0.0);
    {
        const double* ap = a.data().data();
        const double* bp = b.data().data();
        double* cp = out.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            double* crow = cp + i * m;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double aik = ap[i * k + kk];
                const double* brow = bp + kk * m;
                for (int64_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
            }
        }
    }
    return make_op({n, m}, std::move(out), {a, b}, [n, k, m](TensorNode& self) {
        TensorNode* pa = self.parents[0].get();
        TensorNode* pb = self.parents[1].get();
        const double* g = self.scratch.data();
        if (pa->on_grad_path) {
            const double* bp = pb->data.data();
            double* da = pa->scratch.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t kk = 0; kk < k; ++kk) {
                    double acc = 0.0;
                    const double* grow = g + i * m;
                    const double* brow = bp + kk * m;
                    for (int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    da[i * k + kk] += acc;
                }
            }
        }
        if (pb->on_grad_path) {
            const double* ap = pa->data.data();
            double* db = pb->scratch.data();
#pragma omp parallel for schedule(static)
            for (int64_t kk = 0; kk < k; ++kk) {
                double* dbrow = db + kk * m;
                for (int64_t i = 0; i < n; ++i) {
                    const double aik = ap[i * k + kk];
                    const double* grow = g + i * m;
                    for (int64_t j = 0; j < m; ++j) dbrow[j] += aik * grow[j];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation convention, zero padding)
// ---------------------------------------------------------------------------

// Output extent uses the usual floored formula; trailing rows/columns that do
// not fit a full window are dropped.
inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     int64_t stride = 1, int64_t padding = 0) {
    if (input.rank() != 4 || kernel.rank() != 4) {
        throw std::invalid_argument("conv2d: input and kernel must be rank 4, got " +
                                    shape_to_string(input.shape()) + " and " +
                                    shape_to_string(kernel.shape()));
    }
    const int64_t n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int64_t co = kernel.dim(0), kci = kernel.dim(1), kh = kernel.dim(2),
                  kw = kernel.dim(3);
    if (kci != ci) {
        throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kci) +
                                    " input channels, input has " + std::to_string(ci));
    }
    if (bias.rank() != 1 || bias.dim(0) != co) {
        throw std::invalid_argument("conv2d: bias shape " + shape_to_string(bias.shape()) +
                                    " does not match " + std::to_string(co) + " filters");
    }
    if (stride < 1 || padding < 0) {
        throw std::invalid_argument("conv2d: stride must be >= 1 and padding >= 0");
    }
    if (h + 2 * padding < kh || w + 2 * padding < kw) {
        throw std::invalid_argument("conv2d: spatial extent " + shape_to_string({h, w}) +
                                    " with padding " + std::to_string(padding) +
                                    " cannot fit kernel " + shape_to_string({kh, kw}));
    }
    const int64_t ho = conv_out_extent(h, kh, stride, padding);
    const int64_t wo = conv_out_extent(w, kw, stride, padding);

    std::vector<double> out(static_cast<size_t>(n * co * ho * wo));
    {
        const double* in = input.data().data();
        const double* kp = kernel.data().data();
        const double* bp = bias.data().data();
        double* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int64_t b = 0; b < n; ++b) {
            for (int64_t oc = 0; oc < co; ++oc) {
                double* oplane = op + (b * co + oc) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        double acc = bp[oc];
                        for (int64_t ic = 0; ic < ci; ++ic) {
                            const double* iplane = in + (b * ci + ic) * h * w;
                            const double* kplane = kp + (oc * ci + ic) * kh * kw;
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                const int64_t iy = oy * stride - padding + ky;
                                if (iy < 0 || iy >= h) continue;
                                const double* irow = iplane + iy * w;
                                const double* krow = kplane + ky * kw;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    const int64_t ix = ox * stride - padding + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    acc += irow[ix] * krow[kx];
                                }
                            }
                        }
                        oplane[oy * wo + ox] = acc;
                    }
                }
            }
        }
    }

    auto bw = [n, ci, h, w, co, kh, kw, ho, wo, stride, padding](TensorNode& self) {
        TensorNode* pin = self.parents[0].get();
        TensorNode* pk = self.parents[1].get();
        TensorNode* pb = self.parents[2].get();
        const double* g = self.scratch.data();
        if (pin->on_grad_path) {
            const double* kp = pk->data.data();
            double* din = pin->scratch.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t b = 0; b < n; ++b) {
                for (int64_t ic = 0; ic < ci; ++ic) {
                    double* dplane = din + (b * ci + ic) * h * w;
                    for (int64_t iy = 0; iy < h; ++iy) {
                        for (int64_t ix = 0; ix < w; ++ix) {
                            double acc = 0.0;
                            for (int64_t oc = 0; oc < co; ++oc) {
                                const double* gplane = g + (b * co + oc) * ho * wo;
                                const double* kplane = kp + (oc * ci + ic) * kh * kw;
                                for (int64_t ky = 0; ky < kh; ++ky) {
                                    const int64_t oy_num = iy + padding - ky;
                                    if (oy_num < 0 || oy_num % stride) continue;
                                    const int64_t oy = oy_num / stride;
                                    if (oy >= ho) continue;
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        const int64_t ox_num = ix + padding - kx;
                                        if (ox_num < 0 || ox_num % stride) continue;
                                        const int64_t ox = ox_num / stride;
                                        if (ox >= wo) continue;
                                        acc += gplane[oy * wo + ox] * kplane[ky * kw + kx];
                                    }
                                }
                            }
                            dplane[iy * w + ix] += acc;
                        }
                    }
                }
            }
        }
        if (pk->on_grad_path) {
            const double* in = pin->data.data();
            double* dk = pk->scratch.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t oc = 0; oc < co; ++oc) {
                for (int64_t ic = 0; ic < ci; ++ic) {
                    double* dkplane = dk + (oc * ci + ic) * kh * kw;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            double acc = 0.0;
                            for (int64_t b = 0; b < n; ++b) {
                                const double* gplane = g + (b * co + oc) * ho * wo;
                                const double* iplane = in + (b * ci + ic) * h * w;
                                for (int64_t oy = 0; oy < ho; ++oy) {
                                    const int64_t iy = oy * stride - padding + ky;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int64_t ox = 0; ox < wo; ++ox) {
                                        const int64_t ix = ox * stride - padding + kx;
                                        if (ix < 0 || ix >= w) continue;
                                        acc += gplane[oy * wo + ox] * iplane[iy * w + ix];
                                    }
                                }
                            }
                            dkplane[ky * kw + kx] += acc;
                        }
                    }
                }
            }
        }
        if (pb->on_grad_path) {
            double* db = pb->scratch.data();
#pragma omp parallel for schedule(static)
            for (int64_t oc = 0; oc < co; ++oc) {
                double acc = 0.0;
                for (int64_t b = 0; b < n; ++b) {
                    const double* gplane = g + (b * co + oc) * ho * wo;
                    for (int64_t i = 0; i < ho * wo; ++i) acc += gplane[i];
                }
                db[oc] += acc;
            }
        }
    };
    return make_op({n, co, ho, wo}, std::move(out), {input, kernel, bias}, std::move(bw));
}

// ---------------------------------------------------------------------------
// Parameter collection
// ---------------------------------------------------------------------------

// Ordered, uniquely named tensor collection; iteration follows insertion order
// so that parameter traversal is deterministic.
class ParamSet {
  public:
    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) {
            throw std::invalid_argument("ParamSet: duplicate parameter name '" + name + "'");
        }
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::invalid_argument("ParamSet: no parameter named '" + name + "'");
        }
        return entries_[it->second].second;
    }
    const Tensor& get(const std::string& name) const {
        return const_cast<ParamSet*>(this)->get(name);
    }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : entries_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : entries_) t.zero_grad();
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    // Bumped by the optimizer on every applied update; used to verify the
    // alternating update schedule.
    uint64_t version = 0;

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace gac

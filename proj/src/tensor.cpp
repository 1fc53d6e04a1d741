#include "covmap/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "covmap/errors.hpp"

namespace covmap::tensor {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string to_string(const Shape& s) {
    std::string out = "(";
    for (int k = 0; k < 5; ++k) out += std::to_string(s[k]) + (k < 4 ? "," : ")");
    return out;
}

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

namespace {

void check_shape(const Shape& s) {
    for (int d : s)
        if (d < 1) throw std::invalid_argument("tensor dims must be >= 1, got " + to_string(s));
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return filled(shape, 0.0, requires_grad); }

Tensor Tensor::filled(const Shape& shape, double v, bool requires_grad) {
    check_shape(shape);
    return from(shape, std::vector<double>(numel(shape), v), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (values.size() != numel(shape))
        throw std::invalid_argument("value count " + std::to_string(values.size()) + " does not fit shape " +
                                    to_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1, 1, 1, 1, 1}, {v}); }

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on a tensor of shape " + to_string(shape()));
    return node_->value[0];
}

std::size_t Tensor::index(int b, int c, int t, int h, int w) const {
    const Shape& s = node_->shape;
    return (((static_cast<std::size_t>(b) * s[1] + c) * s[2] + t) * s[3] + h) * s[4] + w;
}

double& Tensor::at(int b, int c, int t, int h, int w) { return node_->value[index(b, c, t, h, w)]; }
double Tensor::at(int b, int c, int t, int h, int w) const { return node_->value[index(b, c, t, h, w)]; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), values()); }

Tensor make_op(const Shape& shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

void backward(const Tensor& loss, double seed) {
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("backward needs a one-element loss, got " +
                                    (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order)
        if (n->backward) n->grad.assign(n->value.size(), 0.0);
    loss.node()->ensure_grad()[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward(**it);
}

Tensor add(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = a.values()[k] + b.values()[k];
    auto na = a.node(), nb = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [na, nb](Node& out) {
        for (Node* p : {na.get(), nb.get()})
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += out.grad[k];
            }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = a.values()[k] * b.values()[k];
    auto na = a.node(), nb = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [na, nb](Node& out) {
        if (na->requires_grad) {
            auto& g = na->ensure_grad();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += out.grad[k] * nb->value[k];
        }
        if (nb->requires_grad) {
            auto& g = nb->ensure_grad();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += out.grad[k] * na->value[k];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> v(a.values());
    for (double& x : v) x *= s;
    auto na = a.node();
    return make_op(a.shape(), std::move(v), {a}, [na, s](Node& out) {
        auto& g = na->ensure_grad();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * out.grad[k];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;
    auto na = a.node();
    return make_op({1, 1, 1, 1, 1}, {s}, {a}, [na](Node& out) {
        auto& g = na->ensure_grad();
        for (double& x : g) x += out.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    same_shape(pred, target, "mse_loss");
    const std::size_t n = pred.size();
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = pred.values()[k] - target.values()[k];
        s += d * d;
    }
    auto np = pred.node(), nt = target.node();
    return make_op({1, 1, 1, 1, 1}, {s / static_cast<double>(n)}, {pred, target}, [np, nt, n](Node& out) {
        const double c = 2.0 * out.grad[0] / static_cast<double>(n);
        if (np->requires_grad) {
            auto& g = np->ensure_grad();
            for (std::size_t k = 0; k < n; ++k) g[k] += c * (np->value[k] - nt->value[k]);
        }
        if (nt->requires_grad) {
            auto& g = nt->ensure_grad();
            for (std::size_t k = 0; k < n; ++k) g[k] -= c * (np->value[k] - nt->value[k]);
        }
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: nothing to concatenate");
    Shape s = parts[0].shape();
    s[1] = 0;
    for (const auto& p : parts) {
        const Shape& q = p.shape();
        if (q[0] != s[0] || q[2] != s[2] || q[3] != s[3] || q[4] != s[4])
            throw std::invalid_argument("concat_channels: shape " + to_string(q) + " does not match batch/time/" +
                                        "height/width of " + to_string(parts[0].shape()));
        s[1] += q[1];
    }
    const std::size_t inner = static_cast<std::size_t>(s[2]) * s[3] * s[4];
    std::vector<double> v(numel(s));
    std::vector<std::shared_ptr<Node>> nodes;
    for (int b = 0; b < s[0]; ++b) {
        std::size_t off = static_cast<std::size_t>(b) * s[1] * inner;
        for (const auto& p : parts) {
            const std::size_t len = static_cast<std::size_t>(p.dim(1)) * inner;
            std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(b * len), len, v.begin() + off);
            off += len;
        }
    }
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_op(s, std::move(v), parts, [nodes, s, inner](Node& out) {
        for (int b = 0; b < s[0]; ++b) {
            std::size_t off = static_cast<std::size_t>(b) * s[1] * inner;
            for (const auto& p : nodes) {
                const std::size_t len = static_cast<std::size_t>(p->shape[1]) * inner;
                if (p->requires_grad) {
                    auto& g = p->ensure_grad();
                    for (std::size_t k = 0; k < len; ++k) g[b * len + k] += out.grad[off + k];
                }
                off += len;
            }
        }
    });
}

Tensor broadcast(const Tensor& a, int batch, int time) {
    const Shape& q = a.shape();
    if (q[0] != 1 || q[2] != 1) throw std::invalid_argument("broadcast expects (1,C,1,H,W), got " + to_string(q));
    const Shape s{batch, q[1], time, q[3], q[4]};
    check_shape(s);
    const std::size_t plane = static_cast<std::size_t>(q[3]) * q[4];
    std::vector<double> v(numel(s));
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < q[1]; ++c)
            for (int t = 0; t < time; ++t)
                std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(c * plane), plane,
                            v.begin() + static_cast<std::ptrdiff_t>(((b * q[1] + c) * time + t) * plane));
    auto na = a.node();
    return make_op(s, std::move(v), {a}, [na, s, plane](Node& out) {
        auto& g = na->ensure_grad();
        for (int b = 0; b < s[0]; ++b)
            for (int c = 0; c < s[1]; ++c)
                for (int t = 0; t < s[2]; ++t) {
                    const double* src = out.grad.data() + ((static_cast<std::size_t>(b) * s[1] + c) * s[2] + t) * plane;
                    double* dst = g.data() + static_cast<std::size_t>(c) * plane;
                    for (std::size_t k = 0; k < plane; ++k) dst[k] += src[k];
                }
    });
}

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("conv channel counts must be >= 1");
    if (kt < 1 || kh < 1 || kw < 1) throw std::invalid_argument("conv kernel dims must be >= 1");
}

namespace {

struct Pads {
    int t, h, w;
};

Pads pads_for(int kt, int kh, int kw, TemporalPadding temporal) {
    return {temporal == TemporalPadding::causal ? kt - 1 : (kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2};
}

// Calls f(t_out, t_in, h_out, h_in, w_lo, w_hi, shift) for every valid row of
// a kernel offset (a, i, j); w runs over [w_lo, w_hi) and reads w + shift.
template <class F>
void for_each_row(int T, int H, int W, int a, int i, int j, const Pads& p, F&& f) {
    const int shift = j - p.w;
    const int w_lo = std::max(0, -shift), w_hi = std::min(W, W - shift);
    if (w_lo >= w_hi) return;
    for (int t = 0; t < T; ++t) {
        const int ts = t + a - p.t;
        if (ts < 0 || ts >= T) continue;
        for (int h = 0; h < H; ++h) {
            const int hs = h + i - p.h;
            if (hs < 0 || hs >= H) continue;
            f(t, ts, h, hs, w_lo, w_hi, shift);
        }
    }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
    spec.validate();
    const Shape& xs = x.shape();
    if (xs[1] != spec.in_channels)
        throw std::invalid_argument("conv3d: input channel axis is " + std::to_string(xs[1]) + ", spec expects " +
                                    std::to_string(spec.in_channels));
    if (weight.shape() != spec.weight_shape())
        throw std::invalid_argument("conv3d: weight shape " + to_string(weight.shape()) + ", expected " +
                                    to_string(spec.weight_shape()) + " (out, in, time, height, width)");
    if (spec.bias && (!bias.defined() || bias.shape() != spec.bias_shape()))
        throw std::invalid_argument("conv3d: bias must have shape " + to_string(spec.bias_shape()));
    const int B = xs[0], Ci = xs[1], T = xs[2], H = xs[3], W = xs[4], Co = spec.out_channels;
    const Shape ys{B, Co, T, H, W};
    const Pads p = pads_for(spec.kt, spec.kh, spec.kw, spec.temporal);
    const std::size_t plane = static_cast<std::size_t>(H) * W, vol = plane * T;
    std::vector<double> y(numel(ys), 0.0);
    const auto& xv = x.values();
    const auto& wv = weight.values();
    const int kt = spec.kt, kh = spec.kh, kw = spec.kw;
    auto widx = [Ci, kt, kh, kw](int co, int ci, int a, int i, int j) {
        return (((static_cast<std::size_t>(co) * Ci + ci) * kt + a) * kh + i) * kw + j;
    };
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co) {
            double* yb = y.data() + (static_cast<std::size_t>(b) * Co + co) * vol;
            if (spec.bias) std::fill(yb, yb + vol, bias.values()[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xb = xv.data() + (static_cast<std::size_t>(b) * Ci + ci) * vol;
                for (int a = 0; a < spec.kt; ++a)
                    for (int i = 0; i < spec.kh; ++i)
                        for (int j = 0; j < spec.kw; ++j) {
                            const double wk = wv[widx(co, ci, a, i, j)];
                            if (wk == 0.0) continue;
                            for_each_row(T, H, W, a, i, j, p, [&](int t, int ts, int h, int hs, int lo, int hi, int sh) {
                                double* yr = yb + t * plane + static_cast<std::size_t>(h) * W;
                                const double* xr = xb + ts * plane + static_cast<std::size_t>(hs) * W + sh;
                                for (int w = lo; w < hi; ++w) yr[w] += wk * xr[w];
                            });
                        }
            }
        }
    auto nx = x.node(), nw = weight.node();
    auto nb = spec.bias ? bias.node() : nullptr;
    std::vector<Tensor> parents{x, weight};
    if (spec.bias) parents.push_back(bias);
    return make_op(ys, std::move(y), parents, [=](Node& out) {
        const auto& gy = out.grad;
        std::vector<double>* gx = nx->requires_grad ? &nx->ensure_grad() : nullptr;
        std::vector<double>* gw = nw->requires_grad ? &nw->ensure_grad() : nullptr;
        if (nb && nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int co = 0; co < Co; ++co) {
                    const double* g = gy.data() + (static_cast<std::size_t>(b) * Co + co) * vol;
                    double s = 0.0;
                    for (std::size_t k = 0; k < vol; ++k) s += g[k];
                    gb[co] += s;
                }
        }
        if (!gx && !gw) return;
        for (int b = 0; b < B; ++b)
            for (int co = 0; co < Co; ++co) {
                const double* g = gy.data() + (static_cast<std::size_t>(b) * Co + co) * vol;
                for (int ci = 0; ci < Ci; ++ci) {
                    const std::size_t xoff = (static_cast<std::size_t>(b) * Ci + ci) * vol;
                    const double* xb = nx->value.data() + xoff;
                    double* gxb = gx ? gx->data() + xoff : nullptr;
                    for (int a = 0; a < spec.kt; ++a)
                        for (int i = 0; i < spec.kh; ++i)
                            for (int j = 0; j < spec.kw; ++j) {
                                const std::size_t wi = widx(co, ci, a, i, j);
                                const double wk = nw->value[wi];
                                double acc = 0.0;
                                for_each_row(T, H, W, a, i, j, p, [&](int t, int ts, int h, int hs, int lo, int hi, int sh) {
                                    const double* gr = g + t * plane + static_cast<std::size_t>(h) * W;
                                    const std::size_t xr = ts * plane + static_cast<std::size_t>(hs) * W + sh;
                                    if (gw)
                                        for (int w = lo; w < hi; ++w) acc += gr[w] * xb[xr + w];
                                    if (gxb && wk != 0.0)
                                        for (int w = lo; w < hi; ++w) gxb[xr + w] += wk * gr[w];
                                });
                                if (gw) (*gw)[wi] += acc;
                            }
                }
            }
    });
}

Tensor locally_connected(const Tensor& x, const Tensor& weight, int out_channels, int kt, int kh, int kw,
                         TemporalPadding temporal) {
    if (out_channels < 1 || kt < 1 || kh < 1 || kw < 1)
        throw std::invalid_argument("locally_connected: channels and kernel dims must be >= 1");
    const Shape& xs = x.shape();
    const int B = xs[0], Ci = xs[1], T = xs[2], H = xs[3], W = xs[4];
    const int K = kt * kh * kw;
    const Shape expect{out_channels, Ci * K, T, H, W};
    if (weight.shape() != expect)
        throw std::invalid_argument("locally_connected: weight shape " + to_string(weight.shape()) +
                                    ", expected " + to_string(expect) + " (out, in*kernel, time, height, width)");
    const Shape ys{B, out_channels, T, H, W};
    const Pads p = pads_for(kt, kh, kw, temporal);
    const std::size_t plane = static_cast<std::size_t>(H) * W, vol = plane * T;
    std::vector<double> y(numel(ys), 0.0);
    const auto& xv = x.values();
    const auto& wv = weight.values();
    auto wbase = [Ci, K, kt, kh, kw, vol](int co, int ci, int a, int i, int j) {
        return ((static_cast<std::size_t>(co) * Ci * K) + ((ci * kt + a) * kh + i) * kw + j) * vol;
    };
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < out_channels; ++co) {
            double* yb = y.data() + (static_cast<std::size_t>(b) * out_channels + co) * vol;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* xb = xv.data() + (static_cast<std::size_t>(b) * Ci + ci) * vol;
                for (int a = 0; a < kt; ++a)
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j) {
                            const double* wb = wv.data() + wbase(co, ci, a, i, j);
                            for_each_row(T, H, W, a, i, j, p, [&](int t, int ts, int h, int hs, int lo, int hi, int sh) {
                                const std::size_t o = t * plane + static_cast<std::size_t>(h) * W;
                                const double* xr = xb + ts * plane + static_cast<std::size_t>(hs) * W + sh;
                                for (int w = lo; w < hi; ++w) yb[o + w] += wb[o + w] * xr[w];
                            });
                        }
            }
        }
    auto nx = x.node(), nw = weight.node();
    return make_op(ys, std::move(y), {x, weight}, [=](Node& out) {
        std::vector<double>* gx = nx->requires_grad ? &nx->ensure_grad() : nullptr;
        std::vector<double>* gw = nw->requires_grad ? &nw->ensure_grad() : nullptr;
        for (int b = 0; b < B; ++b)
            for (int co = 0; co < out_channels; ++co) {
                const double* g = out.grad.data() + (static_cast<std::size_t>(b) * out_channels + co) * vol;
                for (int ci = 0; ci < Ci; ++ci) {
                    const std::size_t xoff = (static_cast<std::size_t>(b) * Ci + ci) * vol;
                    const double* xb = nx->value.data() + xoff;
                    for (int a = 0; a < kt; ++a)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const std::size_t wb = wbase(co, ci, a, i, j);
                                for_each_row(T, H, W, a, i, j, p, [&](int t, int ts, int h, int hs, int lo, int hi, int sh) {
                                    const std::size_t o = t * plane + static_cast<std::size_t>(h) * W;
                                    const std::size_t xr = ts * plane + static_cast<std::size_t>(hs) * W + sh;
                                    for (int w = lo; w < hi; ++w) {
                                        if (gw) (*gw)[wb + o + w] += g[o + w] * xb[xr + w];
                                        if (gx) (*gx)[xoff + xr + w] += g[o + w] * nw->value[wb + o + w];
                                    }
                                });
                            }
                }
            }
    });
}

void AdaModOptions::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    for (double b : {beta1, beta2, beta3})
        if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("AdaMod betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("AdaMod eps must be > 0");
}

AdaMod::AdaMod(std::vector<Tensor> params, AdaModOptions opt) : params_(std::move(params)), opt_(opt) {
    opt_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
        s_.emplace_back(p.size(), 0.0);
    }
}

bool AdaMod::step() {
    for (const auto& p : params_)
        for (double g : p.grad())
            if (!std::isfinite(g)) {
                ++skipped_;
                return false;
            }
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_), c2 = 1.0 - std::pow(opt_.beta2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        const auto& g = p.grad();
        if (g.empty()) continue;
        auto& vals = p.values();
        for (std::size_t e = 0; e < vals.size(); ++e) {
            m_[k][e] = opt_.beta1 * m_[k][e] + (1.0 - opt_.beta1) * g[e];
            v_[k][e] = opt_.beta2 * v_[k][e] + (1.0 - opt_.beta2) * g[e] * g[e];
            const double mh = m_[k][e] / c1, vh = v_[k][e] / c2;
            const double eta = opt_.lr / (std::sqrt(vh) + opt_.eps);
            s_[k][e] = opt_.beta3 * s_[k][e] + (1.0 - opt_.beta3) * eta;
            vals[e] -= std::min(eta, s_[k][e]) * mh;
        }
    }
    return true;
}

void AdaMod::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated checkpoint " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write("CMTK", 4);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        for (int d : t.shape()) put<std::int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing " + path);
}

void load_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CMTK", 4) != 0) throw DataError(path + " is not a checkpoint");
    if (get<std::uint32_t>(in, path) != 1) throw DataError("unsupported checkpoint version in " + path);
    const auto count = get<std::uint32_t>(in, path);
    if (count != tensors.size())
        throw DataError(path + " holds " + std::to_string(count) + " tensors, expected " +
                        std::to_string(tensors.size()));
    for (const auto& [name, t] : tensors) {
        const auto len = get<std::uint32_t>(in, path);
        std::string got(len, '\0');
        if (!in.read(got.data(), len)) throw DataError("truncated checkpoint " + path);
        if (got != name) throw DataError("checkpoint tensor '" + got + "' where '" + name + "' was expected");
        Shape s;
        for (int& d : s) d = get<std::int32_t>(in, path);
        if (s != t.shape())
            throw DataError("checkpoint tensor '" + name + "' has shape " + to_string(s) + ", expected " +
                            to_string(t.shape()));
        auto& vals = const_cast<Tensor&>(t).values();
        if (!in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double))))
            throw DataError("truncated checkpoint " + path);
    }
}

}  // namespace covmap::tensor

#include "covmap/stconv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::stconv {

using tensor::ConvSpec;
using tensor::Node;
using tensor::Shape;
using tensor::TemporalPadding;

void ModelConfig::validate() const {
    if (layers_per_block < 1 || base_filters < 1 || spatial_kernel < 1 || temporal_kernel < 1)
        throw std::invalid_argument("model layer, filter and kernel counts must be >= 1");
    if (li_count < 0) throw std::invalid_argument("li_count must be >= 0");
    if (lw_kt < 1 || lw_kh < 1 || lw_kw < 1) throw std::invalid_argument("local-weight kernel dims must be >= 1");
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (!(value_scale > 0.0)) throw std::invalid_argument("value_scale must be > 0");
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (batch_size < 1 || online_epochs < 0) throw std::invalid_argument("bad batch size or epoch count");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(beta3 >= 0.0 && beta3 < 1.0)) throw std::invalid_argument("beta3 must lie in [0, 1)");
    if (!(optimizer_eps > 0.0)) throw std::invalid_argument("optimizer_eps must be > 0");
}

B03dLayer::B03dLayer(int channels, int steps, double eps_, double momentum_)
    : v1(Tensor::filled({1, channels, 1, 1, 1}, 1.0, true)),
      theta(Tensor::filled({1, channels, 1, 1, 1}, 1.0, true)),
      psi(Tensor::zeros({1, channels, 1, 1, 1}, true)),
      running_var(Tensor::filled({1, channels, steps, 1, 1}, 1.0)),
      eps(eps_),
      momentum(momentum_) {}

Tensor b03d(const Tensor& x, B03dLayer& layer, Mode mode) {
    const Shape& s = x.shape();
    const int B = s[0], C = s[1], T = s[2];
    const std::size_t plane = static_cast<std::size_t>(s[3]) * s[4];
    if (layer.v1.dim(1) != C)
        throw std::invalid_argument("b03d: channel axis is " + std::to_string(C) + ", layer has " +
                                    std::to_string(layer.v1.dim(1)));
    if (layer.running_var.dim(2) != T)
        throw std::invalid_argument("b03d: time axis is " + std::to_string(T) + ", layer tracks " +
                                    std::to_string(layer.running_var.dim(2)));
    const bool train = mode == Mode::train;
    const auto& xv = x.values();
    auto off = [C, T, plane](int b, int c, int t) {
        return ((static_cast<std::size_t>(b) * C + c) * T + t) * plane;
    };

    std::vector<double> mu_b(C * T), sig_b(C * T), mu_i(B * C * T), sig_i(B * C * T);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            double sb = 0.0, sbb = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* p = xv.data() + off(b, c, t);
                double si = 0.0, sii = 0.0;
                for (std::size_t k = 0; k < plane; ++k) si += p[k];
                const double m = si / static_cast<double>(plane);
                for (std::size_t k = 0; k < plane; ++k) sii += (p[k] - m) * (p[k] - m);
                const std::size_t g = (static_cast<std::size_t>(b) * C + c) * T + t;
                mu_i[g] = m;
                sig_i[g] = std::sqrt(sii / static_cast<double>(plane) + layer.eps);
                sb += si;
            }
            const double nb = static_cast<double>(B) * static_cast<double>(plane);
            const double m = sb / nb;
            for (int b = 0; b < B; ++b) {
                const double* p = xv.data() + off(b, c, t);
                for (std::size_t k = 0; k < plane; ++k) sbb += (p[k] - m) * (p[k] - m);
            }
            const double var = sbb / nb;
            auto& rv = layer.running_var.values()[c * T + t];
            mu_b[c * T + t] = m;
            if (train) {
                sig_b[c * T + t] = std::sqrt(var + layer.eps);
                rv = layer.momentum * rv + (1.0 - layer.momentum) * var;
            } else {
                sig_b[c * T + t] = std::sqrt(rv + layer.eps);
            }
        }

    std::vector<double> y(xv.size()), den(xv.size());
    std::vector<char> batch_branch(xv.size());
    const auto& v1 = layer.v1.values();
    const auto& th = layer.theta.values();
    const auto& ps = layer.psi.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) {
                const std::size_t o = off(b, c, t);
                const double sb = sig_b[c * T + t];
                const double si = sig_i[(static_cast<std::size_t>(b) * C + c) * T + t];
                for (std::size_t k = 0; k < plane; ++k) {
                    const double a = v1[c] * xv[o + k] + si;
                    const bool use_b = sb >= a;
                    den[o + k] = use_b ? sb : a;
                    batch_branch[o + k] = use_b;
                    y[o + k] = xv[o + k] / den[o + k] * th[c] + ps[c];
                }
            }

    auto nx = x.node(), nv = layer.v1.node(), nt = layer.theta.node(), np = layer.psi.node();
    return tensor::make_op(s, std::move(y), {x, layer.v1, layer.theta, layer.psi},
                           [=, mu_b = std::move(mu_b), sig_b = std::move(sig_b), mu_i = std::move(mu_i),
                            sig_i = std::move(sig_i), den = std::move(den),
                            batch_branch = std::move(batch_branch)](Node& out) {
        const auto& g = out.grad;
        const auto& xv = nx->value;
        const auto& v1 = nv->value;
        const auto& th = nt->value;
        std::vector<double> gx(xv.size(), 0.0), gv1(C, 0.0), gth(C, 0.0), gps(C, 0.0);
        std::vector<double> dsig_b(C * T, 0.0), dsig_i(static_cast<std::size_t>(B) * C * T, 0.0);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < T; ++t) {
                    const std::size_t o = off(b, c, t);
                    const std::size_t gi = (static_cast<std::size_t>(b) * C + c) * T + t;
                    for (std::size_t k = 0; k < plane; ++k) {
                        const double xk = xv[o + k], d = den[o + k];
                        gth[c] += g[o + k] * xk / d;
                        gps[c] += g[o + k];
                        const double dz = g[o + k] * th[c];
                        gx[o + k] += dz / d;
                        const double dden = -dz * xk / (d * d);
                        if (batch_branch[o + k]) {
                            if (train) dsig_b[c * T + t] += dden;
                        } else {
                            gv1[c] += dden * xk;
                            gx[o + k] += dden * v1[c];
                            dsig_i[gi] += dden;
                        }
                    }
                }
        const double nb = static_cast<double>(B) * static_cast<double>(plane);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < T; ++t) {
                    const std::size_t o = off(b, c, t);
                    const std::size_t gi = (static_cast<std::size_t>(b) * C + c) * T + t;
                    const double kb = dsig_b[c * T + t] / (nb * sig_b[c * T + t]);
                    const double ki = dsig_i[gi] / (static_cast<double>(plane) * sig_i[gi]);
                    for (std::size_t k = 0; k < plane; ++k)
                        gx[o + k] += kb * (xv[o + k] - mu_b[c * T + t]) + ki * (xv[o + k] - mu_i[gi]);
                }
        auto acc = [](const std::shared_ptr<Node>& n, const std::vector<double>& src) {
            if (!n->requires_grad) return;
            auto& dst = n->ensure_grad();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        };
        acc(nx, gx);
        acc(nv, gv1);
        acc(nt, gth);
        acc(np, gps);
    });
}

Tensor augment_li_lw(const Tensor& x, const Tensor& li, const Tensor& lw, int n, int kt, int kh, int kw) {
    if (n == 0) return x;
    const Shape& s = x.shape();
    if (li.dim(0) != 1 || li.dim(1) != n || li.dim(2) != 1 || li.dim(3) != s[3] || li.dim(4) != s[4])
        throw std::invalid_argument("augment_li_lw: learnable inputs have shape " + tensor::to_string(li.shape()) +
                                    ", expected (1," + std::to_string(n) + ",1," + std::to_string(s[3]) + "," +
                                    std::to_string(s[4]) + ")");
    if (lw.dim(3) != s[3] || lw.dim(4) != s[4])
        throw std::invalid_argument("augment_li_lw: local weights cover " + std::to_string(lw.dim(3)) + "x" +
                                    std::to_string(lw.dim(4)) + " cells, input has " + std::to_string(s[3]) +
                                    "x" + std::to_string(s[4]));
    const Tensor inputs = tensor::broadcast(li, s[0], s[2]);
    const Tensor local = tensor::locally_connected(x, lw, n, kt, kh, kw, TemporalPadding::causal);
    return tensor::concat_channels({x, inputs, local});
}

namespace {

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.values()) v = u(rng);
}

ConvLayer make_layer(const ModelConfig& cfg, int in, int out, int kt, int k, TemporalPadding pad, bool normalized,
                     int T, int H, int W, std::mt19937_64& rng) {
    ConvLayer L;
    const int n = cfg.li_count;
    const int K = cfg.lw_kt * cfg.lw_kh * cfg.lw_kw;
    L.in_channels = in;
    L.spec = ConvSpec{in + 2 * n, out, kt, k, k, pad, true};
    L.weight = Tensor::zeros(L.spec.weight_shape(), true);
    L.bias = Tensor::zeros(L.spec.bias_shape(), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(L.spec.in_channels * kt * k * k));
    fill_uniform(L.weight, bound, rng);
    fill_uniform(L.bias, bound, rng);
    if (n > 0) {
        L.li = Tensor::zeros({1, n, 1, H, W}, true);
        L.lw = Tensor::filled({n, in * K, T, H, W}, 1.0 / static_cast<double>(in * K), true);
    }
    L.normalized = normalized;
    if (normalized) L.norm = B03dLayer(out, T, cfg.eps, cfg.momentum);
    return L;
}

}  // namespace

StConvModel::StConvModel(ModelConfig config, int height, int width)
    : config_(config), height_(height), width_(width), optimizer_({}, tensor::AdaModOptions{}) {
    config_.validate();
    if (height < 1 || width < 1) throw std::invalid_argument("model grid must be at least 1x1");
    std::mt19937_64 rng(config_.seed);
    const int T = config_.horizon, L = config_.layers_per_block;
    int in = 1;
    for (int block = 0; block < 2; ++block) {
        const bool temporal = block == 0;
        const int block_in = in;
        for (int k = 0; k < L; ++k) {
            const int out = k == L - 1 ? (config_.reduce_to_block_input ? block_in : config_.base_filters)
                                       : config_.base_filters << k;
            if (temporal)
                layers_.push_back(make_layer(config_, in, out, config_.temporal_kernel, 1, TemporalPadding::causal,
                                             true, T, height, width, rng));
            else
                layers_.push_back(make_layer(config_, in, out, 1, config_.spatial_kernel, TemporalPadding::causal,
                                             true, T, height, width, rng));
            in = out;
        }
    }
    const int last = layers_.back().spec.out_channels;
    layers_.push_back(make_layer(config_, last, 1, 1, 1, TemporalPadding::causal, false, T, height, width, rng));
    tensor::AdaModOptions opt;
    opt.lr = config_.lr;
    opt.beta3 = config_.beta3;
    opt.eps = config_.optimizer_eps;
    optimizer_ = tensor::AdaMod(parameters(), opt);
}

Tensor StConvModel::apply(ConvLayer& layer, const Tensor& x, Mode mode) {
    const Tensor aug = augment_li_lw(x, layer.li, layer.lw, config_.li_count, config_.lw_kt, config_.lw_kh,
                                     config_.lw_kw);
    Tensor y = tensor::conv3d(aug, layer.weight, layer.bias, layer.spec);
    return layer.normalized ? b03d(y, layer.norm, mode) : y;
}

Tensor StConvModel::forward(const Tensor& x, Mode mode, Tensor* temporal_out) {
    const Shape& s = x.shape();
    if (s[1] != 1 || s[2] != config_.horizon || s[3] != height_ || s[4] != width_)
        throw std::invalid_argument("stconv input: got " + tensor::to_string(s) + ", expected (batch,1," +
                                    std::to_string(config_.horizon) + "," + std::to_string(height_) + "," +
                                    std::to_string(width_) + ")");
    const int L = config_.layers_per_block;
    Tensor h = x;
    for (int k = 0; k < L; ++k) h = apply(layers_[k], h, mode);
    if (temporal_out) *temporal_out = h;
    for (int k = L; k < 2 * L; ++k) h = apply(layers_[k], h, mode);
    return apply(layers_.back(), h, mode);
}

std::vector<Tensor> StConvModel::parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : layers_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
        if (l.li.defined()) out.push_back(l.li);
        if (l.lw.defined()) out.push_back(l.lw);
        if (l.normalized) {
            out.push_back(l.norm.v1);
            out.push_back(l.norm.theta);
            out.push_back(l.norm.psi);
        }
    }
    return out;
}

tensor::NamedTensors StConvModel::named_tensors() const {
    tensor::NamedTensors out;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        const std::string p = "layer" + std::to_string(k) + ".";
        out.emplace_back(p + "weight", l.weight);
        out.emplace_back(p + "bias", l.bias);
        if (l.li.defined()) out.emplace_back(p + "li", l.li);
        if (l.lw.defined()) out.emplace_back(p + "lw", l.lw);
        if (l.normalized) {
            out.emplace_back(p + "v1", l.norm.v1);
            out.emplace_back(p + "theta", l.norm.theta);
            out.emplace_back(p + "psi", l.norm.psi);
            out.emplace_back(p + "running_var", l.norm.running_var);
        }
    }
    return out;
}

void StConvModel::save(const std::string& path) const { tensor::save_checkpoint(path, named_tensors()); }
void StConvModel::load(const std::string& path) { tensor::load_checkpoint(path, named_tensors()); }

Tensor to_tensor(const std::vector<Eigen::MatrixXd>& days, double value_scale) {
    if (days.empty()) throw std::invalid_argument("to_tensor: empty sequence");
    const int H = static_cast<int>(days[0].rows()), W = static_cast<int>(days[0].cols());
    const int T = static_cast<int>(days.size());
    std::vector<double> v(static_cast<std::size_t>(T) * H * W);
    for (int t = 0; t < T; ++t) {
        if (days[t].rows() != H || days[t].cols() != W) throw std::invalid_argument("to_tensor: ragged sequence");
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) v[(static_cast<std::size_t>(t) * H + h) * W + w] = days[t](h, w) / value_scale;
    }
    return Tensor::from({1, 1, T, H, W}, std::move(v));
}

Sample make_sample(const std::vector<Eigen::MatrixXd>& input, const std::vector<Eigen::MatrixXd>& target,
                   double value_scale) {
    return {to_tensor(input, value_scale), to_tensor(target, value_scale)};
}

namespace {

Tensor stack(const std::vector<Sample>& data, std::size_t begin, std::size_t end, bool targets) {
    Shape s = (targets ? data[begin].target : data[begin].input).shape();
    s[0] = static_cast<int>(end - begin);
    std::vector<double> v;
    v.reserve(tensor::numel(s));
    for (std::size_t k = begin; k < end; ++k) {
        const auto& src = (targets ? data[k].target : data[k].input).values();
        v.insert(v.end(), src.begin(), src.end());
    }
    return Tensor::from(s, std::move(v));
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    for (const auto& p : params) out.push_back(p.values());
    return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k].values() = snap[k];
}

}  // namespace

TrainLog train(StConvModel& model, const std::vector<Sample>& data, int epochs) {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    TrainLog log;
    if (epochs == 0) return log;
    if (data.empty()) throw std::invalid_argument("training set is empty");
    auto params = model.parameters();
    const std::size_t bs = static_cast<std::size_t>(model.config().batch_size);
    for (int e = 0; e < epochs; ++e) {
        const auto snap = snapshot(params);
        double total = 0.0;
        for (std::size_t begin = 0; begin < data.size(); begin += bs) {
            const std::size_t end = std::min(data.size(), begin + bs);
            const Tensor x = stack(data, begin, end, false), y = stack(data, begin, end, true);
            const Tensor loss = tensor::mse_loss(model.forward(x, Mode::train), y);
            if (!std::isfinite(loss.item())) {
                restore(params, snap);
                log.aborted = true;
                return log;
            }
            model.optimizer().zero_grad();
            tensor::backward(loss);
            model.optimizer().step();
            total += loss.item() * static_cast<double>(end - begin);
        }
        log.epoch_loss.push_back(total / static_cast<double>(data.size()));
    }
    return log;
}

TrainLog online_update(StConvModel& model, const Sample& sample, int epochs) {
    return train(model, std::vector<Sample>{sample}, epochs);
}

double evaluate_loss(StConvModel& model, const Sample& sample) {
    return tensor::mse_loss(model.forward(sample.input, Mode::infer), sample.target).item();
}

std::vector<Band> split_bands(int rows, int count) {
    if (count < 1 || rows < count) throw std::invalid_argument("cannot split " + std::to_string(rows) +
                                                               " rows into " + std::to_string(count) + " bands");
    const int h = rows / count;
    std::vector<Band> out;
    for (int b = 0; b < count; ++b) out.push_back({b * h, b == count - 1 ? rows : (b + 1) * h});
    return out;
}

std::vector<Eigen::MatrixXd> band_rows(const std::vector<Eigen::MatrixXd>& days, const Band& band) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(days.size());
    for (const auto& d : days) out.push_back(d.middleRows(band.row_begin, band.rows()));
    return out;
}

Eigen::MatrixXd predict_region_split(std::vector<StConvModel>& models, const std::vector<Eigen::MatrixXd>& sequence) {
    if (sequence.empty()) throw std::invalid_argument("predict_region_split: empty sequence");
    const int rows = static_cast<int>(sequence[0].rows()), cols = static_cast<int>(sequence[0].cols());
    const auto bands = split_bands(rows, static_cast<int>(models.size()));
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t b = 0; b < bands.size(); ++b) {
        auto& m = models[b];
        if (m.height() != bands[b].rows() || m.width() != cols)
            throw std::invalid_argument("band " + std::to_string(b) + " has " + std::to_string(bands[b].rows()) +
                                        "x" + std::to_string(cols) + " cells, its model expects " +
                                        std::to_string(m.height()) + "x" + std::to_string(m.width()));
        if (static_cast<int>(sequence.size()) != m.config().horizon)
            throw std::invalid_argument("sequence length does not match the model horizon");
        const Tensor x = to_tensor(band_rows(sequence, bands[b]), m.config().value_scale);
        const Tensor y = m.forward(x, Mode::infer);
        const int T = m.config().horizon;
        for (int h = 0; h < bands[b].rows(); ++h)
            for (int w = 0; w < cols; ++w)
                out(bands[b].row_begin + h, w) = std::max(0.0, y.at(0, 0, T - 1, h, w) * m.config().value_scale);
    }
    return out;
}

void write_training_log(const std::string& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e)
        out << e + 1 << ',' << detail::fmt6(log.epoch_loss[e]) << '\n';
}

}  // namespace covmap::stconv

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace covmap::tensor {

/// (batch, channel, time, height, width)
using Shape = std::array<int, 5>;

std::size_t numel(const Shape& s);
std::string to_string(const Shape& s);

struct Node {
    Shape shape{1, 1, 1, 1, 1};
    std::vector<double> value;
    std::vector<double> grad;  ///< empty until a backward pass touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  ///< accumulates into parents' grads
    std::vector<double>& ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor filled(const Shape& shape, double v, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const { return node_->shape[axis]; }
    std::size_t size() const { return node_->value.size(); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    double item() const;
    double& at(int b, int c, int t, int h, int w);
    double at(int b, int c, int t, int h, int w) const;
    std::size_t index(int b, int c, int t, int h, int w) const;
    void zero_grad();
    /// Value copy with no graph history.
    Tensor detach() const;

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

/// Builds a result tensor; the backward closure receives the result node and
/// must add into the parents' grads (use ensure_grad). History is recorded
/// only when some parent requires a gradient.
Tensor make_op(const Shape& shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward);

/// Reverse pass from a one-element tensor. Leaf gradients accumulate across
/// calls until zero_grad.
void backward(const Tensor& loss, double seed = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Expands a (1, C, 1, H, W) tensor to (batch, C, time, H, W).
Tensor broadcast(const Tensor& a, int batch, int time);

enum class TemporalPadding { causal, same };

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kt = 1;
    int kh = 1;
    int kw = 1;
    TemporalPadding temporal = TemporalPadding::causal;
    bool bias = true;
    void validate() const;
    Shape weight_shape() const { return {out_channels, in_channels, kt, kh, kw}; }
    Shape bias_shape() const { return {1, out_channels, 1, 1, 1}; }
};

/// Output has the input's time/height/width. Causal padding puts kt-1 zeros
/// before the first step; spatial padding is (k-1)/2 before, the rest after.
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec);

/// One filter per output location: weight shape
/// (out, in * kt * kh * kw, time, height, width), padding as in conv3d.
Tensor locally_connected(const Tensor& x, const Tensor& weight, int out_channels, int kt, int kh, int kw,
                         TemporalPadding temporal = TemporalPadding::causal);

struct AdaModOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double beta3 = 0.9999;
    double eps = 1e-8;
    void validate() const;
};

class AdaMod {
public:
    AdaMod(std::vector<Tensor> params, AdaModOptions opt = {});
    /// Applies one update from the parameters' current grads. Returns false
    /// (and leaves everything untouched) when a gradient is not finite.
    bool step();
    void zero_grad();
    int steps() const { return t_; }
    int skipped() const { return skipped_; }
    const AdaModOptions& options() const { return opt_; }

private:
    std::vector<Tensor> params_;
    AdaModOptions opt_;
    std::vector<std::vector<double>> m_, v_, s_;
    int t_ = 0;
    int skipped_ = 0;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Binary checkpoint, little-endian: "CMTK", u32 version (1), u32 count,
/// then per tensor u32 name length, name bytes, 5 x i32 shape, float64 values.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
/// Loads values into the given tensors; names and shapes must match.
void load_checkpoint(const std::string& path, const NamedTensors& tensors);

}  // namespace covmap::tensor

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covmap/tensor.hpp"

namespace covmap::stconv {

using tensor::Tensor;

struct ModelConfig {
    int layers_per_block = 3;
    int base_filters = 32;
    int spatial_kernel = 5;
    int temporal_kernel = 5;
    int li_count = 2;  ///< n learnable inputs and n local weights per convolution
    int lw_kt = 1;
    int lw_kh = 1;
    int lw_kw = 1;
    int horizon = 7;  ///< input and output sequence length T
    double value_scale = 1000.0;
    double eps = 1e-5;
    double momentum = 0.9;
    double lr = 1e-3;
    double beta3 = 0.9999;  ///< AdaMod long-term step-size average
    double optimizer_eps = 1e-8;
    int batch_size = 5;
    int online_epochs = 5;
    /// Last layer of each block returns to the block's input channel count;
    /// false returns to base_filters instead.
    bool reduce_to_block_input = true;
    std::uint64_t seed = 0;
    void validate() const;
};

enum class Mode { train, infer };

struct B03dLayer {
    B03dLayer() = default;
    B03dLayer(int channels, int steps, double eps, double momentum);
    Tensor v1, theta, psi;   ///< (1, C, 1, 1, 1)
    Tensor running_var;      ///< (1, C, T, 1, 1), no gradient
    double eps = 1e-5;
    double momentum = 0.9;
};

/// x / max(sqrt(batch var + eps), v1 x + sqrt(instance var + eps)) * theta + psi,
/// with variances taken per (channel, time step): batch variance over
/// (batch, height, width), instance variance over (height, width).
Tensor b03d(const Tensor& x, B03dLayer& layer, Mode mode);

/// Appends n learnable-input channels (li: (1, n, 1, H, W), shared over time)
/// and n local-weight channels (locally connected over x with weight lw).
/// n = 0 returns x.
Tensor augment_li_lw(const Tensor& x, const Tensor& li, const Tensor& lw, int n, int kt = 1, int kh = 1,
                     int kw = 1);

struct ConvLayer {
    tensor::ConvSpec spec;
    Tensor weight, bias;
    Tensor li, lw;
    bool normalized = true;
    B03dLayer norm;
    int in_channels = 1;  ///< before augmentation
};

class StConvModel {
public:
    StConvModel(ModelConfig config, int height, int width);
    StConvModel(const StConvModel&) = delete;
    StConvModel& operator=(const StConvModel&) = delete;
    StConvModel(StConvModel&&) = default;
    StConvModel& operator=(StConvModel&&) = default;

    /// x: (batch, 1, T, H, W) in scaled units. temporal_out receives the
    /// temporal block's output when given.
    Tensor forward(const Tensor& x, Mode mode, Tensor* temporal_out = nullptr);

    const ModelConfig& config() const { return config_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::vector<ConvLayer>& layers() { return layers_; }
    int temporal_layers() const { return config_.layers_per_block; }

    std::vector<Tensor> parameters() const;
    /// Parameters plus running statistics, for checkpoints.
    tensor::NamedTensors named_tensors() const;
    tensor::AdaMod& optimizer() { return optimizer_; }
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    Tensor apply(ConvLayer& layer, const Tensor& x, Mode mode);
    ModelConfig config_;
    int height_ = 0;
    int width_ = 0;
    std::vector<ConvLayer> layers_;
    tensor::AdaMod optimizer_;
};

/// One (input sequence, target sequence) pair, each (1, 1, T, H, W), scaled.
struct Sample {
    Tensor input;
    Tensor target;
};

/// Scales T daily matrices (rows x cols) into a (1, 1, T, rows, cols) tensor.
Tensor to_tensor(const std::vector<Eigen::MatrixXd>& days, double value_scale);
Sample make_sample(const std::vector<Eigen::MatrixXd>& input, const std::vector<Eigen::MatrixXd>& target,
                   double value_scale);

struct TrainLog {
    std::vector<double> epoch_loss;
    bool aborted = false;  ///< non-finite loss; parameters restored to the epoch start
};

/// Mini-batch MSE training in dataset order.
TrainLog train(StConvModel& model, const std::vector<Sample>& data, int epochs);
/// Fine-tunes on one sequence; the returned losses are measured before each epoch's step.
TrainLog online_update(StConvModel& model, const Sample& sample, int epochs);
/// MSE of the model on one sample in inference mode.
double evaluate_loss(StConvModel& model, const Sample& sample);

struct Band {
    int row_begin = 0;
    int row_end = 0;
    int rows() const { return row_end - row_begin; }
};
/// Contiguous row bands; remainder rows go to the last band.
std::vector<Band> split_bands(int rows, int count = 3);

/// Each band's model predicts from its rows of the T-day sequence; the last
/// output step of each band, unscaled and clamped at 0, is stitched back.
Eigen::MatrixXd predict_region_split(std::vector<StConvModel>& models, const std::vector<Eigen::MatrixXd>& sequence);

/// Rows [band.row_begin, band.row_end) of every day.
std::vector<Eigen::MatrixXd> band_rows(const std::vector<Eigen::MatrixXd>& days, const Band& band);

void write_training_log(const std::string& path, const TrainLog& log);

}  // namespace covmap::stconv

#pragma once

#include "seqfusion/core.hpp"
#include "seqfusion/rng.hpp"
#include "seqfusion/tensors.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seqfusion {

enum class Architecture { linear, patch_mlp, last, mean, seasonal_naive };

std::string to_string(Architecture a);
/// Accepts both "patch_mlp" and "patch-mlp" spellings.
Architecture parse_architecture(std::string_view s);
bool is_trainable(Architecture a);

struct ForecasterSpec {
    Architecture architecture = Architecture::linear;
    int input_len = 36;
    int horizon = 12;
    int patch_len = 16;
    int hidden_dim = 64;
    int season_period = 7;

    /// ceil(input_len / patch_len); the tail patch is zero-padded.
    int num_patches() const { return (input_len + patch_len - 1) / patch_len; }
    void validate() const;
};

struct TrainConfig {
    int epochs = 10;
    double learning_rate = 1e-3;
    int batch_size = 8;
    std::uint64_t seed = 0;
    int stride = 1;

    void validate() const;
};

/// A window-to-block mapping: length input_len() in, length horizon() out.
/// Inputs are instance-normalized by the caller.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual int input_len() const = 0;
    virtual int horizon() const = 0;
    virtual TimeSeries predict(const TimeSeries& window) const = 0;
};

/// Zero tensors with the parameter layout of `spec` (empty for baselines).
NamedTensors weight_layout(const ForecasterSpec& spec);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor, fan_in of the owning layer.
NamedTensors init_weights(const ForecasterSpec& spec, Rng& rng);

/// Immutable one-variate forecaster.
class Forecaster final : public Predictor {
public:
    Forecaster(ForecasterSpec spec, NamedTensors weights, std::string source_dataset);

    /// Parameter-free baseline (last, mean, seasonal_naive).
    static Forecaster baseline(const ForecasterSpec& spec);

    const ForecasterSpec& spec() const { return spec_; }
    const NamedTensors& weights() const { return weights_; }
    const std::string& source_dataset() const { return source_dataset_; }

    int input_len() const override { return spec_.input_len; }
    int horizon() const override { return spec_.horizon; }
    TimeSeries predict(const TimeSeries& window) const override { return forecast(window); }

    TimeSeries forecast(const TimeSeries& window) const;
    /// Column-wise batch forecast: (T x B) -> (h x B).
    Matrix forecast_batch(const Matrix& windows) const;

private:
    ForecasterSpec spec_;
    NamedTensors weights_;
    std::string source_dataset_;
};

/// Training pairs, one sample per column.
struct Batch {
    Matrix inputs;   // T x B
    Matrix targets;  // h x B
};

/// Forward pass on raw parameters, no Forecaster wrapper needed.
Matrix forward(const ForecasterSpec& spec, const NamedTensors& weights, const Matrix& inputs);

struct LossGrad {
    double loss = 0.0;
    NamedTensors grad;
};

/// Mean over all h*B entries of the squared error, with exact gradients.
LossGrad loss_and_grad(const ForecasterSpec& spec, const NamedTensors& weights, const Batch& batch);

/// All (window, target) pairs from every channel with the given stride. Both
/// halves are scaled by the window's NormStats.
Batch extract_training_pairs(const MultivariateSeries& series, int input_len, int horizon, int stride);

struct TrainResult {
    Forecaster model;
    std::vector<double> epoch_losses;
};

/// Plain mini-batch SGD on the normalized MSE.
TrainResult train(const ForecasterSpec& spec, const Dataset& data, const TrainConfig& cfg);

std::string save_forecaster(const Forecaster& model);
Forecaster load_forecaster(const std::string& bytes);
void save_forecaster_file(const Forecaster& model, const std::filesystem::path& path);
Forecaster load_forecaster_file(const std::filesystem::path& path);

}  // namespace seqfusion

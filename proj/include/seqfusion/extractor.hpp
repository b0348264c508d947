#pragma once

#include "seqfusion/core.hpp"
#include "seqfusion/rng.hpp"
#include "seqfusion/tensors.hpp"
#include "seqfusion/transfer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace seqfusion {

/// A d-dimensional embedding of a window (or the mean over many windows).
using Representation = Eigen::VectorXd;

struct ExtractorDims {
    int window_len = 36;  // L
    int hidden = 64;
    int dim = 32;  // d

    void validate() const;
};

/// Per-epoch mean of each objective component.
struct EpochLog {
    int epoch = 0;
    double reconstruction = 0.0;
    double transferability = 0.0;
    double constraint = 0.0;
    double total = 0.0;
};

/// Two-layer MLP encoder (L -> hidden -> d, ReLU) and its mirror decoder.
///   encoder: W1 (hidden x L), b1, W2 (d x hidden), b2
///   decoder: V1 (hidden x d), c1, V2 (L x hidden), c2
struct ExtractorParams {
    ExtractorDims dims;
    NamedTensors weights;
    std::vector<EpochLog> training_log;

    static NamedTensors layout(const ExtractorDims& dims);
    static ExtractorParams zeros(const ExtractorDims& dims);
    static ExtractorParams random(const ExtractorDims& dims, Rng& rng);
};

/// E(X) for each column of X (L x B) -> (d x B).
Matrix encode_batch(const ExtractorParams& p, const Matrix& windows);

/// E(x) = W2 relu(W1 x + b1) + b2. Caller supplies a normalized window.
Representation encode(const ExtractorParams& p, const TimeSeries& window);

/// Reconstruction from representations (d x B) -> (L x B).
Matrix decode_batch(const ExtractorParams& p, const Matrix& reprs);

struct MaskSpec {
    double mask_ratio = 0.25;
    int num_views = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// num_views copies of `window`, each with floor(mask_ratio * L) positions
/// (drawn without replacement) set to 0.
std::vector<TimeSeries> mask_series(const TimeSeries& window, const MaskSpec& spec);
std::vector<TimeSeries> mask_series(const TimeSeries& window, double mask_ratio, int num_views, Rng& rng);

/// Anchor representations and their masked views. views has B*V columns;
/// column a*V + v is view v of anchor a.
struct ContrastiveBatch {
    Matrix anchors;  // d x B
    Matrix views;    // d x (B*V)
    int views_per_anchor = 1;
};

/// Series-wise similarity loss. For each anchor s and each of its views s',
///   -log( exp(sim(s, s')) / sum_{s''} exp(sim(s, s'')) )
/// where s'' ranges over every anchor in the batch (s included). The total is
/// divided by the number of (s, s') pairs. Throws "no negatives" for B < 2.
double constraint_loss(const ContrastiveBatch& batch);

struct TransferPair {
    Representation a;
    Representation b;
    double g = 0.0;
};

/// Mean over pairs of (g - sim(a, b))^2.
double transferability_loss(const std::vector<TransferPair>& pairs);

/// One optimisation step's worth of inputs for the combined objective.
struct ObjectiveBatch {
    Matrix anchors;                 // L x B, normalized windows
    Matrix masked;                  // L x (B*V), column a*V + v masks anchor a
    int views_per_anchor = 1;
    std::vector<int> dataset_index; // B entries, rows/cols of `g`
    Matrix g;                       // transfer targets, already clipped
    double lambda = 0.5;
};

struct ObjectiveValue {
    double reconstruction = 0.0;
    double transferability = 0.0;
    double constraint = 0.0;
    double total = 0.0;
    NamedTensors grad;
};

/// reconstruction + transferability + lambda * constraint, with exact gradients.
/// Reconstruction is the mean squared error of decode(encode(masked view))
/// against its anchor. Transferability pairs are all ordered anchor pairs
/// drawn from different datasets, targeting g(dataset(a), dataset(b)).
ObjectiveValue objective_and_grad(const ExtractorParams& p, const ObjectiveBatch& batch);

struct ExtractorTrainConfig {
    double lambda = 0.5;
    int epochs = 400;
    double learning_rate = 0.2;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int windows_per_dataset = 64;

    void validate() const;
};

/// Seeded SGD on the combined objective. Every dataset name must appear in tm.
ExtractorParams train_extractor(const std::vector<Dataset>& datasets, const TransferMatrix& tm,
                                const ExtractorTrainConfig& cfg, const MaskSpec& mask, const ExtractorDims& dims);

struct PcaResult {
    Matrix components;         // d x k, unit columns
    Vector explained_variance; // k
    Matrix projections;        // N x k
};

/// Top-k principal components by power iteration with deflation (200
/// iterations, seeded start). Each component's largest-magnitude loading is
/// made positive.
PcaResult pca_project(const std::vector<Representation>& reprs, int k, std::uint64_t seed = 0);

std::string save_extractor(const ExtractorParams& p);
ExtractorParams load_extractor(const std::string& bytes);
void save_extractor_file(const ExtractorParams& p, const std::filesystem::path& path);
ExtractorParams load_extractor_file(const std::filesystem::path& path);

}  // namespace seqfusion

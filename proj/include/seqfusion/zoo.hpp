#pragma once

#include "seqfusion/core.hpp"
#include "seqfusion/extractor.hpp"
#include "seqfusion/forecasters.hpp"
#include "seqfusion/transfer.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace seqfusion {

struct ModelEntry {
    std::string model_id;
    std::string file;    // relative to the zoo directory; empty for in-memory zoos
    std::string digest;  // sha256 hex of the file bytes
    std::string source_dataset;
    int input_len = 0;
    int horizon = 0;
    Representation representation;
};

struct ZooManifest {
    int format_version = 1;
    std::string extractor;  // relative path of the extractor file
    std::vector<ModelEntry> entries;

    /// >= 1 entry, unique ids, one shared representation dimension.
    void validate() const;
};

std::string save_manifest(const ZooManifest& m);
ZooManifest load_manifest(const std::string& bytes);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

/// Mean encoding of `sample_count` normalized windows drawn without
/// replacement over all (channel, start) positions of `source`; every window
/// is used when sample_count covers them all.
Representation compute_model_representation(const ExtractorParams& extractor, const Dataset& source, int sample_count,
                                             std::uint64_t seed);

/// Splits every channel at floor((1 - holdout) * T): head for training, tail for evaluation.
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double holdout_fraction);

/// Normalized-scale MSE of `model` over every (window, target) pair of `series` (stride 1).
double evaluate_normalized_mse(const Predictor& model, const MultivariateSeries& series);

/// Trains one forecaster per dataset on its head split and scores it on every
/// dataset's tail split: g(i, j) = 1 - MSE.
TransferMatrix compute_transfer_matrix(const std::vector<Dataset>& datasets, const ForecasterSpec& spec,
                                       const TrainConfig& cfg, double holdout_fraction = 0.2);

/// The model zoo: an extractor plus forecasters with their representations.
/// Immutable once constructed; forecasters of a loaded zoo are read from disk
/// on first use and cached. Safe for concurrent readers.
class Zoo {
public:
    /// In-memory zoo; `models[i]` belongs to `entries[i]`.
    Zoo(ExtractorParams extractor, std::vector<ModelEntry> entries,
        std::vector<std::shared_ptr<const Predictor>> models);

    static Zoo load(const std::filesystem::path& dir);

    const ExtractorParams& extractor() const;
    const std::vector<ModelEntry>& entries() const;
    std::size_t size() const;
    int index_of(const std::string& model_id) const;

    std::shared_ptr<const Predictor> model(std::size_t i) const;

private:
    struct State;
    Zoo() = default;
    std::shared_ptr<State> state_;
};

struct BuildZooOptions {
    int samples = 256;
    std::uint64_t seed = 0;
};

/// Writes `out_dir/zoo.json`, `out_dir/extractor.json` and `out_dir/models/<id>.json`.
/// Model ids are the model file stems; each model's source_dataset must name
/// one of `sources`.
ZooManifest build_zoo(const std::vector<std::filesystem::path>& model_files, const std::filesystem::path& extractor_file,
                      const std::vector<Dataset>& sources, const BuildZooOptions& opts,
                      const std::filesystem::path& out_dir);

inline Zoo load_zoo(const std::filesystem::path& dir) { return Zoo::load(dir); }

}  // namespace seqfusion

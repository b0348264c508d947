#pragma once

#include "seqfusion/core.hpp"
#include "seqfusion/forecasters.hpp"
#include "seqfusion/zoo.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace seqfusion {

struct FusionConfig {
    int horizon = 12;
    int top_k = 1;
    /// Optional per-channel forced model ids; an empty string means "match".
    std::vector<std::string> forced_model_ids;
};

struct Candidate {
    std::string model_id;
    std::size_t index = 0;  // position in the zoo
    double score = 0.0;
};

struct SelectionResult {
    std::vector<Candidate> ranked;    // descending score, ties in zoo order
    std::vector<std::size_t> chosen;  // zoo indices actually used
};

/// Ranks zoo entries by cosine(theta_m, mu) and keeps the first top_k.
SelectionResult rank_models(const std::vector<ModelEntry>& entries, const Representation& mu, int top_k);

/// Normalizes the raw look-back window, encodes it and ranks the zoo.
SelectionResult match(const Zoo& zoo, const TimeSeries& raw_window, int top_k = 1);

/// Recursive block forecasting over ceil(H / h) blocks. Each block's input is
/// the last T values of [window, previous blocks]; within a block the k models'
/// outputs are averaged. The result is the first H values of the concatenation.
TimeSeries sequential_forecast(std::span<const Predictor* const> models, const TimeSeries& window, int H);

inline TimeSeries sequential_forecast(const Predictor& model, const TimeSeries& window, int H) {
    const Predictor* one[] = {&model};
    return sequential_forecast(one, window, H);
}

struct FusionResult {
    MultivariateSeries forecast;  // H x C, original scale
    std::vector<SelectionResult> selections;
    std::vector<NormStats> stats;
};

/// Per channel: normalize, match, sequential_forecast with the top-k models,
/// de-normalize. Histories longer than the zoo's look-back are trimmed to
/// their last T values.
FusionResult forecast_multivariate(const Zoo& zoo, const MultivariateSeries& history, const FusionConfig& cfg);

/// `channel,step,value` long-format CSV.
void write_forecast_csv(const std::filesystem::path& path, const MultivariateSeries& forecast);
MultivariateSeries read_forecast_csv(const std::filesystem::path& path);

/// Per channel: ranked (model_id, score), chosen ids, k and NormStats.
std::string provenance_json(const FusionResult& result, int top_k);

}  // namespace seqfusion

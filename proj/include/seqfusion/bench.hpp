#pragma once

#include "seqfusion/core.hpp"
#include "seqfusion/fusion.hpp"
#include "seqfusion/zoo.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqfusion {

enum class FamilyKind { sine, sawtooth, trend_sine, random_walk, ar1 };

std::string to_string(FamilyKind k);
FamilyKind parse_family(std::string_view s);

struct SyntheticFamilySpec {
    FamilyKind kind = FamilyKind::sine;
    int period = 12;
    double amplitude = 1.0;
    double noise_std = 0.1;
    int length = 1000;
    int channels = 1;
    std::uint64_t seed = 0;
    std::string name;  // defaults to the kind name

    void validate() const;
};

/// sine:        a sin(2 pi t / period) + eps
/// sawtooth:    a ((t mod period) / period) + eps
/// trend_sine:  sine + 0.01 t
/// random_walk: cumulative sum of N(0, noise_std^2)
/// ar1:         x_t = 0.9 x_{t-1} + N(0, noise_std^2)
/// Periodic families give each channel its own integer phase offset.
Dataset generate_synthetic(const SyntheticFamilySpec& spec);

struct BenchConfig {
    int look_back = 36;
    std::vector<int> horizons = {6, 8, 14, 18, 24, 36, 48};
    std::vector<std::string> metrics = {"mse", "smape", "mape"};
    std::uint64_t seed = 0;
    int trials = 5;
    int top_k = 1;
    int season_period = 7;
    double eval_fraction = 0.2;
    std::vector<std::string> dataset_paths;
    std::vector<SyntheticFamilySpec> synthetic;

    void validate() const;
};

/// Flat `key = value` file. Keys mirror BenchConfig; lists are comma
/// separated, optionally inside [ ]. Synthetic families are declared as
/// `synthetic = sine:12, sawtooth:18` plus optional synthetic_length,
/// synthetic_noise, synthetic_channels and synthetic_amplitude.
BenchConfig parse_bench_config(const std::string& text);
BenchConfig load_bench_config(const std::filesystem::path& path);

struct WindowResult {
    std::string dataset;
    int trial = 0;
    int horizon = 0;
    std::string method;
    Eigen::Index window_start = 0;
    double mse = 0.0;
    double smape = 0.0;
    double mape = 0.0;  // NaN when undefined
};

struct MethodScore {
    std::string dataset;
    std::string method;
    int horizon = 0;  // 0 in summary rows
    double mse = 0.0;
    double mse_trial_std = 0.0;
    double smape = 0.0;
    double mape = 0.0;
    int windows = 0;
};

struct ZooScore {
    std::string dataset;
    std::string model_id;
    int horizon = 0;
    double mse = 0.0;
};

struct BenchReport {
    std::vector<MethodScore> table;    // per (dataset, method, horizon)
    std::vector<MethodScore> summary;  // per (dataset, method), mean over horizons
    std::vector<WindowResult> windows;
    std::vector<ZooScore> zoo_distribution;
    std::vector<std::string> warnings;
    std::optional<std::uintmax_t> zoo_bytes;
};

/// Zero-shot evaluation on the tail (last eval_fraction) of each dataset:
/// non-overlapping windows of look_back + H, each trial starting at a seeded
/// offset. Metrics are computed on the original scale.
BenchReport run_benchmark(const BenchConfig& cfg, const Zoo& zoo, const std::vector<Dataset>& datasets);

/// Loads cfg.dataset_paths and generates cfg.synthetic.
std::vector<Dataset> bench_datasets(const BenchConfig& cfg);

/// table.csv, summary.csv, windows.csv, zoo_distribution.csv, report.json.
void write_report(const BenchReport& report, const std::filesystem::path& dir);
std::string report_json(const BenchReport& report);

std::uintmax_t directory_bytes(const std::filesystem::path& dir);

}  // namespace seqfusion

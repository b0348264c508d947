#pragma once

// Drives the command-line tool through the full pipeline in a scratch
// directory: synth -> train-ptm x5 -> transfer-matrix -> train-extractor ->
// build-zoo -> forecast -> embed -> evaluate -> benchmark.

#include "seqfusion/zoo.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace seqfusion::testing {

struct CliResult {
    int exit_code = 0;
    std::string out;
    std::string err;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

/// Runs `cli args` inside `dir`, capturing stdout and stderr.
inline CliResult run_cli(const std::string& cli, const std::filesystem::path& dir, const std::string& args) {
    const auto out = dir / ".stdout";
    const auto err = dir / ".stderr";
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

struct PipelineOptions {
    std::uint64_t seed = 0;
    int extractor_epochs = 40;
};

struct PipelineRun {
    std::vector<std::pair<std::string, CliResult>> steps;
    bool ok = true;
    std::string failure;
};

inline const std::vector<std::pair<std::string, int>>& pipeline_families() {
    static const std::vector<std::pair<std::string, int>> f = {
        {"sine", 12}, {"sawtooth", 18}, {"trend_sine", 24}, {"random_walk", 12}, {"ar1", 12}};
    return f;
}

inline PipelineRun run_pipeline(const std::string& cli, const std::filesystem::path& dir, const PipelineOptions& o) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    PipelineRun run;
    const std::string seed = " --seed " + std::to_string(o.seed);
    auto step = [&](const std::string& label, const std::string& args) {
        if (!run.ok) return;
        CliResult r = run_cli(cli, dir, args);
        if (r.exit_code != 0) {
            run.ok = false;
            run.failure = label + ": " + r.err;
        }
        run.steps.emplace_back(label, std::move(r));
    };
    std::string datasets, models;
    int i = 1;
    for (const auto& [kind, period] : pipeline_families()) {
        step("synth " + kind, "synth --kind " + kind + " --period " + std::to_string(period) +
                                  " --length 800 --seed " + std::to_string(o.seed * 10 + i++) + " --out data/" + kind + ".csv");
        datasets += (datasets.empty() ? "" : ",") + ("data/" + kind + ".csv");
    }
    for (const auto& [kind, period] : pipeline_families()) {
        step("train-ptm " + kind, "train-ptm --data data/" + kind + ".csv --arch linear --input-len 36 --horizon 12 "
                                  "--epochs 10 --lr 0.001 --out models/" + kind + ".json" + seed);
        models += (models.empty() ? "" : ",") + ("models/" + kind + ".json");
    }
    step("train-ptm patch", "train-ptm --data data/sine.csv --arch patch-mlp --out models/sine_patch.json" + seed);
    models += ",models/sine_patch.json";
    step("transfer-matrix", "transfer-matrix --datasets " + datasets + " --out tm.json" + seed);
    step("train-extractor", "train-extractor --datasets " + datasets +
                                " --transfer-matrix tm.json --lambda 0.5 --mask-ratio 0.25 --views 3 --dim 32 --epochs " +
                                std::to_string(o.extractor_epochs) + " --out extractor.json" + seed);
    step("build-zoo", "build-zoo --models " + models + " --extractor extractor.json --sources " + datasets +
                          " --samples 256 --out zoo" + seed);
    step("synth target", "synth --kind sine --period 12 --amplitude 3 --channels 2 --length 60 --seed 99 --out target.csv");
    step("forecast", "forecast --zoo zoo --input target.csv --horizon 24 --top-k 3 --out forecast.csv" + seed);
    step("embed", "embed --zoo zoo --input target.csv --pca 2 --out pca.csv" + seed);
    step("evaluate", "evaluate --pred forecast.csv --truth forecast.csv --json");
    {
        std::ofstream cfg(dir / "bench.toml");
        cfg << "look_back = 36\nhorizons = 6, 24\ntrials = 2\nsynthetic = sine:12, ar1\nsynthetic_length = 600\n";
    }
    step("benchmark", "benchmark --config bench.toml --zoo zoo --out report" + seed);
    return run;
}

/// sha256 of every regular file under `dir` (scratch capture files excluded).
inline std::map<std::string, std::string> artifact_digests(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == ".stdout" || name == ".stderr") continue;
        out[std::filesystem::relative(e.path(), dir).string()] = sha256_hex(read_file(e.path()));
    }
    return out;
}

}  // namespace seqfusion::testing

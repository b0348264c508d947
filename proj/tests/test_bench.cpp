#include "seqfusion/bench.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace seqfusion;
namespace fs = std::filesystem;

namespace {

SyntheticFamilySpec family(FamilyKind k, int period, double noise, int length, std::uint64_t seed) {
    SyntheticFamilySpec s;
    s.kind = k;
    s.period = period;
    s.noise_std = noise;
    s.length = length;
    s.seed = seed;
    return s;
}

std::shared_ptr<const Predictor> last_model(int T, int h) {
    ForecasterSpec s;
    s.architecture = Architecture::last;
    s.input_len = T;
    s.horizon = h;
    return std::make_shared<const Forecaster>(Forecaster::baseline(s));
}

Zoo last_only_zoo(int T) {
    Rng rng(1);
    ModelEntry e;
    e.model_id = "last";
    e.input_len = T;
    e.horizon = 12;
    e.representation = Vector::Ones(4);
    return Zoo(ExtractorParams::random(ExtractorDims{T, 8, 4}, rng), {e}, {last_model(T, 12)});
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
    std::ifstream f(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("synthetic generators") {
    const Dataset sine = generate_synthetic(family(FamilyKind::sine, 12, 0.0, 200, 1));
    for (int t = 0; t + 12 < 200; ++t) CHECK(sine.series.values(t + 12, 0) == sine.series.values(t, 0));

    const Dataset saw = generate_synthetic(family(FamilyKind::sawtooth, 5, 0.0, 50, 2));
    for (int t = 0; t + 5 < 50; ++t) CHECK(saw.series.values(t + 5, 0) == saw.series.values(t, 0));
    CHECK(saw.series.values.maxCoeff() == doctest::Approx(0.8));
    CHECK(saw.series.values.minCoeff() == 0.0);

    const Dataset trend = generate_synthetic(family(FamilyKind::trend_sine, 10, 0.0, 100, 3));
    for (int t = 0; t + 10 < 100; ++t) CHECK(trend.series.values(t + 10, 0) - trend.series.values(t, 0) == doctest::Approx(0.1));

    auto a = family(FamilyKind::ar1, 12, 1.0, 300, 4);
    a.channels = 3;
    const Dataset ar = generate_synthetic(a);
    CHECK(ar.series.channels() == 3);
    CHECK(generate_synthetic(a).series.values == ar.series.values);
    a.seed = 5;
    CHECK(generate_synthetic(a).series.values != ar.series.values);

    auto bad = family(FamilyKind::sine, 12, -1.0, 100, 1);
    CHECK_THROWS(generate_synthetic(bad));
    CHECK(parse_family("random_walk") == FamilyKind::random_walk);
    CHECK_THROWS(parse_family("chaos"));
}

TEST_CASE("random walk variance grows linearly") {
    const double sigma = 0.5;
    const int steps = 60;
    std::vector<double> sum(steps, 0.0), sumsq(steps, 0.0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Dataset rw = generate_synthetic(family(FamilyKind::random_walk, 12, sigma, steps, seed));
        for (int t = 0; t < steps; ++t) {
            sum[t] += rw.series.values(t, 0);
            sumsq[t] += rw.series.values(t, 0) * rw.series.values(t, 0);
        }
    }
    for (int t : {9, 29, 59}) {
        const double mean = sum[t] / 1000;
        const double var = sumsq[t] / 1000 - mean * mean;
        const double expected = (t + 1) * sigma * sigma;
        CHECK(std::abs(var - expected) / expected < 0.1);
    }
}

TEST_CASE("bench config parsing") {
    const BenchConfig cfg = parse_bench_config(R"(
# comment
look_back = 36
horizons = [6, 12]
metrics = mse, smape
seed = 4
trials = 3
top_k = 2
season_period = 12
eval_fraction = 0.25
synthetic = sine:12, ar1
synthetic_length = 500
synthetic_channels = 2
)");
    CHECK(cfg.horizons == std::vector<int>{6, 12});
    CHECK(cfg.metrics == std::vector<std::string>{"mse", "smape"});
    CHECK(cfg.trials == 3);
    CHECK(cfg.top_k == 2);
    CHECK(cfg.eval_fraction == 0.25);
    REQUIRE(cfg.synthetic.size() == 2);
    CHECK(cfg.synthetic[0].period == 12);
    CHECK(cfg.synthetic[1].kind == FamilyKind::ar1);
    CHECK(cfg.synthetic[1].channels == 2);

    const BenchConfig def = parse_bench_config("");
    CHECK(def.look_back == 36);
    CHECK(def.horizons == std::vector<int>{6, 8, 14, 18, 24, 36, 48});
    CHECK(def.trials == 5);

    CHECK_THROWS(parse_bench_config("trials = 0"));
    CHECK_THROWS(parse_bench_config("horizons = []"));
    CHECK_THROWS_WITH(parse_bench_config("colour = red"), doctest::Contains("unknown key"));
    CHECK_THROWS(parse_bench_config("look_back"));
    CHECK_THROWS(parse_bench_config("trials = many"));
}

TEST_CASE("oracle baselines on a noiseless sine") {
    BenchConfig cfg;
    cfg.look_back = 36;
    cfg.horizons = {6, 24};
    cfg.trials = 2;
    cfg.season_period = 12;
    auto s = family(FamilyKind::sine, 12, 0.0, 600, 3);
    s.amplitude = 2.0;
    const BenchReport rep = run_benchmark(cfg, last_only_zoo(36), {generate_synthetic(s)});
    std::map<std::pair<std::string, int>, MethodScore> by;
    for (const auto& m : rep.table) by[{m.method, m.horizon}] = m;
    for (int H : cfg.horizons) {
        CHECK(by[{"seasonal_naive", H}].mse < 1e-20);
        CHECK(by[{"seqfusion", H}].mse == by[{"last", H}].mse);
        CHECK(by[{"seqfusion", H}].smape == by[{"last", H}].smape);
        CHECK(by[{"last", H}].windows > 0);
    }
}

TEST_CASE("evaluation windows stay in the tail and do not overlap") {
    BenchConfig cfg;
    cfg.horizons = {8, 36};
    cfg.trials = 3;
    const Dataset ds = generate_synthetic(family(FamilyKind::sawtooth, 18, 0.1, 1000, 4));
    const BenchReport rep = run_benchmark(cfg, last_only_zoo(36), {ds});
    std::map<std::tuple<int, int>, std::vector<Eigen::Index>> starts;
    for (const auto& w : rep.windows) {
        CHECK(w.window_start >= 800);
        CHECK(w.window_start + 36 + w.horizon <= 1000);
        if (w.method == "last") starts[{w.trial, w.horizon}].push_back(w.window_start);
    }
    for (const auto& [key, v] : starts) {
        for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] - v[i - 1] >= 36 + std::get<1>(key));
    }
}

TEST_CASE("short tails skip horizons with a warning") {
    BenchConfig cfg;
    cfg.horizons = {6, 48};
    cfg.trials = 1;
    const Dataset ds = generate_synthetic(family(FamilyKind::sine, 12, 0.1, 300, 5));
    const BenchReport rep = run_benchmark(cfg, last_only_zoo(36), {ds});
    REQUIRE(rep.warnings.size() == 1);
    CHECK(rep.warnings[0].find("48") != std::string::npos);
    for (const auto& m : rep.table) CHECK(m.horizon == 6);
}

TEST_CASE("report files reproduce their totals and are deterministic") {
    BenchConfig cfg;
    cfg.horizons = {6, 14, 24};
    cfg.trials = 3;
    cfg.seed = 9;
    auto ar = family(FamilyKind::ar1, 12, 0.3, 1500, 6);
    ar.channels = 2;
    const std::vector<Dataset> ds{generate_synthetic(family(FamilyKind::sine, 12, 0.2, 1200, 5)), generate_synthetic(ar)};
    const Zoo zoo = last_only_zoo(36);
    const BenchReport rep = run_benchmark(cfg, zoo, ds);

    const fs::path d1 = fs::temp_directory_path() / "seqfusion_bench_a";
    const fs::path d2 = fs::temp_directory_path() / "seqfusion_bench_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    write_report(rep, d1);
    write_report(run_benchmark(cfg, zoo, ds), d2);
    for (const char* f : {"table.csv", "summary.csv", "windows.csv", "zoo_distribution.csv", "report.json"}) {
        CHECK(read_file(d1 / f) == read_file(d2 / f));
    }

    std::map<std::tuple<std::string, std::string, int>, std::pair<double, int>> recomputed;
    for (const auto& row : read_rows(d1 / "windows.csv")) {
        auto& r = recomputed[{row[0], row[3], std::stoi(row[2])}];
        r.first += std::stod(row[5]);
        ++r.second;
    }
    CHECK(recomputed.size() == rep.table.size());
    for (const auto& m : rep.table) {
        const auto& r = recomputed[{m.dataset, m.method, m.horizon}];
        CHECK(r.second == m.windows);
        CHECK(std::abs(r.first / r.second - m.mse) <= 1e-9 * std::max(1.0, m.mse));
    }
    for (const auto& s : rep.summary) {
        double mean = 0.0;
        int n = 0;
        for (const auto& m : rep.table) {
            if (m.dataset == s.dataset && m.method == s.method) {
                mean += m.mse;
                ++n;
            }
        }
        CHECK(s.mse == doctest::Approx(mean / n).epsilon(1e-12));
    }
    CHECK(std::any_of(rep.zoo_distribution.begin(), rep.zoo_distribution.end(),
                      [](const ZooScore& z) { return z.model_id == "last"; }));
}

TEST_CASE("look-back mismatch with the zoo is an error") {
    BenchConfig cfg;
    cfg.look_back = 24;
    CHECK_THROWS(run_benchmark(cfg, last_only_zoo(36), {generate_synthetic(family(FamilyKind::sine, 12, 0.1, 500, 1))}));
}

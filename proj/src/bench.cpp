#include "seqfusion/bench.hpp"

#include "seqfusion/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace seqfusion {

namespace fs = std::filesystem;

std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::sine: return "sine";
        case FamilyKind::sawtooth: return "sawtooth";
        case FamilyKind::trend_sine: return "trend_sine";
        case FamilyKind::random_walk: return "random_walk";
        case FamilyKind::ar1: return "ar1";
    }
    return "unknown";
}

FamilyKind parse_family(std::string_view s) {
    if (s == "sine") return FamilyKind::sine;
    if (s == "sawtooth") return FamilyKind::sawtooth;
    if (s == "trend_sine" || s == "trend-sine") return FamilyKind::trend_sine;
    if (s == "random_walk" || s == "random-walk") return FamilyKind::random_walk;
    if (s == "ar1") return FamilyKind::ar1;
    throw Error("unknown synthetic family '" + std::string(s) + "'");
}

void SyntheticFamilySpec::validate() const {
    if (period < 1) throw Error("period must be >= 1");
    if (!(noise_std >= 0.0)) throw Error("noise_std must be >= 0");
    if (length < 1 || channels < 1) throw Error("length and channels must be >= 1");
}

Dataset generate_synthetic(const SyntheticFamilySpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Matrix m(spec.length, spec.channels);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int c = 0; c < spec.channels; ++c) {
        Rng ch = rng.fork(static_cast<std::uint64_t>(c) + 1);
        const auto phase = static_cast<long>(ch.below(static_cast<std::uint64_t>(spec.period)));
        double state = 0.0;
        for (int t = 0; t < spec.length; ++t) {
            const double eps = spec.noise_std > 0.0 ? spec.noise_std * ch.normal() : 0.0;
            const long pos = (t + phase) % spec.period;
            double v = 0.0;
            switch (spec.kind) {
                case FamilyKind::sine:
                    v = spec.amplitude * std::sin(two_pi * static_cast<double>(pos) / spec.period) + eps;
                    break;
                case FamilyKind::sawtooth:
                    v = spec.amplitude * (static_cast<double>(pos) / spec.period) + eps;
                    break;
                case FamilyKind::trend_sine:
                    v = spec.amplitude * std::sin(two_pi * static_cast<double>(pos) / spec.period) + 0.01 * t + eps;
                    break;
                case FamilyKind::random_walk:
                    state += eps;
                    v = state;
                    break;
                case FamilyKind::ar1:
                    state = (t == 0 ? 0.0 : 0.9 * state) + eps;
                    v = state;
                    break;
            }
            m(t, c) = v;
        }
    }
    Dataset ds;
    ds.series = MultivariateSeries(std::move(m));
    ds.name = spec.name.empty() ? to_string(spec.kind) : spec.name;
    ds.granularity = "synthetic";
    return ds;
}

void BenchConfig::validate() const {
    if (look_back < 1) throw Error("look_back must be >= 1");
    if (horizons.empty()) throw Error("horizons must be nonempty");
    for (int h : horizons) {
        if (h < 1) throw Error("horizons must be >= 1");
    }
    if (trials < 1) throw Error("trials must be >= 1");
    if (top_k < 1) throw Error("top_k must be >= 1");
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw Error("eval_fraction must be in (0, 1)");
    for (const auto& m : metrics) {
        if (m != "mse" && m != "smape" && m != "mape") throw Error("unknown metric '" + m + "'");
    }
}

namespace {

std::string strip(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_list(std::string v) {
    v = strip(v);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw Error("config: unterminated list");
        v = v.substr(1, v.size() - 2);
    }
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = strip(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw Error("");
        return out;
    } catch (...) {
        throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw Error("");
        return out;
    } catch (...) {
        throw Error("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace

BenchConfig parse_bench_config(const std::string& text) {
    BenchConfig cfg;
    std::vector<std::string> families;
    int syn_length = 2000;
    int syn_channels = 1;
    double syn_noise = 0.1;
    double syn_amplitude = 1.0;
    std::istringstream in(text);
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty() || line.front() == '[') continue;  // blank lines and table headers
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(row) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key == "look_back") cfg.look_back = to_int(key, value);
        else if (key == "horizons") {
            cfg.horizons.clear();
            for (const auto& h : split_list(value)) cfg.horizons.push_back(to_int(key, h));
        } else if (key == "metrics") cfg.metrics = split_list(value);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
        else if (key == "trials") cfg.trials = to_int(key, value);
        else if (key == "top_k") cfg.top_k = to_int(key, value);
        else if (key == "season_period") cfg.season_period = to_int(key, value);
        else if (key == "eval_fraction") cfg.eval_fraction = to_double(key, value);
        else if (key == "datasets") cfg.dataset_paths = split_list(value);
        else if (key == "synthetic") families = split_list(value);
        else if (key == "synthetic_length") syn_length = to_int(key, value);
        else if (key == "synthetic_channels") syn_channels = to_int(key, value);
        else if (key == "synthetic_noise") syn_noise = to_double(key, value);
        else if (key == "synthetic_amplitude") syn_amplitude = to_double(key, value);
        else throw Error("config line " + std::to_string(row) + ": unknown key '" + key + "'");
    }
    for (std::size_t i = 0; i < families.size(); ++i) {
        SyntheticFamilySpec s;
        const auto colon = families[i].find(':');
        s.kind = parse_family(families[i].substr(0, colon));
        if (colon != std::string::npos) s.period = to_int("synthetic", families[i].substr(colon + 1));
        s.length = syn_length;
        s.channels = syn_channels;
        s.noise_std = syn_noise;
        s.amplitude = syn_amplitude;
        s.seed = cfg.seed + 1000 + i;
        s.name = to_string(s.kind) + (colon != std::string::npos ? "_p" + std::to_string(s.period) : "");
        s.validate();
        cfg.synthetic.push_back(s);
    }
    cfg.validate();
    return cfg;
}

BenchConfig load_bench_config(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_bench_config(buf.str());
}

std::vector<Dataset> bench_datasets(const BenchConfig& cfg) {
    std::vector<Dataset> out;
    for (const auto& p : cfg.dataset_paths) out.push_back(load_csv(p));
    for (const auto& s : cfg.synthetic) out.push_back(generate_synthetic(s));
    return out;
}

namespace {

struct Accum {
    double mse = 0.0;
    double smape = 0.0;
    double mape = 0.0;
    int n = 0;
    int n_mape = 0;
    std::map<int, std::pair<double, int>> per_trial_mse;
};

double safe_mape(const Matrix& truth, const Matrix& pred) {
    try {
        return mape(truth, pred);
    } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

BenchReport run_benchmark(const BenchConfig& cfg, const Zoo& zoo, const std::vector<Dataset>& datasets) {
    cfg.validate();
    if (zoo.extractor().dims.window_len != cfg.look_back) {
        throw Error("zoo look-back " + std::to_string(zoo.extractor().dims.window_len) +
                    " does not match config look_back " + std::to_string(cfg.look_back));
    }
    BenchReport rep;
    const std::vector<std::string> methods = {"seqfusion", "last", "mean", "seasonal_naive"};
    const int T = cfg.look_back;

    for (const auto& ds : datasets) {
        const Eigen::Index len = ds.series.length();
        const auto tail_start = static_cast<Eigen::Index>(std::floor((1.0 - cfg.eval_fraction) * static_cast<double>(len)));
        const Eigen::Index tail_len = len - tail_start;
        std::map<std::pair<int, std::string>, Accum> acc;       // (horizon, method)
        std::map<std::pair<int, std::size_t>, std::pair<double, int>> zoo_acc;  // (horizon, model)
        std::vector<int> used_horizons;

        for (int H : cfg.horizons) {
            const Eigen::Index span = T + H;
            if (tail_len < span) {
                rep.warnings.push_back("dataset '" + ds.name + "': horizon " + std::to_string(H) +
                                       " skipped, evaluation tail of " + std::to_string(tail_len) +
                                       " points is shorter than " + std::to_string(span));
                continue;
            }
            used_horizons.push_back(H);
            std::vector<Forecaster> baselines;
            for (auto arch : {Architecture::last, Architecture::mean, Architecture::seasonal_naive}) {
                ForecasterSpec s;
                s.architecture = arch;
                s.input_len = T;
                s.horizon = H;
                s.season_period = std::min(cfg.season_period, T);
                baselines.push_back(Forecaster::baseline(s));
            }
            FusionConfig fc;
            fc.horizon = H;
            fc.top_k = std::min<int>(cfg.top_k, static_cast<int>(zoo.size()));

            for (int trial = 0; trial < cfg.trials; ++trial) {
                Rng rng(cfg.seed ^ (0xA5A5ULL * static_cast<std::uint64_t>(trial + 1)) ^ (static_cast<std::uint64_t>(H) << 32));
                const Eigen::Index max_offset = std::min<Eigen::Index>(span - 1, tail_len - span);
                const auto offset = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(max_offset + 1)));
                for (Eigen::Index s = tail_start + offset; s + span <= len; s += span) {
                    const MultivariateSeries history(ds.series.values.middleRows(s, T));
                    const Matrix truth = ds.series.values.middleRows(s + T, H);
                    std::vector<Matrix> preds;
                    preds.push_back(forecast_multivariate(zoo, history, fc).forecast.values);
                    for (const auto& b : baselines) {
                        Matrix p(H, ds.series.channels());
                        for (Eigen::Index c = 0; c < ds.series.channels(); ++c) {
                            auto [xn, st] = normalize(history.channel(c));
                            p.col(c) = denormalize(b.forecast(xn), st);
                        }
                        preds.push_back(std::move(p));
                    }
                    for (std::size_t m = 0; m < methods.size(); ++m) {
                        WindowResult w{ds.name, trial, H, methods[m], s, mse(truth, preds[m]), smape(truth, preds[m]),
                                       safe_mape(truth, preds[m])};
                        auto& a = acc[{H, methods[m]}];
                        a.mse += w.mse;
                        a.smape += w.smape;
                        if (std::isfinite(w.mape)) {
                            a.mape += w.mape;
                            ++a.n_mape;
                        }
                        ++a.n;
                        auto& pt = a.per_trial_mse[trial];
                        pt.first += w.mse;
                        ++pt.second;
                        rep.windows.push_back(std::move(w));
                    }
                    // every zoo model alone
                    for (std::size_t i = 0; i < zoo.size(); ++i) {
                        FusionConfig single = fc;
                        single.top_k = 1;
                        single.forced_model_ids.assign(static_cast<std::size_t>(ds.series.channels()), zoo.entries()[i].model_id);
                        const Matrix p = forecast_multivariate(zoo, history, single).forecast.values;
                        auto& z = zoo_acc[{H, i}];
                        z.first += mse(truth, p);
                        ++z.second;
                    }
                }
            }
        }

        std::map<std::string, std::vector<MethodScore>> per_method;
        for (int H : used_horizons) {
            for (const auto& m : methods) {
                const auto it = acc.find({H, m});
                if (it == acc.end() || it->second.n == 0) continue;
                const Accum& a = it->second;
                MethodScore sc{ds.name, m, H, a.mse / a.n, 0.0, a.smape / a.n,
                               a.n_mape > 0 ? a.mape / a.n_mape : std::numeric_limits<double>::quiet_NaN(), a.n};
                std::vector<double> trial_means;
                for (const auto& [t, v] : a.per_trial_mse) trial_means.push_back(v.first / v.second);
                double mu = 0.0;
                for (double v : trial_means) mu += v;
                mu /= static_cast<double>(trial_means.size());
                double var = 0.0;
                for (double v : trial_means) var += (v - mu) * (v - mu);
                sc.mse_trial_std = trial_means.size() > 1 ? std::sqrt(var / static_cast<double>(trial_means.size() - 1)) : 0.0;
                rep.table.push_back(sc);
                per_method[m].push_back(sc);
            }
            for (std::size_t i = 0; i < zoo.size(); ++i) {
                const auto it = zoo_acc.find({H, i});
                if (it == zoo_acc.end()) continue;
                rep.zoo_distribution.push_back({ds.name, zoo.entries()[i].model_id, H, it->second.first / it->second.second});
            }
        }
        for (const auto& m : methods) {
            const auto it = per_method.find(m);
            if (it == per_method.end()) continue;
            MethodScore s{ds.name, m, 0, 0.0, 0.0, 0.0, 0.0, 0};
            for (const auto& r : it->second) {
                s.mse += r.mse;
                s.mse_trial_std += r.mse_trial_std;
                s.smape += r.smape;
                s.mape += r.mape;
                s.windows += r.windows;
            }
            const auto n = static_cast<double>(it->second.size());
            s.mse /= n;
            s.mse_trial_std /= n;
            s.smape /= n;
            s.mape /= n;
            rep.summary.push_back(s);
        }
    }
    return rep;
}

std::uintmax_t directory_bytes(const fs::path& dir) {
    std::uintmax_t total = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) total += e.file_size();
    }
    return total;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

void write_scores(const fs::path& path, const std::vector<MethodScore>& rows, bool with_horizon) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << "dataset,method," << (with_horizon ? "horizon," : "") << "mse,mse_trial_std,smape,mape,windows\n";
    for (const auto& r : rows) {
        f << r.dataset << ',' << r.method << ',';
        if (with_horizon) f << r.horizon << ',';
        f << num(r.mse) << ',' << num(r.mse_trial_std) << ',' << num(r.smape) << ',' << num(r.mape) << ',' << r.windows << '\n';
    }
}

nlohmann::json score_json(const MethodScore& r) {
    auto opt = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"dataset", r.dataset}, {"method", r.method}, {"horizon", r.horizon}, {"mse", opt(r.mse)},
            {"mse_trial_std", opt(r.mse_trial_std)}, {"smape", opt(r.smape)}, {"mape", opt(r.mape)},
            {"windows", r.windows}};
}

}  // namespace

std::string report_json(const BenchReport& report) {
    nlohmann::json j;
    j["table"] = nlohmann::json::array();
    for (const auto& r : report.table) j["table"].push_back(score_json(r));
    j["summary"] = nlohmann::json::array();
    for (const auto& r : report.summary) j["summary"].push_back(score_json(r));
    j["warnings"] = report.warnings;
    if (report.zoo_bytes) j["zoo_bytes"] = *report.zoo_bytes;
    return j.dump(1) + "\n";
}

void write_report(const BenchReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    write_scores(dir / "table.csv", report.table, true);
    write_scores(dir / "summary.csv", report.summary, false);
    {
        std::ofstream f(dir / "windows.csv", std::ios::binary);
        f << "dataset,trial,horizon,method,window_start,mse,smape,mape\n";
        for (const auto& w : report.windows) {
            f << w.dataset << ',' << w.trial << ',' << w.horizon << ',' << w.method << ',' << w.window_start << ','
              << num(w.mse) << ',' << num(w.smape) << ',' << num(w.mape) << '\n';
        }
    }
    {
        std::ofstream f(dir / "zoo_distribution.csv", std::ios::binary);
        f << "dataset,model_id,horizon,mse\n";
        for (const auto& z : report.zoo_distribution) {
            f << z.dataset << ',' << z.model_id << ',' << z.horizon << ',' << num(z.mse) << '\n';
        }
    }
    std::ofstream f(dir / "report.json", std::ios::binary);
    f << report_json(report);
}

}  // namespace seqfusion

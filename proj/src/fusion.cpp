#include "seqfusion/fusion.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace seqfusion {

SelectionResult rank_models(const std::vector<ModelEntry>& entries, const Representation& mu, int top_k) {
    if (entries.empty()) throw Error("empty zoo");
    if (top_k < 1 || static_cast<std::size_t>(top_k) > entries.size()) {
        throw Error("top_k must be in [1, " + std::to_string(entries.size()) + "]");
    }
    SelectionResult out;
    out.ranked.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].representation.size() != mu.size()) throw Error("representation dimension mismatch");
        out.ranked.push_back({entries[i].model_id, i, cosine(entries[i].representation, mu)});
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    for (int k = 0; k < top_k; ++k) out.chosen.push_back(out.ranked[static_cast<std::size_t>(k)].index);
    return out;
}

SelectionResult match(const Zoo& zoo, const TimeSeries& raw_window, int top_k) {
    const int L = zoo.extractor().dims.window_len;
    if (raw_window.size() != L) {
        throw Error("look-back length " + std::to_string(raw_window.size()) + " does not match expected T=" +
                    std::to_string(L));
    }
    const Representation mu = encode(zoo.extractor(), normalize(raw_window).first);
    return rank_models(zoo.entries(), mu, top_k);
}

TimeSeries sequential_forecast(std::span<const Predictor* const> models, const TimeSeries& window, int H) {
    if (models.empty()) throw Error("sequential_forecast: no models");
    if (H < 1) throw Error("horizon must be >= 1");
    const int T = models.front()->input_len();
    const int h = models.front()->horizon();
    for (const Predictor* m : models) {
        if (m->horizon() != h) throw Error("incompatible horizons");
        if (m->input_len() != T) throw Error("incompatible input lengths");
    }
    if (window.size() != T) {
        throw Error("window length " + std::to_string(window.size()) + " does not match expected T=" + std::to_string(T));
    }
    const int blocks = (H + h - 1) / h;
    TimeSeries history = window;
    TimeSeries out(static_cast<Eigen::Index>(blocks) * h);
    for (int b = 0; b < blocks; ++b) {
        TimeSeries block = TimeSeries::Zero(h);
        for (const Predictor* m : models) {
            TimeSeries y = m->predict(history);
            if (y.size() != h) throw Error("model returned a block of the wrong length");
            block += y;
        }
        block /= static_cast<double>(models.size());
        out.segment(static_cast<Eigen::Index>(b) * h, h) = block;
        TimeSeries joined(history.size() + h);
        joined << history, block;
        history = trim_to_last(joined, T);
    }
    return trim_to_first(out, H);
}

FusionResult forecast_multivariate(const Zoo& zoo, const MultivariateSeries& history, const FusionConfig& cfg) {
    const int T = zoo.extractor().dims.window_len;
    if (history.length() < T) {
        throw Error("history length " + std::to_string(history.length()) + " is shorter than expected T=" +
                    std::to_string(T));
    }
    if (cfg.horizon < 1) throw Error("horizon must be >= 1");
    if (!cfg.forced_model_ids.empty() &&
        static_cast<Eigen::Index>(cfg.forced_model_ids.size()) != history.channels()) {
        throw Error("forced model list must have one entry per channel");
    }
    for (const auto& e : zoo.entries()) {
        if (e.input_len != T) {
            throw Error("zoo entry '" + e.model_id + "' expects T=" + std::to_string(e.input_len) +
                        " but the extractor uses T=" + std::to_string(T));
        }
    }
    const Eigen::Index C = history.channels();
    FusionResult res;
    res.forecast.values.resize(cfg.horizon, C);
    res.forecast.channel_names = history.channel_names;
    res.selections.resize(static_cast<std::size_t>(C));
    res.stats.resize(static_cast<std::size_t>(C));
    for (Eigen::Index c = 0; c < C; ++c) {
        const TimeSeries raw = trim_to_last(history.channel(c), T);
        auto [x_norm, st] = normalize(raw);
        SelectionResult sel = rank_models(zoo.entries(), encode(zoo.extractor(), x_norm), cfg.top_k);
        if (!cfg.forced_model_ids.empty() && !cfg.forced_model_ids[static_cast<std::size_t>(c)].empty()) {
            const int idx = zoo.index_of(cfg.forced_model_ids[static_cast<std::size_t>(c)]);
            if (idx < 0) throw Error("unknown forced model '" + cfg.forced_model_ids[static_cast<std::size_t>(c)] + "'");
            sel.chosen = {static_cast<std::size_t>(idx)};
        }
        std::vector<std::shared_ptr<const Predictor>> owned;
        std::vector<const Predictor*> models;
        for (auto i : sel.chosen) {
            owned.push_back(zoo.model(i));
            models.push_back(owned.back().get());
        }
        res.forecast.values.col(c) = denormalize(sequential_forecast(models, x_norm, cfg.horizon), st);
        res.selections[static_cast<std::size_t>(c)] = std::move(sel);
        res.stats[static_cast<std::size_t>(c)] = st;
    }
    return res;
}

void write_forecast_csv(const std::filesystem::path& path, const MultivariateSeries& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "channel,step,value\n";
    for (Eigen::Index c = 0; c < f.channels(); ++c) {
        for (Eigen::Index t = 0; t < f.length(); ++t) {
            out << c << ',' << t << ',' << format_double(f.values(t, c)) << '\n';
        }
    }
}

MultivariateSeries read_forecast_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("empty forecast file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "channel,step,value") throw Error("forecast file must start with 'channel,step,value'");
    std::map<std::pair<long, long>, double> cells;
    long max_c = -1;
    long max_t = -1;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        long c = 0;
        long t = 0;
        double v = 0.0;
        char s1 = 0;
        char s2 = 0;
        if (!(ss >> c >> s1 >> t >> s2 >> v) || s1 != ',' || s2 != ',' || c < 0 || t < 0 || !std::isfinite(v)) {
            throw Error("forecast file row " + std::to_string(row) + ": malformed");
        }
        cells[{c, t}] = v;
        max_c = std::max(max_c, c);
        max_t = std::max(max_t, t);
    }
    if (cells.empty()) throw Error("forecast file has no rows");
    if (static_cast<long>(cells.size()) != (max_c + 1) * (max_t + 1)) throw Error("forecast file is not rectangular");
    Matrix m(max_t + 1, max_c + 1);
    for (const auto& [key, v] : cells) m(key.second, key.first) = v;
    return MultivariateSeries(std::move(m));
}

std::string provenance_json(const FusionResult& result, int top_k) {
    nlohmann::json channels = nlohmann::json::array();
    for (std::size_t c = 0; c < result.selections.size(); ++c) {
        const auto& sel = result.selections[c];
        nlohmann::json ranked = nlohmann::json::array();
        for (const auto& cand : sel.ranked) ranked.push_back({{"model_id", cand.model_id}, {"score", cand.score}});
        nlohmann::json chosen = nlohmann::json::array();
        for (auto i : sel.chosen) {
            for (const auto& cand : sel.ranked) {
                if (cand.index == i) chosen.push_back(cand.model_id);
            }
        }
        channels.push_back({{"channel", c},
                            {"ranked", std::move(ranked)},
                            {"chosen", std::move(chosen)},
                            {"k", top_k},
                            {"norm_stats", {{"mean", result.stats[c].mean}, {"std", result.stats[c].std}}}});
    }
    nlohmann::json j;
    j["channels"] = std::move(channels);
    return j.dump(1) + "\n";
}

}  // namespace seqfusion

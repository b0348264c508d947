#include "seqfusion/bench.hpp"
#include "seqfusion/core.hpp"
#include "seqfusion/extractor.hpp"
#include "seqfusion/forecasters.hpp"
#include "seqfusion/fusion.hpp"
#include "seqfusion/transfer.hpp"
#include "seqfusion/zoo.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seqfusion;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out;
    bool json = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
    cmd->add_option("--seed", c.seed, "RNG seed");
    auto* o = cmd->add_option("--out", c.out, "output path");
    if (out_required) o->required();
    cmd->add_flag("--json", c.json, "print a JSON summary to stdout");
}

void report(const Common& c, const json& summary, const std::string& human) {
    if (c.json) {
        std::cout << summary.dump(2) << '\n';
    } else {
        std::cout << human << '\n';
    }
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << text;
    if (!f) throw Error("write failed for '" + p.string() + "'");
}

std::vector<Dataset> load_datasets(const std::vector<std::string>& paths) {
    std::vector<Dataset> out;
    for (const auto& p : paths) out.push_back(load_csv(p));
    return out;
}

json losses_json(const std::vector<double>& v) {
    json j = json::array();
    for (double x : v) j.push_back(x);
    return j;
}

MultivariateSeries load_any_series(const fs::path& p) {
    const std::string text = read_file(p);
    if (text.rfind("channel,step,value", 0) == 0) return read_forecast_csv(p);
    return parse_csv(text, dataset_name_from_path(p), csv_has_header(text)).series;
}

json metric_or_null(const std::function<double()>& f) {
    try {
        return f();
    } catch (const Error&) {
        return nullptr;
    }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    Common c;
    std::string kind = "sine";
    SyntheticFamilySpec spec;
};

int run_synth(SynthArgs& a) {
    a.spec.kind = parse_family(a.kind);
    a.spec.seed = a.c.seed;
    if (a.spec.name.empty()) a.spec.name = dataset_name_from_path(a.c.out);
    const Dataset ds = generate_synthetic(a.spec);
    ensure_parent(a.c.out);
    write_csv(a.c.out, ds.series);
    report(a.c,
           {{"out", a.c.out}, {"kind", a.kind}, {"length", ds.series.length()}, {"channels", ds.series.channels()}},
           "wrote " + a.c.out);
    return 0;
}

struct PtmArgs {
    Common c;
    std::string data;
    std::string arch = "linear";
    ForecasterSpec spec;
    TrainConfig train;
};

int run_train_ptm(PtmArgs& a) {
    a.spec.architecture = parse_architecture(a.arch);
    a.spec.validate();
    const Dataset ds = load_csv(a.data);
    json summary{{"out", a.c.out}, {"source_dataset", ds.name}, {"architecture", to_string(a.spec.architecture)}};
    ensure_parent(a.c.out);
    if (is_trainable(a.spec.architecture)) {
        a.train.seed = a.c.seed;
        auto res = train(a.spec, ds, a.train);
        save_forecaster_file(res.model, a.c.out);
        summary["epoch_losses"] = losses_json(res.epoch_losses);
    } else {
        const Forecaster base = Forecaster::baseline(a.spec);
        save_forecaster_file(Forecaster(a.spec, base.weights(), ds.name), a.c.out);
        summary["epoch_losses"] = json::array();
    }
    report(a.c, summary, "wrote " + a.c.out);
    return 0;
}

struct TmArgs {
    Common c;
    std::vector<std::string> datasets;
    std::string arch = "linear";
    ForecasterSpec spec;
    TrainConfig train;
    double holdout = 0.2;
};

int run_transfer_matrix(TmArgs& a) {
    a.spec.architecture = parse_architecture(a.arch);
    a.train.seed = a.c.seed;
    const auto ds = load_datasets(a.datasets);
    const TransferMatrix tm = compute_transfer_matrix(ds, a.spec, a.train, a.holdout);
    save_transfer_matrix_file(tm, a.c.out);
    report(a.c, json::parse(save_transfer_matrix(tm)), "wrote " + a.c.out);
    return 0;
}

struct ExtractorArgs {
    Common c;
    std::vector<std::string> datasets;
    std::string tm_path;
    ExtractorTrainConfig cfg;
    MaskSpec mask;
    ExtractorDims dims;
};

int run_train_extractor(ExtractorArgs& a) {
    a.cfg.seed = a.c.seed;
    a.mask.seed = a.c.seed;
    const auto ds = load_datasets(a.datasets);
    const TransferMatrix tm = load_transfer_matrix_file(a.tm_path);
    const ExtractorParams p = train_extractor(ds, tm, a.cfg, a.mask, a.dims);
    ensure_parent(a.c.out);
    save_extractor_file(p, a.c.out);
    json log = json::array();
    for (const auto& e : p.training_log) {
        log.push_back({{"epoch", e.epoch},
                       {"reconstruction", e.reconstruction},
                       {"transferability", e.transferability},
                       {"constraint", e.constraint},
                       {"total", e.total}});
    }
    const std::string last = p.training_log.empty() ? "" : " (final loss " + format_double(p.training_log.back().total) + ")";
    report(a.c, {{"out", a.c.out}, {"training_log", log}}, "wrote " + a.c.out + last);
    return 0;
}

struct ZooArgs {
    Common c;
    std::vector<std::string> models;
    std::vector<std::string> sources;
    std::string extractor;
    BuildZooOptions opts;
};

int run_build_zoo(ZooArgs& a) {
    a.opts.seed = a.c.seed;
    std::vector<fs::path> models(a.models.begin(), a.models.end());
    const auto ds = load_datasets(a.sources);
    const ZooManifest m = build_zoo(models, a.extractor, ds, a.opts, a.c.out);
    json ids = json::array();
    for (const auto& e : m.entries) ids.push_back(e.model_id);
    report(a.c, {{"out", a.c.out}, {"models", ids}},
           "wrote zoo with " + std::to_string(m.entries.size()) + " models to " + a.c.out);
    return 0;
}

struct EmbedArgs {
    Common c;
    std::string zoo;
    std::vector<std::string> inputs;
    int pca = 2;
};

int run_embed(EmbedArgs& a) {
    const Zoo zoo = load_zoo(a.zoo);
    std::vector<Representation> reprs;
    std::vector<std::string> labels;
    std::vector<std::string> kinds;
    for (const auto& e : zoo.entries()) {
        reprs.push_back(e.representation);
        labels.push_back(e.model_id);
        kinds.push_back("ptm");
    }
    const Eigen::Index L = zoo.extractor().dims.window_len;
    for (const auto& path : a.inputs) {
        const Dataset ds = load_csv(path);
        for (Eigen::Index c = 0; c < ds.series.channels(); ++c) {
            const TimeSeries w = trim_to_last(ds.series.channel(c), L);
            reprs.push_back(encode(zoo.extractor(), normalize(w).first));
            const auto& names = ds.series.channel_names;
            labels.push_back(ds.name + ":" + (names.empty() ? "c" + std::to_string(c) : names[static_cast<std::size_t>(c)]));
            kinds.push_back("variate");
        }
    }
    const PcaResult pca = pca_project(reprs, a.pca, a.c.seed);
    ensure_parent(a.c.out);
    std::ofstream f(a.c.out, std::ios::binary);
    if (!f) throw Error("cannot write '" + a.c.out + "'");
    f << "label,kind";
    for (int k = 1; k <= a.pca; ++k) f << ",pc" << k;
    f << '\n';
    for (std::size_t i = 0; i < reprs.size(); ++i) {
        f << labels[i] << ',' << kinds[i];
        for (int k = 0; k < a.pca; ++k) f << ',' << format_double(pca.projections(static_cast<Eigen::Index>(i), k));
        f << '\n';
    }
    json ev = json::array();
    for (Eigen::Index k = 0; k < pca.explained_variance.size(); ++k) ev.push_back(pca.explained_variance(k));
    report(a.c, {{"out", a.c.out}, {"points", reprs.size()}, {"explained_variance", ev}}, "wrote " + a.c.out);
    return 0;
}

struct ForecastArgs {
    Common c;
    std::string zoo;
    std::string input;
    FusionConfig cfg;
};

int run_forecast(ForecastArgs& a) {
    const Zoo zoo = load_zoo(a.zoo);
    const Dataset ds = load_csv(a.input);
    const FusionResult res = forecast_multivariate(zoo, ds.series, a.cfg);
    const fs::path out = a.c.out;
    ensure_parent(out);
    write_forecast_csv(out, res.forecast);
    fs::path side = out;
    side.replace_extension(".provenance.json");
    const std::string prov = provenance_json(res, a.cfg.top_k);
    write_text(side, prov);
    report(a.c, {{"out", out.string()}, {"provenance", side.string()}, {"channels", json::parse(prov)}},
           "wrote " + out.string() + " and " + side.string());
    return 0;
}

struct EvaluateArgs {
    Common c;
    std::string pred;
    std::string truth;
};

int run_evaluate(EvaluateArgs& a) {
    const MultivariateSeries p = load_any_series(a.pred);
    const MultivariateSeries t = load_any_series(a.truth);
    if (p.length() != t.length() || p.channels() != t.channels()) {
        throw Error("shape mismatch: prediction is " + std::to_string(p.length()) + "x" + std::to_string(p.channels()) +
                    ", truth is " + std::to_string(t.length()) + "x" + std::to_string(t.channels()));
    }
    const json m{{"mse", mse(t, p)},
                 {"smape", smape(t, p)},
                 {"mape", metric_or_null([&] { return mape(t, p); })}};
    if (!a.c.out.empty()) write_text(a.c.out, m.dump(2) + "\n");
    std::string human = "mse " + format_double(m["mse"].get<double>()) + "  smape " + format_double(m["smape"].get<double>()) +
                        "  mape " + (m["mape"].is_null() ? std::string("undefined") : format_double(m["mape"].get<double>()));
    report(a.c, m, human);
    return 0;
}

struct BenchArgs {
    Common c;
    std::string config;
    std::string zoo;
    bool seed_given = false;
};

int run_bench(BenchArgs& a) {
    BenchConfig cfg = load_bench_config(a.config);
    if (a.seed_given) cfg.seed = a.c.seed;
    const Zoo zoo = load_zoo(a.zoo);
    const auto ds = bench_datasets(cfg);
    BenchReport rep = run_benchmark(cfg, zoo, ds);
    rep.zoo_bytes = directory_bytes(a.zoo);
    fs::create_directories(a.c.out);
    write_report(rep, a.c.out);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
    report(a.c, json::parse(report_json(rep))["summary"], "wrote report to " + a.c.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seqfusion: zero-shot forecasting with a zoo of pre-trained models"};
    app.require_subcommand(1);
    std::function<int()> action;

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    add_common(s, synth.c);
    s->add_option("--kind", synth.kind, "sine|sawtooth|trend_sine|random_walk|ar1");
    s->add_option("--period", synth.spec.period);
    s->add_option("--amplitude", synth.spec.amplitude);
    s->add_option("--noise", synth.spec.noise_std);
    s->add_option("--length", synth.spec.length);
    s->add_option("--channels", synth.spec.channels);
    s->add_option("--name", synth.spec.name);
    s->callback([&] { action = [&] { return run_synth(synth); }; });

    PtmArgs ptm;
    auto* t = app.add_subcommand("train-ptm", "train one forecaster on a dataset");
    add_common(t, ptm.c);
    t->add_option("--data", ptm.data)->required();
    t->add_option("--arch", ptm.arch, "linear|patch-mlp|last|mean|seasonal-naive");
    t->add_option("--input-len", ptm.spec.input_len);
    t->add_option("--horizon", ptm.spec.horizon);
    t->add_option("--patch-len", ptm.spec.patch_len);
    t->add_option("--hidden", ptm.spec.hidden_dim);
    t->add_option("--season-period", ptm.spec.season_period);
    t->add_option("--epochs", ptm.train.epochs);
    t->add_option("--lr", ptm.train.learning_rate);
    t->add_option("--batch-size", ptm.train.batch_size);
    t->add_option("--stride", ptm.train.stride);
    t->callback([&] { action = [&] { return run_train_ptm(ptm); }; });

    TmArgs tm;
    auto* m = app.add_subcommand("transfer-matrix", "cross-dataset 1 - MSE transfer scores");
    add_common(m, tm.c);
    m->add_option("--datasets", tm.datasets)->required()->delimiter(',');
    m->add_option("--arch", tm.arch);
    m->add_option("--input-len", tm.spec.input_len);
    m->add_option("--horizon", tm.spec.horizon);
    m->add_option("--epochs", tm.train.epochs);
    m->add_option("--lr", tm.train.learning_rate);
    m->add_option("--batch-size", tm.train.batch_size);
    m->add_option("--holdout", tm.holdout);
    m->callback([&] { action = [&] { return run_transfer_matrix(tm); }; });

    ExtractorArgs ex;
    auto* e = app.add_subcommand("train-extractor", "train the representation extractor");
    add_common(e, ex.c);
    e->add_option("--datasets", ex.datasets)->required()->delimiter(',');
    e->add_option("--transfer-matrix", ex.tm_path)->required();
    e->add_option("--lambda", ex.cfg.lambda);
    e->add_option("--mask-ratio", ex.mask.mask_ratio);
    e->add_option("--views", ex.mask.num_views);
    e->add_option("--dim", ex.dims.dim);
    e->add_option("--hidden", ex.dims.hidden);
    e->add_option("--window-len", ex.dims.window_len);
    e->add_option("--epochs", ex.cfg.epochs);
    e->add_option("--lr", ex.cfg.learning_rate);
    e->add_option("--batch-size", ex.cfg.batch_size);
    e->add_option("--windows-per-dataset", ex.cfg.windows_per_dataset);
    e->callback([&] { action = [&] { return run_train_extractor(ex); }; });

    ZooArgs zoo;
    auto* z = app.add_subcommand("build-zoo", "assemble a zoo directory");
    add_common(z, zoo.c);
    z->add_option("--models", zoo.models)->required()->delimiter(',');
    z->add_option("--extractor", zoo.extractor)->required();
    z->add_option("--sources", zoo.sources, "source dataset CSVs named by the models")->required()->delimiter(',');
    z->add_option("--samples", zoo.opts.samples);
    z->callback([&] { action = [&] { return run_build_zoo(zoo); }; });

    EmbedArgs emb;
    auto* b = app.add_subcommand("embed", "PCA projection of PTM and variate representations");
    add_common(b, emb.c);
    b->add_option("--zoo", emb.zoo)->required();
    b->add_option("--input", emb.inputs, "CSV files whose variates are embedded")->delimiter(',');
    b->add_option("--pca", emb.pca)->check(CLI::Range(1, 3));
    b->callback([&] { action = [&] { return run_embed(emb); }; });

    ForecastArgs fc;
    auto* f = app.add_subcommand("forecast", "zero-shot forecast of a CSV history");
    add_common(f, fc.c);
    f->add_option("--zoo", fc.zoo)->required();
    f->add_option("--input", fc.input)->required();
    f->add_option("--horizon", fc.cfg.horizon)->required();
    f->add_option("--top-k", fc.cfg.top_k);
    f->add_option("--force", fc.cfg.forced_model_ids, "per-channel model ids, empty to match")->delimiter(',');
    f->callback([&] { action = [&] { return run_forecast(fc); }; });

    EvaluateArgs ev;
    auto* v = app.add_subcommand("evaluate", "metrics between prediction and truth files");
    add_common(v, ev.c, false);
    v->add_option("--pred", ev.pred)->required();
    v->add_option("--truth", ev.truth)->required();
    v->callback([&] { action = [&] { return run_evaluate(ev); }; });

    BenchArgs bench;
    auto* k = app.add_subcommand("benchmark", "run the evaluation harness");
    add_common(k, bench.c);
    k->add_option("--config", bench.config)->required();
    k->add_option("--zoo", bench.zoo)->required();
    k->callback([&] {
        bench.seed_given = k->count("--seed") > 0;
        action = [&] { return run_bench(bench); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }
    try {
        return action();
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
}

#include "seqfusion/forecasters.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <numeric>
#include <sstream>

namespace seqfusion {

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::linear: return "linear";
        case Architecture::patch_mlp: return "patch_mlp";
        case Architecture::last: return "last";
        case Architecture::mean: return "mean";
        case Architecture::seasonal_naive: return "seasonal_naive";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view s) {
    if (s == "linear") return Architecture::linear;
    if (s == "patch_mlp" || s == "patch-mlp") return Architecture::patch_mlp;
    if (s == "last") return Architecture::last;
    if (s == "mean") return Architecture::mean;
    if (s == "seasonal_naive" || s == "seasonal-naive") return Architecture::seasonal_naive;
    throw Error("unknown architecture '" + std::string(s) + "'");
}

bool is_trainable(Architecture a) { return a == Architecture::linear || a == Architecture::patch_mlp; }

void ForecasterSpec::validate() const {
    if (input_len < 1) throw Error("input_len must be >= 1");
    if (horizon < 1) throw Error("horizon must be >= 1");
    if (architecture == Architecture::patch_mlp && (patch_len < 1 || hidden_dim < 1)) {
        throw Error("patch_mlp needs patch_len >= 1 and hidden_dim >= 1");
    }
    if (architecture == Architecture::seasonal_naive && (season_period < 1 || season_period > input_len)) {
        throw Error("season_period must be in [1, input_len]");
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (stride < 1) throw Error("stride must be >= 1");
}

NamedTensors weight_layout(const ForecasterSpec& spec) {
    NamedTensors t;
    const int T = spec.input_len;
    const int h = spec.horizon;
    switch (spec.architecture) {
        case Architecture::linear:
            t.add_matrix("W", Matrix::Zero(h, T));
            t.add_vector("b", Vector::Zero(h));
            break;
        case Architecture::patch_mlp:
            t.add_matrix("P_embed", Matrix::Zero(spec.hidden_dim, spec.patch_len));
            t.add_vector("p_bias", Vector::Zero(spec.hidden_dim));
            t.add_matrix("W_out", Matrix::Zero(h, spec.hidden_dim * spec.num_patches()));
            t.add_vector("b_out", Vector::Zero(h));
            break;
        default:
            break;
    }
    return t;
}

namespace {

void fill_uniform(Matrix& m, double bound, Rng& rng) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
    }
}

}  // namespace

NamedTensors init_weights(const ForecasterSpec& spec, Rng& rng) {
    spec.validate();
    NamedTensors t = weight_layout(spec);
    if (spec.architecture == Architecture::linear) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.input_len));
        fill_uniform(t["W"], bound, rng);
        fill_uniform(t["b"], bound, rng);
    } else if (spec.architecture == Architecture::patch_mlp) {
        const double b1 = 1.0 / std::sqrt(static_cast<double>(spec.patch_len));
        const double b2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim * spec.num_patches()));
        fill_uniform(t["P_embed"], b1, rng);
        fill_uniform(t["p_bias"], b1, rng);
        fill_uniform(t["W_out"], b2, rng);
        fill_uniform(t["b_out"], b2, rng);
    }
    return t;
}

Forecaster::Forecaster(ForecasterSpec spec, NamedTensors weights, std::string source_dataset)
    : spec_(spec), weights_(std::move(weights)), source_dataset_(std::move(source_dataset)) {
    spec_.validate();
    const NamedTensors layout = weight_layout(spec_);
    if (layout.count() != weights_.count()) throw Error("weights do not match architecture " + to_string(spec_.architecture));
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& want = layout.at(i);
        const auto& got = weights_.at(i);
        if (want.name != got.name || want.value.rows() != got.value.rows() || want.value.cols() != got.value.cols()) {
            throw Error("tensor '" + got.name + "' does not match architecture " + to_string(spec_.architecture));
        }
    }
    if (!weights_.all_finite()) throw Error("weights contain non-finite values");
}

Forecaster Forecaster::baseline(const ForecasterSpec& spec) {
    if (is_trainable(spec.architecture)) throw Error("baseline() requires a parameter-free architecture");
    return Forecaster(spec, NamedTensors{}, to_string(spec.architecture));
}

namespace {

Matrix padded_inputs(const ForecasterSpec& spec, const Matrix& inputs) {
    const Eigen::Index padded = static_cast<Eigen::Index>(spec.num_patches()) * spec.patch_len;
    Matrix xp = Matrix::Zero(padded, inputs.cols());
    xp.topRows(inputs.rows()) = inputs;
    return xp;
}

}  // namespace

Matrix forward(const ForecasterSpec& spec, const NamedTensors& w, const Matrix& X) {
    if (X.rows() != spec.input_len) {
        throw Error("window length " + std::to_string(X.rows()) + " does not match input_len " +
                    std::to_string(spec.input_len));
    }
    const Eigen::Index T = spec.input_len;
    const Eigen::Index h = spec.horizon;
    const Eigen::Index B = X.cols();
    switch (spec.architecture) {
        case Architecture::linear:
            return (w["W"] * X).colwise() + w["b"].col(0);
        case Architecture::patch_mlp: {
            const Matrix xp = padded_inputs(spec, X);
            const Eigen::Index P = spec.num_patches();
            const Eigen::Index H = spec.hidden_dim;
            Matrix Z(H * P, B);
            for (Eigen::Index j = 0; j < P; ++j) {
                Z.middleRows(j * H, H) =
                    ((w["P_embed"] * xp.middleRows(j * spec.patch_len, spec.patch_len)).colwise() + w["p_bias"].col(0))
                        .cwiseMax(0.0);
            }
            return (w["W_out"] * Z).colwise() + w["b_out"].col(0);
        }
        case Architecture::last:
            return X.row(T - 1).replicate(h, 1);
        case Architecture::mean:
            return X.colwise().mean().replicate(h, 1);
        case Architecture::seasonal_naive: {
            Matrix out(h, B);
            const Eigen::Index p = spec.season_period;
            for (Eigen::Index i = 0; i < h; ++i) out.row(i) = X.row(T - p + (i % p));
            return out;
        }
    }
    throw Error("unknown architecture");
}

TimeSeries Forecaster::forecast(const TimeSeries& window) const {
    return forward(spec_, weights_, window).col(0);
}

Matrix Forecaster::forecast_batch(const Matrix& windows) const { return forward(spec_, weights_, windows); }

LossGrad loss_and_grad(const ForecasterSpec& spec, const NamedTensors& w, const Batch& batch) {
    if (!is_trainable(spec.architecture)) throw Error("loss_and_grad: architecture has no parameters");
    const Matrix& X = batch.inputs;
    const Matrix& Y = batch.targets;
    if (X.cols() != Y.cols() || Y.rows() != spec.horizon || X.rows() != spec.input_len || X.cols() == 0) {
        throw Error("loss_and_grad: inconsistent batch shapes");
    }
    const double n = static_cast<double>(Y.size());
    LossGrad out;
    out.grad = w.zeros_like();

    if (spec.architecture == Architecture::linear) {
        const Matrix R = ((w["W"] * X).colwise() + w["b"].col(0)) - Y;
        out.loss = R.squaredNorm() / n;
        const Matrix dY = (2.0 / n) * R;
        out.grad["W"] = dY * X.transpose();
        out.grad["b"] = dY.rowwise().sum();
        return out;
    }

    const Matrix xp = padded_inputs(spec, X);
    const Eigen::Index P = spec.num_patches();
    const Eigen::Index H = spec.hidden_dim;
    const Eigen::Index p = spec.patch_len;
    const Eigen::Index B = X.cols();
    Matrix A(H * P, B);
    for (Eigen::Index j = 0; j < P; ++j) {
        A.middleRows(j * H, H) = (w["P_embed"] * xp.middleRows(j * p, p)).colwise() + w["p_bias"].col(0);
    }
    const Matrix Z = A.cwiseMax(0.0);
    const Matrix R = ((w["W_out"] * Z).colwise() + w["b_out"].col(0)) - Y;
    out.loss = R.squaredNorm() / n;
    const Matrix dY = (2.0 / n) * R;
    out.grad["W_out"] = dY * Z.transpose();
    out.grad["b_out"] = dY.rowwise().sum();
    const Matrix dA = (w["W_out"].transpose() * dY).cwiseProduct((A.array() > 0.0).cast<double>().matrix());
    Matrix& dE = out.grad["P_embed"];
    Matrix& db = out.grad["p_bias"];
    for (Eigen::Index j = 0; j < P; ++j) {
        dE.noalias() += dA.middleRows(j * H, H) * xp.middleRows(j * p, p).transpose();
        db += dA.middleRows(j * H, H).rowwise().sum();
    }
    return out;
}

Batch extract_training_pairs(const MultivariateSeries& series, int input_len, int horizon, int stride) {
    if (input_len < 1 || horizon < 1 || stride < 1) throw Error("invalid window geometry");
    const Eigen::Index span = input_len + horizon;
    const Eigen::Index len = series.length();
    if (len < span) return {Matrix(input_len, 0), Matrix(horizon, 0)};
    const Eigen::Index per_channel = (len - span) / stride + 1;
    const Eigen::Index total = per_channel * series.channels();
    Batch b{Matrix(input_len, total), Matrix(horizon, total)};
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < series.channels(); ++c) {
        for (Eigen::Index s = 0; s + span <= len; s += stride, ++k) {
            const auto x = series.values.col(c).segment(s, input_len);
            const NormStats st = norm_stats(x);
            b.inputs.col(k) = (x.array() - st.mean) / st.std;
            b.targets.col(k) = (series.values.col(c).segment(s + input_len, horizon).array() - st.mean) / st.std;
        }
    }
    return b;
}

TrainResult train(const ForecasterSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (!is_trainable(spec.architecture)) throw Error("train: architecture '" + to_string(spec.architecture) + "' is not trainable");
    const Batch all = extract_training_pairs(data.series, spec.input_len, spec.horizon, cfg.stride);
    if (all.inputs.cols() == 0) throw Error("no training windows in dataset '" + data.name + "'");

    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    Rng order_rng = root.fork(2);
    NamedTensors w = init_weights(spec, init_rng);

    const Eigen::Index n = all.inputs.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    std::vector<double> epoch_losses;
    Batch batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double acc = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, n - start);
            batch.inputs.resize(spec.input_len, m);
            batch.targets.resize(spec.horizon, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                const auto src = order[static_cast<std::size_t>(start + i)];
                batch.inputs.col(i) = all.inputs.col(src);
                batch.targets.col(i) = all.targets.col(src);
            }
            const LossGrad lg = loss_and_grad(spec, w, batch);
            if (!std::isfinite(lg.loss)) throw Error("training diverged on dataset '" + data.name + "'");
            acc += lg.loss * static_cast<double>(m);
            w.axpy(-cfg.learning_rate, lg.grad);
        }
        if (!w.all_finite()) throw Error("training diverged on dataset '" + data.name + "'");
        epoch_losses.push_back(acc / static_cast<double>(n));
    }
    return {Forecaster(spec, std::move(w), data.name), std::move(epoch_losses)};
}

namespace {

nlohmann::json spec_to_json(const ForecasterSpec& s) {
    return {{"architecture", to_string(s.architecture)},
            {"input_len", s.input_len},
            {"horizon", s.horizon},
            {"patch_len", s.patch_len},
            {"hidden_dim", s.hidden_dim},
            {"season_period", s.season_period}};
}

ForecasterSpec spec_from_json(const nlohmann::json& j) {
    ForecasterSpec s;
    s.architecture = parse_architecture(j.at("architecture").get<std::string>());
    s.input_len = j.at("input_len").get<int>();
    s.horizon = j.at("horizon").get<int>();
    s.patch_len = j.value("patch_len", s.patch_len);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
    s.season_period = j.value("season_period", s.season_period);
    s.validate();
    return s;
}

}  // namespace

std::string save_forecaster(const Forecaster& model) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["spec"] = spec_to_json(model.spec());
    j["source_dataset"] = model.source_dataset();
    j["weights"] = tensors_to_json(model.weights());
    return j.dump(1) + "\n";
}

Forecaster load_forecaster(const std::string& bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model file: ") + e.what());
    }
    try {
        if (!j.is_object()) throw Error("malformed model file: not an object");
        const int version = j.at("format_version").get<int>();
        if (version != 1) throw Error("unsupported model format_version " + std::to_string(version));
        const ForecasterSpec spec = spec_from_json(j.at("spec"));
        NamedTensors weights = tensors_from_json(j.at("weights"), weight_layout(spec));
        return Forecaster(spec, std::move(weights), j.at("source_dataset").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model file: ") + e.what());
    }
}

void save_forecaster_file(const Forecaster& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << save_forecaster(model);
}

Forecaster load_forecaster_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open model file '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    try {
        return load_forecaster(buf.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

}  // namespace seqfusion

#include "seqfusion/extractor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace seqfusion {

void ExtractorDims::validate() const {
    if (window_len < 1 || hidden < 1 || dim < 1) throw Error("extractor dims must all be >= 1");
}

void MaskSpec::validate() const {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw Error("mask_ratio must be in (0, 1)");
    if (num_views < 1) throw Error("num_views must be >= 1");
}

void ExtractorTrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw Error("lambda must be >= 0");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (windows_per_dataset < 1) throw Error("windows_per_dataset must be >= 1");
}

NamedTensors ExtractorParams::layout(const ExtractorDims& d) {
    d.validate();
    NamedTensors t;
    t.add_matrix("W1", Matrix::Zero(d.hidden, d.window_len));
    t.add_vector("b1", Vector::Zero(d.hidden));
    t.add_matrix("W2", Matrix::Zero(d.dim, d.hidden));
    t.add_vector("b2", Vector::Zero(d.dim));
    t.add_matrix("V1", Matrix::Zero(d.hidden, d.dim));
    t.add_vector("c1", Vector::Zero(d.hidden));
    t.add_matrix("V2", Matrix::Zero(d.window_len, d.hidden));
    t.add_vector("c2", Vector::Zero(d.window_len));
    return t;
}

ExtractorParams ExtractorParams::zeros(const ExtractorDims& dims) { return {dims, layout(dims), {}}; }

ExtractorParams ExtractorParams::random(const ExtractorDims& dims, Rng& rng) {
    ExtractorParams p = zeros(dims);
    // fan_in of the layer owning each tensor, in layout order
    const int fan_in[] = {dims.window_len, dims.window_len, dims.hidden, dims.hidden,
                          dims.dim,        dims.dim,        dims.hidden, dims.hidden};
    for (std::size_t i = 0; i < p.weights.count(); ++i) {
        Matrix& m = p.weights.at(i).value;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in[i]));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
        }
    }
    return p;
}

Matrix encode_batch(const ExtractorParams& p, const Matrix& X) {
    if (X.rows() != p.dims.window_len) {
        throw Error("window length " + std::to_string(X.rows()) + " does not match extractor L=" +
                    std::to_string(p.dims.window_len));
    }
    const auto& w = p.weights;
    const Matrix h = ((w["W1"] * X).colwise() + w["b1"].col(0)).cwiseMax(0.0);
    return (w["W2"] * h).colwise() + w["b2"].col(0);
}

Representation encode(const ExtractorParams& p, const TimeSeries& window) { return encode_batch(p, window).col(0); }

Matrix decode_batch(const ExtractorParams& p, const Matrix& E) {
    const auto& w = p.weights;
    const Matrix g = ((w["V1"] * E).colwise() + w["c1"].col(0)).cwiseMax(0.0);
    return (w["V2"] * g).colwise() + w["c2"].col(0);
}

std::vector<TimeSeries> mask_series(const TimeSeries& window, double mask_ratio, int num_views, Rng& rng) {
    MaskSpec{mask_ratio, num_views, 0}.validate();
    const auto L = window.size();
    const auto count = static_cast<Eigen::Index>(std::floor(mask_ratio * static_cast<double>(L)));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(L));
    std::vector<TimeSeries> views;
    views.reserve(static_cast<std::size_t>(num_views));
    for (int v = 0; v < num_views; ++v) {
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        // partial Fisher-Yates: the first `count` slots are a uniform sample without replacement
        TimeSeries masked = window;
        for (Eigen::Index i = 0; i < count; ++i) {
            const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(L - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            masked(idx[static_cast<std::size_t>(i)]) = 0.0;
        }
        views.push_back(std::move(masked));
    }
    return views;
}

std::vector<TimeSeries> mask_series(const TimeSeries& window, const MaskSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    return mask_series(window, spec.mask_ratio, spec.num_views, rng);
}

namespace {

/// Accumulates scale * d cos(u, v) / du into du and / dv into dv.
template <typename U, typename V, typename GU, typename GV>
void add_cosine_grad(const U& u, const V& v, double scale, GU&& du, GV&& dv) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return;
    const double c = u.dot(v) / (nu * nv);
    du += scale * (v / (nu * nv) - c * u / (nu * nu));
    dv += scale * (u / (nu * nv) - c * v / (nv * nv));
}

void check_contrastive(const Matrix& anchors, const Matrix& views, int V) {
    if (V < 1) throw Error("views_per_anchor must be >= 1");
    if (anchors.cols() < 2) throw Error("no negatives");
    if (views.cols() != anchors.cols() * V || views.rows() != anchors.rows()) {
        throw Error("contrastive batch: views must have B*V columns of the anchor dimension");
    }
}

/// Returns the loss; if dA/dV are non-null, accumulates scale * gradient.
double constraint_impl(const Matrix& A, const Matrix& Vw, int V, double scale, Matrix* dA, Matrix* dV) {
    check_contrastive(A, Vw, V);
    const Eigen::Index B = A.cols();
    Matrix sims(B, B);
    for (Eigen::Index a = 0; a < B; ++a) {
        sims(a, a) = cosine(A.col(a), A.col(a));
        for (Eigen::Index b = a + 1; b < B; ++b) sims(a, b) = sims(b, a) = cosine(A.col(a), A.col(b));
    }
    const double pairs = static_cast<double>(B * V);
    double total = 0.0;
    for (Eigen::Index a = 0; a < B; ++a) {
        const double mx = sims.row(a).maxCoeff();
        const Eigen::RowVectorXd ex = (sims.row(a).array() - mx).exp().matrix();
        const double lse = mx + std::log(ex.sum());
        for (int v = 0; v < V; ++v) {
            const Eigen::Index col = a * V + v;
            total += lse - cosine(A.col(a), Vw.col(col));
            if (dA) add_cosine_grad(A.col(a), Vw.col(col), -scale / pairs, dA->col(a), dV->col(col));
        }
        if (dA) {
            const Eigen::RowVectorXd soft = ex / ex.sum();
            for (Eigen::Index b = 0; b < B; ++b) {
                if (b == a) continue;
                add_cosine_grad(A.col(a), A.col(b), scale * soft(b) * V / pairs, dA->col(a), dA->col(b));
            }
        }
    }
    return total / pairs;
}

}  // namespace

double constraint_loss(const ContrastiveBatch& batch) {
    return constraint_impl(batch.anchors, batch.views, batch.views_per_anchor, 0.0, nullptr, nullptr);
}

double transferability_loss(const std::vector<TransferPair>& pairs) {
    if (pairs.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& p : pairs) {
        if (!std::isfinite(p.g)) throw Error("transferability target must be finite");
        const double r = p.g - cosine(p.a, p.b);
        acc += r * r;
    }
    return acc / static_cast<double>(pairs.size());
}

ObjectiveValue objective_and_grad(const ExtractorParams& p, const ObjectiveBatch& batch) {
    const Eigen::Index L = p.dims.window_len;
    const Eigen::Index B = batch.anchors.cols();
    const int V = batch.views_per_anchor;
    if (batch.anchors.rows() != L || batch.masked.rows() != L || batch.masked.cols() != B * V || B < 1) {
        throw Error("objective batch shapes inconsistent with extractor dims");
    }
    if (static_cast<Eigen::Index>(batch.dataset_index.size()) != B) throw Error("dataset_index must have B entries");
    const auto& w = p.weights;

    Matrix X(L, B * (1 + V));
    X << batch.anchors, batch.masked;
    const Matrix A1 = (w["W1"] * X).colwise() + w["b1"].col(0);
    const Matrix H1 = A1.cwiseMax(0.0);
    const Matrix E = (w["W2"] * H1).colwise() + w["b2"].col(0);
    const Matrix Ev = E.rightCols(B * V);
    const Matrix D1 = (w["V1"] * Ev).colwise() + w["c1"].col(0);
    const Matrix G = D1.cwiseMax(0.0);
    const Matrix R = (w["V2"] * G).colwise() + w["c2"].col(0);

    Matrix target(L, B * V);
    for (Eigen::Index a = 0; a < B; ++a) target.middleCols(a * V, V) = batch.anchors.col(a).replicate(1, V);

    ObjectiveValue out;
    out.grad = p.weights.zeros_like();
    const double n_rec = static_cast<double>(L * B * V);
    const Matrix diff = R - target;
    out.reconstruction = diff.squaredNorm() / n_rec;

    Matrix dE = Matrix::Zero(E.rows(), E.cols());
    Matrix dEa = Matrix::Zero(E.rows(), B);
    Matrix dEv = Matrix::Zero(E.rows(), B * V);

    {
        const auto& ds = batch.dataset_index;
        double npairs = 0.0;
        for (Eigen::Index a = 0; a < B; ++a) {
            for (Eigen::Index b = 0; b < B; ++b) npairs += ds[static_cast<std::size_t>(a)] != ds[static_cast<std::size_t>(b)];
        }
        double acc = 0.0;
        for (Eigen::Index a = 0; a < B && npairs > 0.0; ++a) {
            for (Eigen::Index b = 0; b < B; ++b) {
                const int da = ds[static_cast<std::size_t>(a)];
                const int db = ds[static_cast<std::size_t>(b)];
                if (da == db) continue;
                const double r = batch.g(da, db) - cosine(E.col(a), E.col(b));
                acc += r * r;
                add_cosine_grad(E.col(a), E.col(b), -2.0 * r / npairs, dEa.col(a), dEa.col(b));
            }
        }
        out.transferability = npairs > 0.0 ? acc / npairs : 0.0;
    }
    if (B >= 2) {
        out.constraint = constraint_impl(E.leftCols(B), Ev, V, batch.lambda, &dEa, &dEv);
    } else if (batch.lambda > 0.0) {
        throw Error("no negatives");
    }
    out.total = out.reconstruction + out.transferability + batch.lambda * out.constraint;

    // decoder
    const Matrix dR = (2.0 / n_rec) * diff;
    out.grad["V2"] = dR * G.transpose();
    out.grad["c2"] = dR.rowwise().sum();
    const Matrix dD1 = (w["V2"].transpose() * dR).cwiseProduct((D1.array() > 0.0).cast<double>().matrix());
    out.grad["V1"] = dD1 * Ev.transpose();
    out.grad["c1"] = dD1.rowwise().sum();
    dEv += w["V1"].transpose() * dD1;

    // encoder
    dE << dEa, dEv;
    out.grad["W2"] = dE * H1.transpose();
    out.grad["b2"] = dE.rowwise().sum();
    const Matrix dA1 = (w["W2"].transpose() * dE).cwiseProduct((A1.array() > 0.0).cast<double>().matrix());
    out.grad["W1"] = dA1 * X.transpose();
    out.grad["b1"] = dA1.rowwise().sum();
    return out;
}

namespace {

TimeSeries sample_window(const Dataset& ds, Eigen::Index L, Rng& rng) {
    const auto& m = ds.series.values;
    const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.cols())));
    const auto s = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.rows() - L + 1)));
    return normalize(m.col(c).segment(s, L)).first;
}

}  // namespace

ExtractorParams train_extractor(const std::vector<Dataset>& datasets, const TransferMatrix& tm,
                                const ExtractorTrainConfig& cfg, const MaskSpec& mask, const ExtractorDims& dims) {
    cfg.validate();
    mask.validate();
    dims.validate();
    tm.validate();
    if (datasets.empty()) throw Error("train_extractor needs at least one dataset");

    const auto D = datasets.size();
    std::vector<int> tm_index(D);
    for (std::size_t i = 0; i < D; ++i) {
        if (datasets[i].series.length() < dims.window_len) {
            throw Error("dataset '" + datasets[i].name + "' is shorter than the extractor window");
        }
        tm_index[i] = tm.index_of(datasets[i].name);
    }
    Matrix g(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t j = 0; j < D; ++j) {
            if (tm_index[i] < 0 || tm_index[j] < 0) {
                throw Error("transfer matrix has no entry for pair (" + datasets[i].name + ", " + datasets[j].name + ")");
            }
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::clamp(tm.g(tm_index[i], tm_index[j]), -1.0, 1.0);
        }
    }

    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    Rng sample_rng = root.fork(2);
    Rng mask_rng = root.fork(3 ^ mask.seed);
    ExtractorParams params = ExtractorParams::random(dims, init_rng);

    const Eigen::Index L = dims.window_len;
    const int V = mask.num_views;
    const bool use_constraint = cfg.lambda > 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::pair<int, TimeSeries>> pool;
        pool.reserve(D * static_cast<std::size_t>(cfg.windows_per_dataset));
        for (std::size_t i = 0; i < D; ++i) {
            for (int k = 0; k < cfg.windows_per_dataset; ++k) {
                pool.emplace_back(static_cast<int>(i), sample_window(datasets[i], L, sample_rng));
            }
        }
        sample_rng.shuffle(pool);

        EpochLog log;
        log.epoch = epoch + 1;
        double weight = 0.0;
        for (std::size_t start = 0; start < pool.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto B = static_cast<Eigen::Index>(std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), pool.size() - start));
            if (B < 2 && use_constraint) continue;
            ObjectiveBatch batch;
            batch.anchors.resize(L, B);
            batch.masked.resize(L, B * V);
            batch.views_per_anchor = V;
            batch.g = g;
            batch.lambda = cfg.lambda;
            for (Eigen::Index a = 0; a < B; ++a) {
                const auto& [ds, win] = pool[start + static_cast<std::size_t>(a)];
                batch.anchors.col(a) = win;
                batch.dataset_index.push_back(ds);
                const auto views = mask_series(win, mask.mask_ratio, V, mask_rng);
                for (int v = 0; v < V; ++v) batch.masked.col(a * V + v) = views[static_cast<std::size_t>(v)];
            }
            const ObjectiveValue ov = objective_and_grad(params, batch);
            if (!std::isfinite(ov.total)) throw Error("extractor training diverged");
            params.weights.axpy(-cfg.learning_rate, ov.grad);
            const auto bw = static_cast<double>(B);
            log.reconstruction += bw * ov.reconstruction;
            log.transferability += bw * ov.transferability;
            log.constraint += bw * ov.constraint;
            log.total += bw * ov.total;
            weight += bw;
        }
        if (!params.weights.all_finite()) throw Error("extractor training diverged");
        if (weight > 0.0) {
            log.reconstruction /= weight;
            log.transferability /= weight;
            log.constraint /= weight;
            log.total /= weight;
        }
        params.training_log.push_back(log);
    }
    return params;
}

PcaResult pca_project(const std::vector<Representation>& reprs, int k, std::uint64_t seed) {
    if (k < 1 || k > 3) throw Error("pca: k must be 1, 2 or 3");
    if (static_cast<int>(reprs.size()) < k + 1) throw Error("pca: need at least k+1 points");
    const Eigen::Index d = reprs.front().size();
    if (d < k) throw Error("pca: k exceeds representation dimension");
    const auto N = static_cast<Eigen::Index>(reprs.size());
    Matrix X(N, d);
    for (Eigen::Index i = 0; i < N; ++i) {
        if (reprs[static_cast<std::size_t>(i)].size() != d) throw Error("pca: mixed representation dimensions");
        X.row(i) = reprs[static_cast<std::size_t>(i)].transpose();
    }
    X.rowwise() -= X.colwise().mean();
    Matrix C = X.transpose() * X / static_cast<double>(N);

    PcaResult out{Matrix::Zero(d, k), Vector::Zero(k), Matrix()};
    Rng rng(seed);
    for (int c = 0; c < k; ++c) {
        Vector v(d);
        for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
        auto orthonormalize = [&](Vector& x) {
            for (int prev = 0; prev < c; ++prev) x -= out.components.col(prev).dot(x) * out.components.col(prev);
            const double n = x.norm();
            if (n > 0.0) x /= n;
            return n;
        };
        orthonormalize(v);
        for (int it = 0; it < 200; ++it) {
            Vector next = C * v;
            if (orthonormalize(next) == 0.0) break;
            v = next;
        }
        const double lambda = std::max(0.0, v.dot(C * v));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        out.components.col(c) = v;
        out.explained_variance(c) = lambda;
        C -= lambda * v * v.transpose();
    }
    out.projections = X * out.components;
    return out;
}

namespace {

nlohmann::json log_to_json(const std::vector<EpochLog>& log) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : log) {
        arr.push_back({{"epoch", e.epoch},
                       {"reconstruction", e.reconstruction},
                       {"transferability", e.transferability},
                       {"constraint", e.constraint},
                       {"total", e.total}});
    }
    return arr;
}

}  // namespace

std::string save_extractor(const ExtractorParams& p) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["dims"] = {{"L", p.dims.window_len}, {"hidden", p.dims.hidden}, {"d", p.dims.dim}};
    j["weights"] = tensors_to_json(p.weights);
    j["training_log"] = log_to_json(p.training_log);
    return j.dump(1) + "\n";
}

ExtractorParams load_extractor(const std::string& bytes) {
    try {
        const auto j = nlohmann::json::parse(bytes);
        const int version = j.at("format_version").get<int>();
        if (version != 1) throw Error("unsupported extractor format_version " + std::to_string(version));
        ExtractorParams p;
        p.dims.window_len = j.at("dims").at("L").get<int>();
        p.dims.hidden = j.at("dims").at("hidden").get<int>();
        p.dims.dim = j.at("dims").at("d").get<int>();
        p.weights = tensors_from_json(j.at("weights"), ExtractorParams::layout(p.dims));
        for (const auto& e : j.value("training_log", nlohmann::json::array())) {
            p.training_log.push_back({e.at("epoch").get<int>(), e.at("reconstruction").get<double>(),
                                      e.at("transferability").get<double>(), e.at("constraint").get<double>(),
                                      e.at("total").get<double>()});
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed extractor file: ") + e.what());
    }
}

void save_extractor_file(const ExtractorParams& p, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << save_extractor(p);
}

ExtractorParams load_extractor_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open extractor file '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    try {
        return load_extractor(buf.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

}  // namespace seqfusion

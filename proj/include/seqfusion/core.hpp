#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace seqfusion {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A univariate sequence of finite observations.
using TimeSeries = Eigen::VectorXd;

/// Every failure in the library surfaces as this exception type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Observations arranged as a (T x C) matrix; column c is variate c.
struct MultivariateSeries {
    Matrix values;
    std::vector<std::string> channel_names;

    MultivariateSeries() = default;
    explicit MultivariateSeries(Matrix v, std::vector<std::string> names = {});

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }
    TimeSeries channel(Eigen::Index c) const { return values.col(c); }
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

struct Dataset {
    MultivariateSeries series;
    std::string name;
    std::string granularity;
};

inline constexpr double kStdFloor = 1e-8;

/// Population mean/std of a window, with the zero-variance fallback applied.
template <typename Derived>
NormStats norm_stats(const Eigen::MatrixBase<Derived>& x) {
    if (x.size() == 0) throw Error("empty series");
    if (!x.allFinite()) throw Error("non-finite input");
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    double sd = std::sqrt(var);
    if (sd < kStdFloor) sd = 1.0;
    return {mean, sd};
}

/// Instance normalization: (x - mean) / std.
template <typename Derived>
std::pair<TimeSeries, NormStats> normalize(const Eigen::MatrixBase<Derived>& x) {
    const NormStats st = norm_stats(x);
    TimeSeries out = (x.array() - st.mean) / st.std;
    return {std::move(out), st};
}

template <typename Derived>
TimeSeries denormalize(const Eigen::MatrixBase<Derived>& x_norm, const NormStats& st) {
    if (!(st.std > 0.0)) throw Error("denormalize: std must be positive");
    return (x_norm.array() * st.std + st.mean).matrix();
}

TimeSeries trim_to_last(const TimeSeries& x, Eigen::Index n);
TimeSeries trim_to_first(const TimeSeries& x, Eigen::Index n);

namespace detail {
template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    if (a.size() == 0) throw Error("empty metric input");
}
}  // namespace detail

/// Mean squared error over all H*C entries (rows are steps, columns channels).
template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
    detail::require_same_shape(truth, pred);
    return (truth - pred).squaredNorm() / static_cast<double>(truth.size());
}

/// Per-channel SMAPE in percent, averaged over channels. Zero-denominator terms count as 0.
template <typename A, typename B>
double smape(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
    detail::require_same_shape(truth, pred);
    double total = 0.0;
    for (Eigen::Index c = 0; c < truth.cols(); ++c) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < truth.rows(); ++t) {
            const double den = std::abs(truth(t, c)) + std::abs(pred(t, c));
            if (den >= kStdFloor) acc += std::abs(truth(t, c) - pred(t, c)) / den;
        }
        total += 200.0 * acc / static_cast<double>(truth.rows());
    }
    return total / static_cast<double>(truth.cols());
}

/// Per-channel MAPE in percent, averaged over channels that have any usable entry.
/// Entries with |truth| < 1e-8 are skipped and the channel's count shrinks accordingly.
template <typename A, typename B>
double mape(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
    detail::require_same_shape(truth, pred);
    double total = 0.0;
    int used_channels = 0;
    for (Eigen::Index c = 0; c < truth.cols(); ++c) {
        double acc = 0.0;
        int n = 0;
        for (Eigen::Index t = 0; t < truth.rows(); ++t) {
            const double y = truth(t, c);
            if (std::abs(y) < kStdFloor) continue;
            acc += std::abs(y - pred(t, c)) / std::abs(y);
            ++n;
        }
        if (n == 0) continue;
        total += 100.0 * acc / n;
        ++used_channels;
    }
    if (used_channels == 0) throw Error("undefined MAPE");
    return total / used_channels;
}

inline double mse(const MultivariateSeries& truth, const MultivariateSeries& pred) {
    return mse(truth.values, pred.values);
}
inline double smape(const MultivariateSeries& truth, const MultivariateSeries& pred) {
    return smape(truth.values, pred.values);
}
inline double mape(const MultivariateSeries& truth, const MultivariateSeries& pred) {
    return mape(truth.values, pred.values);
}

/// Cosine similarity; defined as 0 when either side has zero norm.
template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return u.dot(v) / (nu * nv);
}

/// Parses a benchmark-layout CSV: first column is an index, the rest numeric.
Dataset load_csv(const std::filesystem::path& path, bool has_header);
/// Header detected from the first non-empty row: any non-numeric cell means a header.
Dataset load_csv(const std::filesystem::path& path);
bool csv_has_header(const std::string& text);
Dataset parse_csv(const std::string& text, const std::string& name, bool has_header);

/// Writes the same layout load_csv reads (index column "t").
void write_csv(const std::filesystem::path& path, const MultivariateSeries& series);

/// Stem of a path ("data/ETTh1.csv" -> "ETTh1").
std::string dataset_name_from_path(const std::filesystem::path& path);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace seqfusion

#include "seqfusion/tensors.hpp"

#include <nlohmann/json.hpp>

#include <cstring>

namespace seqfusion {

void NamedTensors::add_matrix(std::string name, Matrix m) {
    items_.push_back({std::move(name), std::move(m), false});
}

void NamedTensors::add_vector(std::string name, Vector v) {
    items_.push_back({std::move(name), Matrix(std::move(v)), true});
}

Eigen::Index NamedTensors::total_size() const {
    Eigen::Index n = 0;
    for (const auto& t : items_) n += t.value.size();
    return n;
}

const Matrix& NamedTensors::operator[](const std::string& name) const {
    for (const auto& t : items_) {
        if (t.name == name) return t.value;
    }
    throw Error("no tensor named '" + name + "'");
}

Matrix& NamedTensors::operator[](const std::string& name) {
    for (auto& t : items_) {
        if (t.name == name) return t.value;
    }
    throw Error("no tensor named '" + name + "'");
}

bool NamedTensors::contains(const std::string& name) const {
    for (const auto& t : items_) {
        if (t.name == name) return true;
    }
    return false;
}

NamedTensors NamedTensors::zeros_like() const {
    NamedTensors out;
    for (const auto& t : items_) {
        out.items_.push_back({t.name, Matrix::Zero(t.value.rows(), t.value.cols()), t.is_vector});
    }
    return out;
}

Vector NamedTensors::flatten() const {
    Vector flat(total_size());
    Eigen::Index off = 0;
    for (const auto& t : items_) {
        flat.segment(off, t.value.size()) = t.value.reshaped();
        off += t.value.size();
    }
    return flat;
}

void NamedTensors::unflatten(const Vector& flat) {
    if (flat.size() != total_size()) throw Error("unflatten: size mismatch");
    Eigen::Index off = 0;
    for (auto& t : items_) {
        t.value.reshaped() = flat.segment(off, t.value.size());
        off += t.value.size();
    }
}

void NamedTensors::axpy(double scale, const NamedTensors& other) {
    if (other.items_.size() != items_.size()) throw Error("axpy: tensor count mismatch");
    for (std::size_t i = 0; i < items_.size(); ++i) {
        items_[i].value += scale * other.items_[i].value;
    }
}

bool NamedTensors::all_finite() const {
    for (const auto& t : items_) {
        if (!t.value.allFinite()) return false;
    }
    return true;
}

bool bit_identical(const NamedTensors& a, const NamedTensors& b) {
    if (a.count() != b.count()) return false;
    for (std::size_t i = 0; i < a.count(); ++i) {
        const auto& x = a.at(i);
        const auto& y = b.at(i);
        if (x.name != y.name || x.is_vector != y.is_vector || x.value.rows() != y.value.rows() ||
            x.value.cols() != y.value.cols()) {
            return false;
        }
        if (x.value.size() > 0 &&
            std::memcmp(x.value.data(), y.value.data(), sizeof(double) * static_cast<std::size_t>(x.value.size())) != 0) {
            return false;
        }
    }
    return true;
}

nlohmann::json tensors_to_json(const NamedTensors& t) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& item : t.items()) {
        nlohmann::json arr = nlohmann::json::array();
        if (item.is_vector) {
            for (Eigen::Index i = 0; i < item.value.rows(); ++i) arr.push_back(item.value(i, 0));
        } else {
            for (Eigen::Index r = 0; r < item.value.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index c = 0; c < item.value.cols(); ++c) row.push_back(item.value(r, c));
                arr.push_back(std::move(row));
            }
        }
        out[item.name] = std::move(arr);
    }
    return out;
}

namespace {

double as_double(const nlohmann::json& v, const std::string& name) {
    if (!v.is_number()) throw Error("tensor '" + name + "': non-numeric entry");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error("tensor '" + name + "': non-finite entry");
    return d;
}

}  // namespace

NamedTensors tensors_from_json(const nlohmann::json& j, const NamedTensors& expected) {
    if (!j.is_object()) throw Error("weights must be a JSON object");
    if (j.size() != expected.count()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!expected.contains(it.key())) throw Error("unexpected tensor '" + it.key() + "'");
        }
    }
    NamedTensors out = expected.zeros_like();
    for (std::size_t i = 0; i < out.count(); ++i) {
        Tensor& t = out.at(i);
        if (!j.contains(t.name)) throw Error("missing tensor '" + t.name + "'");
        const auto& arr = j.at(t.name);
        if (!arr.is_array()) throw Error("tensor '" + t.name + "' must be an array");
        const auto rows = t.value.rows();
        const auto cols = t.value.cols();
        const std::string shape = t.is_vector ? "(" + std::to_string(rows) + ")"
                                              : "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
        if (static_cast<Eigen::Index>(arr.size()) != rows) {
            throw Error("tensor '" + t.name + "' shape mismatch, expected " + shape);
        }
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = arr[static_cast<std::size_t>(r)];
            if (t.is_vector) {
                t.value(r, 0) = as_double(row, t.name);
                continue;
            }
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
                throw Error("tensor '" + t.name + "' shape mismatch, expected " + shape);
            }
            for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = as_double(row[static_cast<std::size_t>(c)], t.name);
        }
    }
    return out;
}

}  // namespace seqfusion

#pragma once

#include "seqfusion/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace seqfusion {

/// A 1-D (vector) or 2-D (matrix) named parameter block.
struct Tensor {
    std::string name;
    Matrix value;  // vectors are stored as n x 1
    bool is_vector = false;
};

/// Ordered collection of named parameter blocks. Order is part of the
/// identity: flatten/unflatten and serialization walk it front to back.
class NamedTensors {
public:
    NamedTensors() = default;

    void add_matrix(std::string name, Matrix m);
    void add_vector(std::string name, Vector v);

    bool empty() const { return items_.empty(); }
    std::size_t count() const { return items_.size(); }
    Eigen::Index total_size() const;

    const Tensor& at(std::size_t i) const { return items_[i]; }
    Tensor& at(std::size_t i) { return items_[i]; }

    const Matrix& operator[](const std::string& name) const;
    Matrix& operator[](const std::string& name);
    bool contains(const std::string& name) const;

    /// Same names and shapes, all zeros.
    NamedTensors zeros_like() const;

    Vector flatten() const;
    void unflatten(const Vector& flat);

    /// this += scale * other (shapes must agree).
    void axpy(double scale, const NamedTensors& other);

    bool all_finite() const;

    const std::vector<Tensor>& items() const { return items_; }

private:
    std::vector<Tensor> items_;
};

bool bit_identical(const NamedTensors& a, const NamedTensors& b);

/// {name: nested arrays}; vectors as flat arrays, matrices row-major.
nlohmann::json tensors_to_json(const NamedTensors& t);

/// Reads tensors matching the layout of `expected` (names and shapes);
/// throws on missing, extra, or mis-shaped entries.
NamedTensors tensors_from_json(const nlohmann::json& j, const NamedTensors& expected);

}  // namespace seqfusion

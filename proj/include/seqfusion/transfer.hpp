#pragma once

#include "seqfusion/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace seqfusion {

/// g(i, j): score of the model trained on dataset i when applied to dataset j.
struct TransferMatrix {
    std::vector<std::string> dataset_names;
    Matrix g;

    /// Index of `name` or -1.
    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < dataset_names.size(); ++i) {
            if (dataset_names[i] == name) return static_cast<int>(i);
        }
        return -1;
    }

    void validate() const {
        const auto n = static_cast<Eigen::Index>(dataset_names.size());
        if (g.rows() != n || g.cols() != n) throw Error("transfer matrix dimensions do not match dataset list");
        if (!g.allFinite()) throw Error("transfer matrix has non-finite entries");
    }
};

std::string save_transfer_matrix(const TransferMatrix& tm);
TransferMatrix load_transfer_matrix(const std::string& bytes);
void save_transfer_matrix_file(const TransferMatrix& tm, const std::filesystem::path& path);
TransferMatrix load_transfer_matrix_file(const std::filesystem::path& path);

}  // namespace seqfusion

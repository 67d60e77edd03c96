#pragma once

#include <vector>

#include <Eigen/SparseCore>

namespace qcov {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Affine constraints on the unknowns of one scalar field.
struct LinearConstraints {
    struct Fixed {
        int var;
        double value;
    };
    // x[b] = x[a] + offset
    struct Tie {
        int a;
        int b;
        double offset;
    };
    std::vector<Fixed> fixed;
    std::vector<Tie> ties;
};

// Minimises 1/2 x^T K x - b^T x subject to the constraints, for symmetric positive semi-definite K.
// Throws solver errors when the reduced system is singular and constraint errors on inconsistent ties.
std::vector<double> solve_constrained(const SparseMatrix& K, const std::vector<double>& rhs,
                                      const LinearConstraints& c);

}  // namespace qcov

#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "qcov/errors.hpp"
#include "qcov/sparse.hpp"

namespace qcov {

namespace {

// Union-find where every member stores its offset from the root: x[i] = x[root] + off[i].
struct OffsetUnionFind {
    std::vector<int> parent;
    std::vector<double> off;

    explicit OffsetUnionFind(int n) : parent(n), off(n, 0.0) { std::iota(parent.begin(), parent.end(), 0); }

    int find(int i) {
        if (parent[i] == i) return i;
        const int p = parent[i];
        const int r = find(p);
        off[i] += off[p];
        parent[i] = r;
        return r;
    }

    // Returns the mismatch when the relation is already implied.
    double unite(int a, int b, double offset) {
        const int ra = find(a), rb = find(b);
        if (ra == rb) return std::abs((off[b] - off[a]) - offset);
        // x[b] = x[a] + offset  =>  x[rb] = x[ra] + off[a] + offset - off[b]
        parent[rb] = ra;
        off[rb] = off[a] + offset - off[b];
        return 0.0;
    }
};

}  // namespace

std::vector<double> solve_constrained(const SparseMatrix& K, const std::vector<double>& rhs,
                                      const LinearConstraints& c) {
    const int n = static_cast<int>(K.rows());
    if (K.cols() != n || static_cast<int>(rhs.size()) != n) fail(ErrorKind::argument, "system size mismatch");
    OffsetUnionFind uf(n);
    for (const auto& t : c.ties) {
        if (t.a < 0 || t.a >= n || t.b < 0 || t.b >= n) fail(ErrorKind::argument, "tie index out of range");
        if (uf.unite(t.a, t.b, t.offset) > 1e-12 * (1.0 + std::abs(t.offset)))
            fail(ErrorKind::constraint, "inconsistent tie constraints");
    }
    std::vector<double> root_value(n, std::nan(""));
    for (const auto& f : c.fixed) {
        if (f.var < 0 || f.var >= n) fail(ErrorKind::argument, "fixed index out of range");
        const int r = uf.find(f.var);
        const double v = f.value - uf.off[f.var];
        if (!std::isnan(root_value[r]) && std::abs(root_value[r] - v) > 1e-12 * (1.0 + std::abs(v)))
            fail(ErrorKind::constraint, "conflicting fixed values on tied unknowns");
        root_value[r] = v;
    }
    // x = P y + x0, with one reduced unknown per free class.
    std::vector<int> col(n, -1);
    int m = 0;
    for (int i = 0; i < n; ++i) {
        const int r = uf.find(i);
        if (r == i && std::isnan(root_value[i])) col[i] = m++;
    }
    Eigen::VectorXd x0(n);
    std::vector<int> pcol(n, -1);
    for (int i = 0; i < n; ++i) {
        const int r = uf.find(i);
        if (std::isnan(root_value[r])) {
            x0[i] = uf.off[i];
            pcol[i] = col[r];
        } else {
            x0[i] = root_value[r] + uf.off[i];
        }
    }
    std::vector<double> out(n);
    if (m == 0) {
        for (int i = 0; i < n; ++i) out[i] = x0[i];
        return out;
    }
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n) - K * x0;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(K.nonZeros());
    Eigen::VectorXd br = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < n; ++i)
        if (pcol[i] >= 0) br[pcol[i]] += b[i];
    for (int k = 0; k < K.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(K, k); it; ++it) {
            const int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
            if (pcol[i] >= 0 && pcol[j] >= 0) trips.emplace_back(pcol[i], pcol[j], it.value());
        }
    }
    SparseMatrix Kr(m, m);
    Kr.setFromTriplets(trips.begin(), trips.end());
    Kr.makeCompressed();
    Eigen::VectorXd y;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(Kr);
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
        y = ldlt.solve(br);
        ok = ldlt.info() == Eigen::Success && y.allFinite() && (ldlt.vectorD().array() > 0).all();
    }
    if (!ok) {
        Eigen::SparseLU<SparseMatrix> lu(Kr);
        if (lu.info() != Eigen::Success) fail(ErrorKind::solver, "singular system (" + std::to_string(m) + " unknowns)");
        y = lu.solve(br);
        if (lu.info() != Eigen::Success || !y.allFinite()) fail(ErrorKind::solver, "linear solve failed");
    }
    for (int i = 0; i < n; ++i) out[i] = x0[i] + (pcol[i] >= 0 ? y[pcol[i]] : 0.0);
    return out;
}

}  // namespace qcov

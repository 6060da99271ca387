#pragma once

// Sparse matrix assembly, products, linear solves and structural checks.
// Storage and factorizations are delegated to Eigen; everything else in the
// code base goes through this interface.

#include <algorithm>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

#include "evac/core.hpp"

namespace evac {

struct Triplet {
    int row = 0, col = 0;
    double value = 0.0;
};

class SparseMatrix {
public:
    SparseMatrix() = default;

    // Duplicates are summed in sorted (row, col) order, so assembly is
    // deterministic regardless of triplet input order.
    static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> triplets) {
        for (const auto& t : triplets) {
            if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
                fail("sparse assemble: index (", t.row, ",", t.col, ") out of range for ",
                     rows, "x", cols, " matrix");
            if (!finite(t.value)) fail("sparse assemble: non-finite value at (", t.row, ",", t.col, ")");
        }
        std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<Eigen::Triplet<double>> et;
        et.reserve(triplets.size());
        for (const auto& t : triplets) et.emplace_back(t.row, t.col, t.value);
        SparseMatrix out;
        out.m_.resize(rows, cols);
        out.m_.setFromTriplets(et.begin(), et.end());
        out.m_.makeCompressed();
        return out;
    }

    int rows() const { return static_cast<int>(m_.rows()); }
    int cols() const { return static_cast<int>(m_.cols()); }
    std::size_t nonzeros() const { return static_cast<std::size_t>(m_.nonZeros()); }
    double coeff(int i, int j) const { return m_.coeff(i, j); }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != cols()) fail("sparse apply: size mismatch");
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
        Eigen::VectorXd y = m_ * xv;
        return {y.data(), y.data() + y.size()};
    }

    std::vector<double> apply_transposed(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != rows()) fail("sparse apply_transposed: size mismatch");
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
        Eigen::VectorXd y = m_.transpose() * xv;
        return {y.data(), y.data() + y.size()};
    }

    SparseMatrix transposed() const {
        SparseMatrix out;
        out.m_ = m_.transpose();
        out.m_.makeCompressed();
        return out;
    }

    // Row-wise visitor: fn(row, col, value).
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (int k = 0; k < m_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(m_, k); it; ++it)
                fn(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }

    const Eigen::SparseMatrix<double>& eigen() const { return m_; }

private:
    Eigen::SparseMatrix<double> m_;
};

struct SolveOptions {
    enum Method { Direct, Krylov } method = Direct;
    double tol = 1e-12;     // relative residual target, ||Ax-b|| <= tol*||b||
    int max_iter = 5000;
};

// Reusable sparse LU; the transport system matrix is factored once per run.
class SparseFactorization {
public:
    explicit SparseFactorization(const SparseMatrix& a) {
        if (a.rows() != a.cols()) fail("factorize: matrix not square");
        lu_.compute(a.eigen());
        if (lu_.info() != Eigen::Success) fail("factorize: sparse LU failed (singular matrix?)");
    }

    std::vector<double> solve(const std::vector<double>& b) const {
        Eigen::Map<const Eigen::VectorXd> bv(b.data(), b.size());
        Eigen::VectorXd x = lu_.solve(bv);
        if (lu_.info() != Eigen::Success) fail("factorize: LU solve failed");
        return {x.data(), x.data() + x.size()};
    }

private:
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

inline std::vector<double> solve(const SparseMatrix& a, const std::vector<double>& b,
                                 SolveOptions opts = {}) {
    if (a.rows() != a.cols()) fail("solve: matrix not square");
    if (static_cast<int>(b.size()) != a.rows()) fail("solve: right-hand side size mismatch");
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), b.size());
    const double bnorm = bv.norm();
    Eigen::VectorXd x;
    if (opts.method == SolveOptions::Direct) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a.eigen());
        if (lu.info() != Eigen::Success) fail("solve: sparse LU factorization failed");
        x = lu.solve(bv);
    } else {
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> krylov;
        krylov.setTolerance(opts.tol > 0 ? opts.tol : 1e-12);
        krylov.setMaxIterations(opts.max_iter);
        krylov.compute(a.eigen());
        x = krylov.solve(bv);
    }
    const double resid = (a.eigen() * x - bv).norm();
    if (!(resid <= opts.tol * std::max(bnorm, 1e-300)) && bnorm > 0.0)
        fail("solve: residual ", resid, " above tolerance ", opts.tol * bnorm,
             " (method ", opts.method == SolveOptions::Direct ? "direct" : "krylov", ")");
    return {x.data(), x.data() + x.size()};
}

struct MMatrixReport {
    bool positive_diagonal = true;
    bool nonpositive_offdiagonal = true;
    bool strictly_diagonally_dominant = true;
    bool is_m_matrix = true;
    // Offending (row, col, value) samples, a handful at most.
    std::vector<Triplet> violations;
};

// Sufficient M-matrix test: positive diagonal, nonpositive off-diagonal
// entries, strict diagonal dominance per row.
inline MMatrixReport check_m_matrix(const SparseMatrix& a) {
    if (a.rows() != a.cols()) fail("check_m_matrix: matrix not square");
    MMatrixReport rep;
    const int n = a.rows();
    std::vector<double> diag(n, 0.0), offsum(n, 0.0);
    a.for_each([&](int i, int j, double v) {
        if (i == j) {
            diag[i] = v;
            if (!(v > 0.0)) {
                rep.positive_diagonal = false;
                if (rep.violations.size() < 8) rep.violations.push_back({i, j, v});
            }
        } else {
            offsum[i] += std::abs(v);
            if (v > 0.0) {
                rep.nonpositive_offdiagonal = false;
                if (rep.violations.size() < 8) rep.violations.push_back({i, j, v});
            }
        }
    });
    for (int i = 0; i < n; ++i)
        if (!(offsum[i] < diag[i])) {
            rep.strictly_diagonally_dominant = false;
            if (rep.violations.size() < 8) rep.violations.push_back({i, i, diag[i] - offsum[i]});
        }
    rep.is_m_matrix = rep.positive_diagonal && rep.nonpositive_offdiagonal && rep.strictly_diagonally_dominant;
    return rep;
}

} // namespace evac

#pragma once

#include "drg/linear_system.hpp"
#include "drg/rational.hpp"

namespace drg {

namespace detail {

struct CanonicalBlock {
    Matrix A;
    Vector b;
    Eigen::RowVectorXd c;
    double d = 0.0;
};

/// Controller-canonical form of one proper entry.
inline CanonicalBlock controller_canonical(const RationalTf& g) {
    CanonicalBlock blk;
    if (g.is_zero()) {
        blk.A = Matrix(0, 0);
        blk.b = Vector(0);
        blk.c = Eigen::RowVectorXd(0);
        return blk;
    }
    const Polynomial den = g.den();
    const Polynomial num = g.num();
    const int n = den.degree();
    blk.d = num.degree() == n ? num.leading() / den.leading() : 0.0;
    const Polynomial rem = num - den * blk.d;
    blk.A = Matrix::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        blk.A(i, i + 1) = 1.0;
    }
    for (int i = 0; i < n; ++i) {
        blk.A(n - 1, i) = -den[static_cast<std::size_t>(i)] / den.leading();
    }
    blk.b = Vector::Zero(n);
    if (n > 0) {
        blk.b(n - 1) = 1.0;
    }
    blk.c = Eigen::RowVectorXd(n);
    for (int i = 0; i < n; ++i) {
        blk.c(i) = (i <= rem.degree() ? rem[static_cast<std::size_t>(i)] : 0.0) / den.leading();
    }
    return blk;
}

} // namespace detail

/// Minimal state-space realization: one controller-canonical block per entry,
/// then Kalman reduction.
[[nodiscard]] inline LinearSystem realize(const RationalMatrix& M, double tol = 1e-9) {
    std::vector<detail::CanonicalBlock> blocks;
    int n = 0;
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            require(M(i, j).is_proper(), ErrorKind::ImproperEntry,
                    "entry (" + std::to_string(i) + "," + std::to_string(j) + ") is improper");
            blocks.push_back(detail::controller_canonical(M(i, j)));
            n += static_cast<int>(blocks.back().A.rows());
        }
    }
    Matrix A = Matrix::Zero(n, n);
    Matrix B = Matrix::Zero(n, M.cols());
    Matrix C = Matrix::Zero(M.rows(), n);
    Matrix D = Matrix::Zero(M.rows(), M.cols());
    int off = 0;
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            const auto& blk = blocks[static_cast<std::size_t>(i * M.cols() + j)];
            const auto k = blk.A.rows();
            A.block(off, off, k, k) = blk.A;
            B.block(off, j, k, 1) = blk.b;
            C.block(i, off, 1, k) = blk.c;
            D(i, j) = blk.d;
            off += static_cast<int>(k);
        }
    }
    return minimal_realization(LinearSystem(A, B, C, D), tol);
}

/// Realization of a single proper transfer function.
[[nodiscard]] inline LinearSystem realize(const RationalTf& g, double tol = 1e-9) {
    RationalMatrix m(1, 1);
    m(0, 0) = g;
    return realize(m, tol);
}

} // namespace drg

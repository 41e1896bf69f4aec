#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"

namespace drg {

enum class LpStatus { Optimal, Unbounded, Infeasible };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x;
};

namespace detail {

/// Dense tableau for max c'y, A y = b, y >= 0 with a feasible starting basis.
/// Bland's rule keeps degenerate problems from cycling.
class Tableau {
public:
    Tableau(Eigen::MatrixXd T, std::vector<int> basis) : T_(std::move(T)), basis_(std::move(basis)) {}

    /// Objective row is the last row: T(m, j) = reduced cost (negative means improvable).
    LpStatus optimize(const std::vector<bool>& allowed) {
        const int m = static_cast<int>(T_.rows()) - 1;
        const int ncols = static_cast<int>(T_.cols()) - 1;
        for (int iter = 0; iter < 50000; ++iter) {
            int enter = -1;
            for (int j = 0; j < ncols; ++j) {
                if (allowed[static_cast<std::size_t>(j)] && T_(m, j) < -kPivotTol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) {
                return LpStatus::Optimal;
            }
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                if (T_(i, enter) > kPivotTol) {
                    const double ratio = T_(i, ncols) / T_(i, enter);
                    if (ratio < best - 1e-12 ||
                        (ratio <= best + 1e-12 && leave >= 0 && basis_[static_cast<std::size_t>(i)] <
                                                                     basis_[static_cast<std::size_t>(leave)])) {
                        best = std::min(best, ratio);
                        leave = i;
                    }
                }
            }
            if (leave < 0) {
                return LpStatus::Unbounded;
            }
            pivot(leave, enter);
        }
        return LpStatus::Optimal;
    }

    void pivot(int r, int c) {
        T_.row(r) /= T_(r, c);
        for (int i = 0; i < T_.rows(); ++i) {
            if (i != r && T_(i, c) != 0.0) {
                T_.row(i) -= T_(i, c) * T_.row(r);
            }
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    Eigen::MatrixXd& table() { return T_; }
    std::vector<int>& basis() { return basis_; }

    static constexpr double kPivotTol = 1e-10;

private:
    Eigen::MatrixXd T_;
    std::vector<int> basis_;
};

} // namespace detail

/// max c'z subject to H z <= h with z free. Rows are normalized internally.
[[nodiscard]] inline LpResult lp_solve(const Eigen::VectorXd& c, const Eigen::MatrixXd& H, const Eigen::VectorXd& h) {
    require(c.size() == H.cols() && H.rows() == h.size(), ErrorKind::DimensionMismatch, "LP dimensions");
    const int n = static_cast<int>(H.cols());
    std::vector<int> keep;
    for (int i = 0; i < H.rows(); ++i) {
        const double nrm = H.row(i).norm();
        if (nrm == 0.0) {
            if (h(i) < -1e-9) {
                return {};
            }
            continue;
        }
        keep.push_back(i);
    }
    const int k = static_cast<int>(keep.size());
    Eigen::MatrixXd Hn(k, n);
    Eigen::VectorXd hn(k);
    for (int r = 0; r < k; ++r) {
        const double nrm = H.row(keep[static_cast<std::size_t>(r)]).norm();
        Hn.row(r) = H.row(keep[static_cast<std::size_t>(r)]) / nrm;
        hn(r) = h(keep[static_cast<std::size_t>(r)]) / nrm;
    }
    std::vector<int> neg;
    for (int r = 0; r < k; ++r) {
        if (hn(r) < 0.0) {
            neg.push_back(r);
        }
    }
    // Columns: p (n), q (n), slack (k), artificial (|neg|), rhs.
    const int na = static_cast<int>(neg.size());
    const int ncols = 2 * n + k + na;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k + 1, ncols + 1);
    std::vector<int> basis(static_cast<std::size_t>(k));
    int a = 0;
    for (int r = 0; r < k; ++r) {
        const double sgn = hn(r) < 0.0 ? -1.0 : 1.0;
        T.block(r, 0, 1, n) = sgn * Hn.row(r);
        T.block(r, n, 1, n) = -sgn * Hn.row(r);
        T(r, 2 * n + r) = sgn;
        T(r, ncols) = sgn * hn(r);
        if (sgn < 0.0) {
            T(r, 2 * n + k + a) = 1.0;
            basis[static_cast<std::size_t>(r)] = 2 * n + k + a;
            ++a;
        } else {
            basis[static_cast<std::size_t>(r)] = 2 * n + r;
        }
    }
    detail::Tableau tab(std::move(T), std::move(basis));
    auto& tb = tab.table();
    std::vector<bool> allowed(static_cast<std::size_t>(ncols), true);
    if (na > 0) {
        // Phase 1: maximize -sum(artificial); express in terms of non-basics.
        tb.row(k).setZero();
        for (int j = 0; j < na; ++j) {
            tb(k, 2 * n + k + j) = 1.0;
        }
        for (int r : neg) {
            tb.row(k) -= tb.row(r);
        }
        tab.optimize(allowed);
        if (tb(k, ncols) < -1e-9) {
            return {};
        }
        for (int r = 0; r < k; ++r) {
            if (tab.basis()[static_cast<std::size_t>(r)] >= 2 * n + k) {
                for (int j = 0; j < 2 * n + k; ++j) {
                    if (std::abs(tb(r, j)) > 1e-9) {
                        tab.pivot(r, j);
                        break;
                    }
                }
            }
        }
        for (int j = 0; j < na; ++j) {
            allowed[static_cast<std::size_t>(2 * n + k + j)] = false;
        }
    }
    tb.row(k).setZero();
    tb.block(k, 0, 1, n) = -c.transpose();
    tb.block(k, n, 1, n) = c.transpose();
    for (int r = 0; r < k; ++r) {
        const int b = tab.basis()[static_cast<std::size_t>(r)];
        if (tb(k, b) != 0.0) {
            tb.row(k) -= tb(k, b) * tb.row(r);
        }
    }
    if (tab.optimize(allowed) == LpStatus::Unbounded) {
        return {LpStatus::Unbounded, std::numeric_limits<double>::infinity(), Eigen::VectorXd()};
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(ncols);
    for (int r = 0; r < k; ++r) {
        y(tab.basis()[static_cast<std::size_t>(r)]) = tb(r, ncols);
    }
    Eigen::VectorXd z = y.head(n) - y.segment(n, n);
    return {LpStatus::Optimal, c.dot(z), z};
}

} // namespace drg

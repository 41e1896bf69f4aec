#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"

namespace drg {

struct QpResult {
    Eigen::VectorXd x;
    std::vector<int> active;
    int iterations = 0;
};

/// Primal active-set method for min 1/2 x'Qx + c'x s.t. G x <= g with Q
/// positive definite, started from a feasible x0. Ties in both the blocking
/// and the dropping choice go to the lowest constraint index.
[[nodiscard]] inline QpResult qp_active_set(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                                            const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                                            Eigen::VectorXd x0) {
    const int n = static_cast<int>(Q.rows());
    const int k = static_cast<int>(G.rows());
    require(Q.cols() == n && c.size() == n && G.cols() == n && g.size() == k && x0.size() == n,
            ErrorKind::DimensionMismatch, "QP dimensions");
    constexpr double tol = 1e-12;
    QpResult res{std::move(x0), {}, 0};
    Eigen::VectorXd& x = res.x;
    std::vector<int>& W = res.active;
    for (int iter = 0; iter < 100 * (n + k + 1); ++iter) {
        res.iterations = iter + 1;
        const int w = static_cast<int>(W.size());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + w, n + w);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + w);
        K.topLeftCorner(n, n) = Q;
        for (int j = 0; j < w; ++j) {
            K.block(n + j, 0, 1, n) = G.row(W[static_cast<std::size_t>(j)]);
            K.block(0, n + j, n, 1) = G.row(W[static_cast<std::size_t>(j)]).transpose();
        }
        rhs.head(n) = -(Q * x + c);
        const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
        const Eigen::VectorXd p = sol.head(n);
        if (p.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
            int drop = -1;
            for (int j = 0; j < w; ++j) {
                if (sol(n + j) < -tol && (drop < 0 || W[static_cast<std::size_t>(j)] < W[static_cast<std::size_t>(drop)])) {
                    drop = j;
                }
            }
            if (drop < 0) {
                return res;
            }
            W.erase(W.begin() + drop);
            continue;
        }
        double alpha = 1.0;
        int block = -1;
        for (int i = 0; i < k; ++i) {
            if (std::find(W.begin(), W.end(), i) != W.end()) {
                continue;
            }
            const double gp = G.row(i).dot(p);
            if (gp > tol) {
                const double step = std::max(0.0, (g(i) - G.row(i).dot(x)) / gp);
                if (step < alpha) {
                    alpha = step;
                    block = i;
                }
            }
        }
        x += alpha * p;
        if (block >= 0) {
            W.push_back(block);
        }
    }
    return res;
}

} // namespace drg

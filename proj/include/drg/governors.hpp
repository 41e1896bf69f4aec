#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"
#include "drg/lp.hpp"
#include "drg/mas.hpp"
#include "drg/qp.hpp"

namespace drg {

inline constexpr double kInfeasibleStartTol = 1e-7;
inline constexpr double kStepThreshold = 1e-12;

/// Mutable per-governor context owned by the caller.
struct GovernorState {
    Vector v_prev;
    bool initialized = false;
};

struct KappaResult {
    double kappa = 1.0;
    Vector v_new;
    int binding_row = -1;
};

namespace detail {

struct KappaProblem {
    Vector a; ///< H_v (r - v_prev)
    Vector b; ///< h - H_x x - H_v v_prev
};

inline KappaProblem kappa_problem(const Mas& mas, const Vector& x, const Vector& v_prev, const Vector& r) {
    require(x.size() == mas.n_x && v_prev.size() == mas.n_u && r.size() == mas.n_u, ErrorKind::DimensionMismatch,
            "governor step dimensions");
    const auto& H = mas.poly.H();
    const Vector hv_prev = H.rightCols(mas.n_u) * v_prev;
    KappaProblem p{H.rightCols(mas.n_u) * (r - v_prev), mas.poly.h() - H.leftCols(mas.n_x) * x - hv_prev};
    const double worst = p.b.size() ? -p.b.minCoeff() : 0.0;
    if (worst > kInfeasibleStartTol) {
        throw Error(ErrorKind::InfeasibleStart, "(x, v_prev) violates the admissible set by " + std::to_string(worst));
    }
    return p;
}

/// v_new from kappa. Saturated scalar steps are read off the binding row so
/// that box rows reproduce their bound exactly.
inline Vector finish_step(const Mas& mas, const Vector& x, const Vector& v_prev, const Vector& r, double kappa,
                          int binding) {
    if (kappa >= 1.0) {
        return r;
    }
    if (kappa <= 0.0) {
        return v_prev;
    }
    if (mas.n_u == 1 && binding >= 0) {
        const auto& H = mas.poly.H();
        const double hv = H(binding, mas.n_x);
        const double v = (mas.poly.h()(binding) - H.row(binding).head(mas.n_x).dot(x)) / hv;
        const double lo = std::min(v_prev(0), r(0));
        const double hi = std::max(v_prev(0), r(0));
        if (v >= lo && v <= hi) {
            return Vector::Constant(1, v);
        }
    }
    return v_prev + kappa * (r - v_prev);
}

} // namespace detail

/// Scalar reference governor by direct row scan.
[[nodiscard]] inline KappaResult srg_step_explicit(const Mas& mas, const Vector& x, const Vector& v_prev,
                                                   const Vector& r) {
    require(x.size() == mas.n_x && v_prev.size() == mas.n_u && r.size() == mas.n_u, ErrorKind::DimensionMismatch,
            "governor step dimensions");
    // One pass over the rows, no temporaries: a_i = H_v,i (r - v_prev), b_i = h_i - H_x,i x - H_v,i v_prev.
    const auto& H = mas.poly.H();
    const auto& h = mas.poly.h();
    const Eigen::Index nx = mas.n_x;
    const Eigen::Index nu = mas.n_u;
    double kappa = 1.0;
    double worst = 0.0;
    int binding = -1;
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        double a = 0.0;
        double b = h(i);
        for (Eigen::Index j = 0; j < nx; ++j) {
            b -= H(i, j) * x(j);
        }
        for (Eigen::Index j = 0; j < nu; ++j) {
            const double hv = H(i, nx + j);
            a += hv * (r(j) - v_prev(j));
            b -= hv * v_prev(j);
        }
        worst = std::max(worst, -b);
        if (a > kStepThreshold && b < kappa * a) {
            kappa = b / a;
            binding = static_cast<int>(i);
        }
    }
    if (worst > kInfeasibleStartTol) {
        throw Error(ErrorKind::InfeasibleStart, "(x, v_prev) violates the admissible set by " + std::to_string(worst));
    }
    kappa = std::max(0.0, kappa);
    return {kappa, detail::finish_step(mas, x, v_prev, r, kappa, binding), binding};
}

struct ScalarStep {
    double kappa = 1.0;
    double v_new = 0.0;
    int binding_row = -1;
};

/// Single-input explicit step with no heap allocation, for governor banks.
[[nodiscard]] inline ScalarStep srg_step_scalar(const Mas& mas, const Vector& x, double v_prev, double r) {
    require(mas.n_u == 1 && x.size() == mas.n_x, ErrorKind::DimensionMismatch, "governor step dimensions");
    const auto& H = mas.poly.H();
    const auto& h = mas.poly.h();
    const Eigen::Index nx = mas.n_x;
    const double d = r - v_prev;
    double kappa = 1.0;
    double worst = 0.0;
    int binding = -1;
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        const double hv = H(i, nx);
        double b = h(i);
        for (Eigen::Index j = 0; j < nx; ++j) {
            b -= H(i, j) * x(j);
        }
        b -= hv * v_prev;
        worst = std::max(worst, -b);
        const double a = hv * d;
        if (a > kStepThreshold && b < kappa * a) {
            kappa = b / a;
            binding = static_cast<int>(i);
        }
    }
    if (worst > kInfeasibleStartTol) {
        throw Error(ErrorKind::InfeasibleStart, "(x, v_prev) violates the admissible set by " + std::to_string(worst));
    }
    kappa = std::max(0.0, kappa);
    ScalarStep out{kappa, v_prev + kappa * d, binding};
    if (kappa >= 1.0) {
        out.v_new = r;
    } else if (kappa <= 0.0) {
        out.v_new = v_prev;
    } else if (binding >= 0) {
        // read the saturated value off the binding row so box rows land exactly on their bound
        const double v = (h(binding) - H.row(binding).head(nx).dot(x)) / H(binding, nx);
        if (v >= std::min(v_prev, r) && v <= std::max(v_prev, r)) {
            out.v_new = v;
        }
    }
    return out;
}

[[nodiscard]] inline KappaResult srg_step_explicit(const Mas& mas, const Vector& x, double v_prev, double r) {
    const ScalarStep s = srg_step_scalar(mas, x, v_prev, r);
    return {s.kappa, Vector::Constant(1, s.v_new), s.binding_row};
}

/// Same step posed as a generic LP over every row: max kappa s.t. a kappa <= b,
/// 0 <= kappa <= 1. The binding row is the tightest positive-direction row.
[[nodiscard]] inline KappaResult srg_step_lp(const Mas& mas, const Vector& x, const Vector& v_prev, const Vector& r) {
    const auto [a, b] = detail::kappa_problem(mas, x, v_prev, r);
    const auto k = a.size();
    Eigen::MatrixXd G(k + 2, 1);
    Vector g(k + 2);
    G.col(0).head(k) = a;
    g.head(k) = b.cwiseMax(0.0);
    G(k, 0) = 1.0;
    g(k) = 1.0;
    G(k + 1, 0) = -1.0;
    g(k + 1) = 0.0;
    const LpResult res = lp_solve(Vector::Ones(1), G, g);
    require(res.status == LpStatus::Optimal, ErrorKind::Infeasible, "governor LP failed");
    const double kappa = std::clamp(res.x(0), 0.0, 1.0);
    int binding = -1;
    if (kappa < 1.0) {
        double gap = kInf;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (a(j) > kStepThreshold) {
                const double slack = std::abs(g(j) - a(j) * kappa) / a(j);
                if (slack < gap) {
                    gap = slack;
                    binding = static_cast<int>(j);
                }
            }
        }
    }
    return {kappa, detail::finish_step(mas, x, v_prev, r, kappa, binding), binding};
}

[[nodiscard]] inline KappaResult srg_step_lp(const Mas& mas, const Vector& x, double v_prev, double r) {
    return srg_step_lp(mas, x, Vector::Constant(1, v_prev), Vector::Constant(1, r));
}

struct VrgResult {
    Vector u_new;
    Vector K; ///< diagonal of the gain matrix
    double objective = 0.0;
};

/// Vector reference governor: per-input gains from a small QP.
[[nodiscard]] inline VrgResult vrg_step(const Mas& mas, const Vector& x, const Vector& u_prev, const Vector& r) {
    const auto [a_unused, b] = detail::kappa_problem(mas, x, u_prev, r);
    (void)a_unused;
    const int m = mas.n_u;
    const Vector d = r - u_prev;
    std::vector<int> free;
    for (int j = 0; j < m; ++j) {
        if (std::abs(d(j)) > 0.0) {
            free.push_back(j);
        }
    }
    Vector K = Vector::Ones(m);
    if (!free.empty()) {
        const int f = static_cast<int>(free.size());
        const Eigen::MatrixXd Hv = mas.Hu();
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(f, f);
        Vector c(f);
        Eigen::MatrixXd G(Hv.rows() + 2 * f, f);
        Vector g(Hv.rows() + 2 * f);
        for (int j = 0; j < f; ++j) {
            const double dj = d(free[static_cast<std::size_t>(j)]);
            Q(j, j) = 2.0 * dj * dj;
            c(j) = -2.0 * dj * dj;
            G.col(j).head(Hv.rows()) = Hv.col(free[static_cast<std::size_t>(j)]) * dj;
        }
        g.head(Hv.rows()) = b.cwiseMax(0.0);
        G.bottomRows(2 * f).setZero();
        for (int j = 0; j < f; ++j) {
            G(Hv.rows() + 2 * j, j) = 1.0;
            g(Hv.rows() + 2 * j) = 1.0;
            G(Hv.rows() + 2 * j + 1, j) = -1.0;
            g(Hv.rows() + 2 * j + 1) = 0.0;
        }
        const QpResult qp = qp_active_set(Q, c, G, g, Vector::Zero(f));
        for (int j = 0; j < f; ++j) {
            K(free[static_cast<std::size_t>(j)]) = std::clamp(qp.x(j), 0.0, 1.0);
        }
    }
    Vector u = u_prev + K.cwiseProduct(d);
    for (int j = 0; j < m; ++j) {
        if (K(j) >= 1.0 - 1e-12) {
            K(j) = 1.0;
            u(j) = r(j);
        }
    }
    return {u, K, (u - r).squaredNorm()};
}

/// One explicit scalar governor per decoupled channel.
[[nodiscard]] inline std::vector<KappaResult> srg_bank_step(const std::vector<Mas>& mas_list,
                                                            const std::vector<Vector>& x_list, const Vector& v_prev,
                                                            const Vector& r_prime) {
    const auto m = mas_list.size();
    require(x_list.size() == m && static_cast<std::size_t>(v_prev.size()) == m &&
                static_cast<std::size_t>(r_prime.size()) == m,
            ErrorKind::DimensionMismatch, "bank sizes disagree");
    std::vector<KappaResult> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        try {
            out.push_back(srg_step_explicit(mas_list[i], x_list[i], v_prev(static_cast<Eigen::Index>(i)),
                                            r_prime(static_cast<Eigen::Index>(i))));
        } catch (const Error& e) {
            throw Error(e.kind(), "channel " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

} // namespace drg

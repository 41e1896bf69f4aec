#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drg/error.hpp"
#include "drg/linear_system.hpp"
#include "drg/polytope.hpp"

namespace drg {

inline constexpr double kDefaultEpsilon = 0.01;
inline constexpr int kDefaultTmax = 500;

/// Maximal admissible set over stacked (x0, u0).
struct Mas {
    Polytope poly;
    int n_x = 0;
    int n_u = 0;
    int t_star = 0;
    double epsilon = 0.0;
    int channel = -1; ///< decoupled channel index, -1 for a centralized set

    [[nodiscard]] bool contains(const Vector& x, const Vector& u, double tol = kMembershipTol) const {
        require(x.size() == n_x && u.size() == n_u, ErrorKind::DimensionMismatch, "MAS membership dimension");
        Vector z(n_x + n_u);
        z << x, u;
        return poly.contains(z, tol);
    }
    [[nodiscard]] Eigen::MatrixXd Hx() const { return poly.H().leftCols(n_x); }
    [[nodiscard]] Eigen::MatrixXd Hu() const { return poly.H().rightCols(n_u); }
};

namespace detail {

/// Appends the finite sides of `lo <= M z <= hi` as rows.
inline void push_bounded_rows(std::vector<std::pair<Eigen::RowVectorXd, double>>& rows, const Eigen::MatrixXd& M,
                              const Box& Y) {
    for (int i = 0; i < M.rows(); ++i) {
        if (std::isfinite(Y.upper(i))) {
            rows.emplace_back(M.row(i), Y.upper(i));
        }
        if (std::isfinite(Y.lower(i))) {
            rows.emplace_back(-M.row(i), -Y.lower(i));
        }
    }
}

/// Shared horizon loop: steady rows first, then output rows at t = 0, 1, ...
/// until every new row is implied by what is already there.
inline Mas build_mas_core(const LinearSystem& S, const std::function<Box(int)>& Yt, const Box& Yss, double epsilon,
                          int t_max) {
    require(S.is_stable(), ErrorKind::UnstableSystem, "MAS needs an asymptotically stable system");
    const int n = S.n();
    const int m = S.m();
    const DcGain G0 = dc_gain(S);
    const Matrix Xss = steady_state_map(S);
    std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
    {
        Eigen::MatrixXd M(S.p(), n + m);
        M << Eigen::MatrixXd::Zero(S.p(), n), G0;
        push_bounded_rows(rows, M, Yss);
    }
    Matrix CAt = S.C();
    for (int t = 0; t <= t_max; ++t) {
        Eigen::MatrixXd M(S.p(), n + m);
        M << CAt, G0 - CAt * Xss;
        std::vector<std::pair<Eigen::RowVectorXd, double>> fresh;
        push_bounded_rows(fresh, M, Yt(t));
        const Polytope acc = Polytope::from_rows(rows, n + m);
        bool all_redundant = true;
        double worst = 0.0;
        std::string worst_row;
        for (const auto& [a, b] : fresh) {
            if (!is_redundant(acc, a, b)) {
                all_redundant = false;
                const LpResult r = lp_solve(a.transpose(), acc.H(), acc.h());
                const double excess = r.status == LpStatus::Optimal ? r.value - b : kInf;
                if (excess >= worst) {
                    worst = excess;
                    std::ostringstream os;
                    os << "t=" << t << " row=[" << a << "] bound=" << b << " excess=" << excess;
                    worst_row = os.str();
                }
            }
        }
        if (all_redundant) {
            Mas out{remove_redundant(Polytope::from_rows(rows, n + m)), n, m, t, epsilon, -1};
            return out;
        }
        if (t == t_max) {
            throw Error(ErrorKind::NotFinitelyDetermined,
                        "no redundancy by t_max=" + std::to_string(t_max) + "; worst " + worst_row);
        }
        rows.insert(rows.end(), fresh.begin(), fresh.end());
        CAt = CAt * S.A();
    }
    throw Error(ErrorKind::NotFinitelyDetermined, "horizon exhausted");
}

} // namespace detail

/// Nominal MAS with steady-state tightening G0 u0 in (1 - eps) Y.
[[nodiscard]] inline Mas build_mas(const LinearSystem& S, const Box& Y, double epsilon = kDefaultEpsilon,
                                   int t_max = kDefaultTmax) {
    require(Y.dim() == S.p(), ErrorKind::DimensionMismatch, "constraint box must match output count");
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::Validation, "epsilon must lie in (0, 1)");
    return detail::build_mas_core(S, [&](int) { return Y; }, Y.scaled(1.0 - epsilon), epsilon, t_max);
}

/// Tightened output sets Y_0 = Y ~ Dw W, Y_{t+1} = Y_t ~ C A^t Bw W for t < T.
/// With `settle_tol` > 0 the sequence stops early once a step moves no bound
/// by more than that amount.
[[nodiscard]] inline std::vector<Box> tightened_sequence(const LinearSystem& S, const Box& Y, const Box& W, int T,
                                                         double settle_tol = 0.0) {
    require(W.dim() == S.nw(), ErrorKind::DimensionMismatch, "disturbance box must match disturbance channels");
    require(W.bounded(), ErrorKind::Validation, "disturbance box must be bounded");
    std::vector<Box> seq;
    double moved = 0.0;
    const auto shrink = [&](const Box& B, const Matrix& M) {
        Vector lo = B.lower;
        Vector hi = B.upper;
        moved = 0.0;
        for (int i = 0; i < M.rows(); ++i) {
            const double up = W.support(M.row(i));
            const double down = W.support(-M.row(i));
            hi(i) -= up;
            lo(i) += down;
            moved = std::max({moved, up, down});
            require(lo(i) <= hi(i), ErrorKind::EmptyRobustMas,
                    "disturbance consumes the constraint set on output " + std::to_string(i));
        }
        return Box(lo, hi);
    };
    seq.push_back(shrink(Y, S.Dw()));
    Matrix CAt = S.C();
    for (int t = 0; t < T; ++t) {
        seq.push_back(shrink(seq.back(), CAt * S.Bw()));
        CAt = CAt * S.A();
        if (settle_tol > 0.0 && moved < settle_tol && t >= S.n()) {
            break;
        }
    }
    return seq;
}

/// Robust MAS under a box disturbance. The steady rows use the settled limit
/// of the tightened sequence.
[[nodiscard]] inline Mas build_robust_mas(const LinearSystem& S, const Box& Y, const Box& W,
                                          double epsilon = kDefaultEpsilon, int t_max = kDefaultTmax) {
    require(Y.dim() == S.p(), ErrorKind::DimensionMismatch, "constraint box must match output count");
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::Validation, "epsilon must lie in (0, 1)");
    require(S.is_stable(), ErrorKind::UnstableSystem, "MAS needs an asymptotically stable system");
    const std::vector<Box> seq = tightened_sequence(S, Y, W, 100 * (t_max + 1), 1e-14);
    const Box terminal = seq.back().scaled(1.0 - epsilon);
    for (int i = 0; i < terminal.dim(); ++i) {
        require(terminal.lower(i) < 0.0 && terminal.upper(i) > 0.0, ErrorKind::EmptyRobustMas,
                "tightened constraint set no longer contains the origin");
    }
    const auto Yt = [&](int t) {
        return seq[static_cast<std::size_t>(std::min<int>(t, static_cast<int>(seq.size()) - 1))];
    };
    try {
        return detail::build_mas_core(S, Yt, terminal, epsilon, t_max);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::EmptyPolytope) {
            throw Error(ErrorKind::EmptyRobustMas, "robust MAS is empty");
        }
        throw;
    }
}

/// Set for a pure-delay channel: only v0 in Y_i, no tightening.
[[nodiscard]] inline Mas delay_mas(const Box& Yi, int n_states) {
    require(Yi.dim() == 1, ErrorKind::DimensionMismatch, "delay MAS takes a scalar interval");
    std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
    detail::push_bounded_rows(rows, [&] {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(1, n_states + 1);
        M(0, n_states) = 1.0;
        return M;
    }(), Yi);
    return {Polytope::from_rows(rows, n_states + 1), n_states, 1, 0, 0.0, -1};
}

/// Brute force: y(t) in Y for t = 0..horizon under constant u0.
[[nodiscard]] inline bool admissible_oracle(const LinearSystem& S, const Vector& x0, const Vector& u0, const Box& Y,
                                            int horizon) {
    Vector x = x0;
    for (int t = 0; t <= horizon; ++t) {
        const Vector y = S.C() * x + S.D() * u0;
        if (!Y.contains(y)) {
            return false;
        }
        x = S.A() * x + S.B() * u0;
    }
    return true;
}

/// Interval [min, max] of input coordinate j over the set.
[[nodiscard]] inline std::pair<double, double> input_interval(const Mas& mas, int j) {
    Vector c = Vector::Zero(mas.n_x + mas.n_u);
    c(mas.n_x + j) = 1.0;
    return {-lp_max(-c, mas.poly).first, lp_max(c, mas.poly).first};
}

/// Monte Carlo volume of the projection of the set onto its input coordinates.
/// Membership of a sample u is an LP feasibility test over x.
[[nodiscard]] inline double input_projection_volume(const Mas& mas, std::size_t samples, std::uint64_t seed) {
    Vector lo(mas.n_u);
    Vector hi(mas.n_u);
    for (int j = 0; j < mas.n_u; ++j) {
        std::tie(lo(j), hi(j)) = input_interval(mas, j);
    }
    const Vector pad = (hi - lo) * 0.1;
    const Box bounding(lo - pad, hi + pad);
    if (mas.n_u == 1 && mas.n_x >= 0) {
        const Polytope segment = Polytope::from_box(Box(lo, hi));
        return volume_mc(segment, bounding, samples, seed);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const Eigen::MatrixXd Hx = mas.Hx();
    const Eigen::MatrixXd Hu = mas.Hu();
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        Vector u(mas.n_u);
        for (int j = 0; j < mas.n_u; ++j) {
            u(j) = bounding.lower(j) + (bounding.upper(j) - bounding.lower(j)) * u01(rng);
        }
        const Vector rhs = mas.poly.h() - Hu * u;
        if (mas.n_x == 0 ? (rhs.array() >= 0.0).all()
                         : lp_solve(Vector::Zero(mas.n_x), Hx, rhs).status != LpStatus::Infeasible) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(samples) * bounding.volume();
}

/// Cache file: "# {json metadata}" header line followed by "H | h" rows.
inline void save_mas(const Mas& mas, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
    nlohmann::json meta{{"n_x", mas.n_x}, {"n_u", mas.n_u},      {"t_star", mas.t_star},
                        {"epsilon", mas.epsilon}, {"channel", mas.channel}, {"rows", mas.poly.rows()}};
    out << "# " << meta.dump() << '\n' << mas.poly.serialize();
}

[[nodiscard]] inline Mas load_mas(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path);
    std::string header;
    std::getline(in, header);
    require(header.rfind("# ", 0) == 0, ErrorKind::Io, "missing MAS metadata header in " + path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(header.substr(2));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Io, std::string("bad MAS metadata: ") + e.what());
    }
    std::stringstream body;
    body << in.rdbuf();
    Mas mas;
    mas.n_x = meta.at("n_x").get<int>();
    mas.n_u = meta.at("n_u").get<int>();
    mas.t_star = meta.at("t_star").get<int>();
    mas.epsilon = meta.at("epsilon").get<double>();
    mas.channel = meta.value("channel", -1);
    mas.poly = Polytope::parse(body.str(), mas.n_x + mas.n_u);
    return mas;
}

} // namespace drg

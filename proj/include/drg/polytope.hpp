#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"
#include "drg/lp.hpp"

namespace drg {

inline constexpr double kMembershipTol = 1e-9;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned box; bounds may be infinite for one-sided constraints.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Box() = default;
    Box(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        require(lower.size() == upper.size(), ErrorKind::DimensionMismatch, "box bounds size");
        for (int i = 0; i < lower.size(); ++i) {
            require(!std::isnan(lower(i)) && !std::isnan(upper(i)), ErrorKind::Validation, "box bound is NaN");
            require(lower(i) <= upper(i), ErrorKind::Validation, "box lower bound exceeds upper bound");
        }
    }
    static Box symmetric(const Eigen::VectorXd& half) { return {-half, half}; }
    static Box interval(double lo, double hi) {
        return {Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi)};
    }
    static Box point(const Eigen::VectorXd& p) { return {p, p}; }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(lower.size()); }
    [[nodiscard]] bool bounded() const { return lower.allFinite() && upper.allFinite(); }
    [[nodiscard]] Eigen::VectorXd center() const { return (lower + upper) / 2.0; }
    [[nodiscard]] Eigen::VectorXd half_width() const { return (upper - lower) / 2.0; }
    [[nodiscard]] double volume() const { return (upper - lower).prod(); }
    [[nodiscard]] bool contains(const Eigen::VectorXd& z, double tol = kMembershipTol) const {
        require(z.size() == dim(), ErrorKind::DimensionMismatch, "box membership dimension");
        return ((z - upper).array() <= tol).all() && ((lower - z).array() <= tol).all();
    }
    /// Componentwise scaling about the origin, e.g. (1 - eps) Y.
    [[nodiscard]] Box scaled(double s) const { return {lower * s, upper * s}; }
    [[nodiscard]] Box component(int i) const { return interval(lower(i), upper(i)); }

    /// max over the box of r'w; +inf if r has weight on an unbounded side.
    [[nodiscard]] double support(const Eigen::RowVectorXd& r) const {
        double s = 0.0;
        for (int j = 0; j < dim(); ++j) {
            if (r(j) > 0.0) {
                s += r(j) * upper(j);
            } else if (r(j) < 0.0) {
                s += r(j) * lower(j);
            }
        }
        return s;
    }
};

/// Halfspace representation {z : H z <= h}.
class Polytope {
public:
    Polytope() = default;
    Polytope(Eigen::MatrixXd H, Eigen::VectorXd h) : H_(std::move(H)), h_(std::move(h)) {
        require(H_.rows() == h_.size(), ErrorKind::DimensionMismatch, "polytope row count");
        require(!H_.hasNaN() && !h_.hasNaN(), ErrorKind::Validation, "polytope contains NaN");
    }
    /// Empty row set in dimension n (the whole space).
    static Polytope universe(int n) { return {Eigen::MatrixXd(0, n), Eigen::VectorXd(0)}; }

    /// Finite bounds of a box as rows; infinite sides are dropped.
    static Polytope from_box(const Box& b) {
        std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
        for (int i = 0; i < b.dim(); ++i) {
            Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(b.dim());
            e(i) = 1.0;
            if (std::isfinite(b.upper(i))) {
                rows.emplace_back(e, b.upper(i));
            }
            if (std::isfinite(b.lower(i))) {
                rows.emplace_back(-e, -b.lower(i));
            }
        }
        return from_rows(rows, b.dim());
    }

    static Polytope from_rows(const std::vector<std::pair<Eigen::RowVectorXd, double>>& rows, int n) {
        Eigen::MatrixXd H(static_cast<Eigen::Index>(rows.size()), n);
        Eigen::VectorXd h(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            H.row(static_cast<Eigen::Index>(i)) = rows[i].first;
            h(static_cast<Eigen::Index>(i)) = rows[i].second;
        }
        return {H, h};
    }

    [[nodiscard]] const Eigen::MatrixXd& H() const noexcept { return H_; }
    [[nodiscard]] const Eigen::VectorXd& h() const noexcept { return h_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(H_.cols()); }
    [[nodiscard]] int rows() const noexcept { return static_cast<int>(H_.rows()); }

    [[nodiscard]] bool contains(const Eigen::VectorXd& z, double tol = kMembershipTol) const {
        require(z.size() == dim(), ErrorKind::DimensionMismatch, "polytope membership dimension");
        if (rows() == 0) {
            return true;
        }
        return ((H_ * z - h_).array() <= tol).all();
    }

    /// Row-stacked intersection.
    [[nodiscard]] Polytope intersect(const Polytope& o) const {
        require(o.dim() == dim(), ErrorKind::DimensionMismatch, "intersection dimension");
        Eigen::MatrixXd H(rows() + o.rows(), dim());
        Eigen::VectorXd h(rows() + o.rows());
        H << H_, o.H_;
        h << h_, o.h_;
        return {H, h};
    }

    /// "H | h" rows, %.17g so that a round trip is exact.
    [[nodiscard]] std::string serialize() const {
        std::string out;
        char buf[40];
        for (int i = 0; i < rows(); ++i) {
            for (int j = 0; j < dim(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", H_(i, j));
                out += (j ? " " : "");
                out += buf;
            }
            std::snprintf(buf, sizeof buf, "%.17g", h_(i));
            out += " | ";
            out += buf;
            out += '\n';
        }
        return out;
    }

    static Polytope parse(const std::string& text, int n) {
        std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty() || line[0] == '#') {
                continue;
            }
            const auto bar = line.find('|');
            require(bar != std::string::npos, ErrorKind::Io, "polytope row without '|': " + line);
            std::istringstream lhs(line.substr(0, bar));
            std::vector<double> vals;
            double v = 0.0;
            while (lhs >> v) {
                vals.push_back(v);
            }
            require(static_cast<int>(vals.size()) == n, ErrorKind::Io, "polytope row has wrong width");
            double rhs = 0.0;
            std::istringstream r(line.substr(bar + 1));
            require(static_cast<bool>(r >> rhs), ErrorKind::Io, "polytope row without bound");
            rows.emplace_back(Eigen::Map<Eigen::RowVectorXd>(vals.data(), n), rhs);
        }
        return from_rows(rows, n);
    }

private:
    Eigen::MatrixXd H_ = Eigen::MatrixXd(0, 0);
    Eigen::VectorXd h_ = Eigen::VectorXd(0);
};

/// max c'z over P.
[[nodiscard]] inline std::pair<double, Eigen::VectorXd> lp_max(const Eigen::VectorXd& c, const Polytope& P) {
    const LpResult r = lp_solve(c, P.H(), P.h());
    require(r.status != LpStatus::Infeasible, ErrorKind::Infeasible, "LP over an empty polytope");
    require(r.status != LpStatus::Unbounded, ErrorKind::Unbounded, "LP unbounded in the requested direction");
    return {r.value, r.x};
}

[[nodiscard]] inline bool is_empty(const Polytope& P) {
    return lp_solve(Eigen::VectorXd::Zero(P.dim()), P.H(), P.h()).status == LpStatus::Infeasible;
}

/// Pontryagin difference P ~ M W for a box W: each bound drops by the support
/// of H_i M over W.
[[nodiscard]] inline Polytope p_subtract(const Polytope& P, const Eigen::MatrixXd& M, const Box& W) {
    require(M.rows() == P.dim() && M.cols() == W.dim(), ErrorKind::DimensionMismatch, "p_subtract dimensions");
    Eigen::VectorXd h = P.h();
    const Eigen::MatrixXd HM = P.H() * M;
    for (int i = 0; i < P.rows(); ++i) {
        h(i) -= W.support(HM.row(i));
        require(std::isfinite(h(i)), ErrorKind::EmptyResult, "unbounded disturbance direction");
    }
    Polytope out(P.H(), h);
    require(!is_empty(out), ErrorKind::EmptyResult, "Pontryagin difference is empty");
    return out;
}

/// Same difference for a set given by its vertices.
[[nodiscard]] inline Polytope p_subtract(const Polytope& P, const Eigen::MatrixXd& M,
                                         const std::vector<Eigen::VectorXd>& vertices) {
    Eigen::VectorXd h = P.h();
    for (int i = 0; i < P.rows(); ++i) {
        double s = -kInf;
        for (const auto& w : vertices) {
            s = std::max(s, P.H().row(i).dot(M * w));
        }
        h(i) -= vertices.empty() ? 0.0 : s;
    }
    Polytope out(P.H(), h);
    require(!is_empty(out), ErrorKind::EmptyResult, "Pontryagin difference is empty");
    return out;
}

/// True if row (a, b) is implied by P (within `tol` after normalization).
[[nodiscard]] inline bool is_redundant(const Polytope& P, const Eigen::RowVectorXd& a, double b, double tol = 1e-9) {
    const double nrm = a.norm();
    if (nrm == 0.0) {
        return b >= -tol;
    }
    Eigen::MatrixXd H(P.rows() + 1, P.dim());
    Eigen::VectorXd h(P.rows() + 1);
    H << P.H(), a / nrm;
    h << P.h(), b / nrm + 1.0;
    const LpResult r = lp_solve(a.transpose() / nrm, H, h);
    if (r.status != LpStatus::Optimal) {
        return r.status == LpStatus::Infeasible;
    }
    return r.value <= b / nrm + tol;
}

/// Drops every row implied by the others.
[[nodiscard]] inline Polytope remove_redundant(const Polytope& P, double tol = 1e-9) {
    require(!is_empty(P), ErrorKind::EmptyPolytope, "cannot reduce an empty polytope");
    std::vector<bool> keep(static_cast<std::size_t>(P.rows()), true);
    for (int i = 0; i < P.rows(); ++i) {
        if (P.H().row(i).norm() == 0.0) {
            keep[static_cast<std::size_t>(i)] = false;
            continue;
        }
        std::vector<std::pair<Eigen::RowVectorXd, double>> others;
        for (int j = 0; j < P.rows(); ++j) {
            if (j != i && keep[static_cast<std::size_t>(j)]) {
                others.emplace_back(P.H().row(j), P.h()(j));
            }
        }
        if (is_redundant(Polytope::from_rows(others, P.dim()), P.H().row(i), P.h()(i), tol)) {
            keep[static_cast<std::size_t>(i)] = false;
        }
    }
    std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
    for (int i = 0; i < P.rows(); ++i) {
        if (keep[static_cast<std::size_t>(i)]) {
            rows.emplace_back(P.H().row(i), P.h()(i));
        }
    }
    return Polytope::from_rows(rows, P.dim());
}

/// Monte Carlo volume: hit fraction of uniform samples in `bounding` times its volume.
[[nodiscard]] inline double volume_mc(const Polytope& P, const Box& bounding, std::size_t samples,
                                      std::uint64_t seed) {
    require(bounding.dim() == P.dim() && bounding.bounded(), ErrorKind::DimensionMismatch,
            "volume needs a bounded box of matching dimension");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t hits = 0;
    Eigen::VectorXd z(P.dim());
    const Eigen::VectorXd width = bounding.upper - bounding.lower;
    for (std::size_t s = 0; s < samples; ++s) {
        for (int j = 0; j < P.dim(); ++j) {
            z(j) = bounding.lower(j) + width(j) * u(rng);
        }
        if (P.contains(z, 0.0)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(samples) * bounding.volume();
}

/// Tight bounding box by 2n support LPs.
[[nodiscard]] inline Box bounding_box(const Polytope& P) {
    Eigen::VectorXd lo(P.dim());
    Eigen::VectorXd hi(P.dim());
    for (int j = 0; j < P.dim(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(P.dim());
        e(j) = 1.0;
        hi(j) = lp_max(e, P).first;
        lo(j) = -lp_max(-e, P).first;
    }
    return {lo, hi};
}

} // namespace drg

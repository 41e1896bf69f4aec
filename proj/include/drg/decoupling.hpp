#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"
#include "drg/linear_system.hpp"
#include "drg/norms.hpp"
#include "drg/rational.hpp"
#include "drg/realization.hpp"

namespace drg {

inline constexpr double kInverseStabilityMargin = 1e-6;
inline constexpr double kMarkovTol = 1e-10;

/// Pre/post filters of the transfer-function designs. With u = F v and
/// r' = F_inv r the plant seen by the governors is W.
struct TfDecoupling {
    RationalMatrix F;
    RationalMatrix F_inv;
    RationalMatrix W; ///< diagonal, includes the z^{-beta1} pad
    int beta1 = 0;
    int beta2 = 0;
};

/// u = Phi x + Gamma v
struct SsDecoupling {
    Matrix Phi;
    Matrix Gamma;
    std::vector<int> d;
    Matrix A_star;
    Matrix B_star;
};

struct FwIndices {
    std::vector<int> d;
    Matrix A_star;
    Matrix B_star;
};

[[nodiscard]] inline double max_pole_modulus(const RationalMatrix& M) {
    double worst = 0.0;
    for (const auto& e : M.entries()) {
        for (const auto& p : e.poles()) {
            worst = std::max(worst, std::abs(p));
        }
    }
    return worst;
}

namespace detail {

inline void require_stable_filter(const RationalMatrix& M, const std::string& name) {
    const double rho = max_pole_modulus(M);
    require(rho < 1.0 - kInverseStabilityMargin, ErrorKind::UnstableInverse,
            name + " has a pole of modulus " + std::to_string(rho));
}

} // namespace detail

/// W = diag(G_11, ..., G_mm) z^{-beta1}, F = G^{-1} diag(G_ii) z^{-beta1},
/// F_inv = diag(G_ii)^{-1} G z^{-beta2}.
[[nodiscard]] inline TfDecoupling design_tf_diagonal(const RationalMatrix& G) {
    require(G.is_square(), ErrorKind::DimensionMismatch, "decoupling needs a square plant");
    const int m = G.rows();
    std::vector<RationalTf> diag;
    for (int i = 0; i < m; ++i) {
        require(!G(i, i).is_zero(), ErrorKind::SingularTransferMatrix,
                "diagonal entry " + std::to_string(i) + " is identically zero");
        diag.push_back(G(i, i));
    }
    const RationalMatrix Wd = RationalMatrix::diagonal(diag);
    std::vector<RationalTf> inv_diag;
    for (const auto& g : diag) {
        inv_diag.push_back(g.reciprocal());
    }
    auto [F, beta1] = make_proper(rational_inverse(G) * Wd);
    auto [F_inv, beta2] = make_proper(RationalMatrix::diagonal(inv_diag) * G);
    detail::require_stable_filter(F, "F");
    detail::require_stable_filter(F_inv, "F_inv");
    return {std::move(F), std::move(F_inv), Wd * RationalTf::delay(beta1), beta1, beta2};
}

/// W = z^{-beta1} I, F = G^{-1} z^{-beta1}, F_inv = G.
[[nodiscard]] inline TfDecoupling design_tf_identity(const RationalMatrix& G) {
    require(G.is_square(), ErrorKind::DimensionMismatch, "decoupling needs a square plant");
    require(G.is_proper(), ErrorKind::ImproperEntry, "plant must be proper");
    auto [F, beta1] = make_proper(rational_inverse(G));
    detail::require_stable_filter(F, "F");
    detail::require_stable_filter(G, "F_inv");
    const RationalMatrix W = RationalMatrix::identity(G.rows()) * RationalTf::delay(beta1);
    return {std::move(F), G, W, beta1, 0};
}

[[nodiscard]] inline FwIndices fw_indices(const LinearSystem& S) {
    require(S.D().isZero(0.0), ErrorKind::Validation, "state-feedback decoupling needs D = 0");
    const int n = S.n();
    const int m = S.p();
    FwIndices out{std::vector<int>(static_cast<std::size_t>(m), std::max(0, n - 1)), Matrix(m, n), Matrix(m, S.m())};
    for (int i = 0; i < m; ++i) {
        Eigen::RowVectorXd CiAj = S.C().row(i);
        for (int j = 0; j < n; ++j) {
            if ((CiAj * S.B()).cwiseAbs().maxCoeff() > kMarkovTol) {
                out.d[static_cast<std::size_t>(i)] = j;
                break;
            }
            CiAj = CiAj * S.A();
        }
        Eigen::RowVectorXd row = S.C().row(i);
        for (int j = 0; j < out.d[static_cast<std::size_t>(i)]; ++j) {
            row = row * S.A();
        }
        out.B_star.row(i) = row * S.B();
        out.A_star.row(i) = row * S.A();
    }
    return out;
}

namespace detail {

inline Eigen::FullPivLU<Matrix> b_star_lu(const FwIndices& fw) {
    require(fw.B_star.rows() == fw.B_star.cols(), ErrorKind::DimensionMismatch, "B* must be square");
    Eigen::FullPivLU<Matrix> lu(fw.B_star);
    lu.setThreshold(1e-12);
    require(lu.isInvertible(), ErrorKind::SingularBStar, "B* is singular, the plant cannot be decoupled");
    return lu;
}

} // namespace detail

/// Phi = -B*^{-1} A*, Gamma = B*^{-1}; gives y_i(t + d_i + 1) = v_i(t).
[[nodiscard]] inline SsDecoupling fw_identity_pair(const LinearSystem& S) {
    FwIndices fw = fw_indices(S);
    const auto lu = detail::b_star_lu(fw);
    const Matrix Gamma = lu.inverse();
    return {-Gamma * fw.A_star, Gamma, std::move(fw.d), std::move(fw.A_star), std::move(fw.B_star)};
}

/// Phi = B*^{-1} (sum_k M_k C A^k - A*) for k = 0..max d_i; missing M_k are zero.
[[nodiscard]] inline SsDecoupling fw_pole_assignment_pair(const LinearSystem& S, const std::vector<Matrix>& M) {
    FwIndices fw = fw_indices(S);
    const auto lu = detail::b_star_lu(fw);
    const int m = S.p();
    const int delta = fw.d.empty() ? 0 : *std::max_element(fw.d.begin(), fw.d.end());
    Matrix acc = -fw.A_star;
    Matrix CAk = S.C();
    for (int k = 0; k <= delta && k < static_cast<int>(M.size()); ++k) {
        const Matrix& Mk = M[static_cast<std::size_t>(k)];
        require(Mk.rows() == m && Mk.cols() == m, ErrorKind::DimensionMismatch, "M_k must be m x m");
        require((Mk - Matrix(Mk.diagonal().asDiagonal())).isZero(0.0), ErrorKind::Validation, "M_k must be diagonal");
        acc += Mk * CAk;
        CAk = CAk * S.A();
    }
    const Matrix Gamma = lu.inverse();
    return {Gamma * acc, Gamma, std::move(fw.d), std::move(fw.A_star), std::move(fw.B_star)};
}

/// v -> y under u = Phi x + Gamma v.
[[nodiscard]] inline LinearSystem closed_loop(const LinearSystem& S, const SsDecoupling& dec) {
    require(dec.Phi.rows() == S.m() && dec.Phi.cols() == S.n(), ErrorKind::DimensionMismatch, "Phi shape");
    return {S.A() + S.B() * dec.Phi, S.B() * dec.Gamma, S.C(), S.D() * dec.Gamma, S.Bw(), S.Dw()};
}

/// L1 norm of Q = Gamma^{-1} Phi (zI - A - B Phi)^{-1} B Gamma, the loop the
/// governor outputs see through the state feedback. Below 1 certifies BIBO
/// stability of the state-feedback scheme.
[[nodiscard]] inline double small_gain_certificate(const LinearSystem& S, const SsDecoupling& dec,
                                                   double tail_tol = 1e-9) {
    const Matrix Abar = S.A() + S.B() * dec.Phi;
    const double rho = S.n() ? Abar.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
    require(rho < 1.0, ErrorKind::UnstableLoop, "A + B Phi has spectral radius " + std::to_string(rho));
    const Matrix Ginv = dec.Gamma.fullPivLu().inverse();
    const LinearSystem Q(Abar, S.B() * dec.Gamma, Ginv * dec.Phi, Matrix::Zero(S.m(), S.m()));
    return l1_impulse_norm(Q, tail_tol);
}

/// Input correction for a plant starting at x0. The free response C A^t x0
/// cannot be touched before the inverse's delay rho (rho = properness pad of
/// G^{-1}), so the generator cancels it from t = rho on:
/// u_ic = -(G^{-1} z^{-rho}) M(z) A^rho x0, with M(z) the transform of C A^t.
class IcCancellation {
public:
    IcCancellation(const RationalMatrix& G, const LinearSystem& plant, const Vector& x0) : plant_(plant) {
        require(G.is_square() && G.rows() == plant.p() && G.cols() == plant.m(), ErrorKind::DimensionMismatch,
                "plant transfer matrix and realization disagree");
        require(x0.size() == plant.n(), ErrorKind::DimensionMismatch, "x0 size");
        auto [filter, rho] = make_proper(rational_inverse(G));
        detail::require_stable_filter(filter, "G^{-1}");
        rho_ = rho;
        filter_ = realize(filter);
        xi_ = x0;
        for (int k = 0; k < rho_; ++k) {
            xi_ = plant_.A() * xi_;
        }
        xf_ = Vector::Zero(filter_.n());
    }

    [[nodiscard]] int rho() const noexcept { return rho_; }

    /// u_ic(t) for the next t, starting at t = 0.
    [[nodiscard]] Vector next() {
        const Vector m = plant_.C() * xi_;
        const Vector u = -(filter_.C() * xf_ + filter_.D() * m);
        xf_ = filter_.A() * xf_ + filter_.B() * m;
        xi_ = plant_.A() * xi_;
        return u;
    }

private:
    LinearSystem plant_;
    LinearSystem filter_;
    int rho_ = 0;
    Vector xi_;
    Vector xf_;
};

} // namespace drg

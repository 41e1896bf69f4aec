#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"

namespace drg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using DcGain = Eigen::MatrixXd;

/// Discrete-time state-space model
///   x(t+1) = A x + B u + Bw w,  y = C x + D u + Dw w.
/// Bw and Dw have zero columns when there is no disturbance channel.
class LinearSystem {
public:
    LinearSystem() = default;
    LinearSystem(Matrix A, Matrix B, Matrix C, Matrix D) : LinearSystem(A, B, C, D, Matrix(), Matrix()) {}
    LinearSystem(Matrix A, Matrix B, Matrix C, Matrix D, Matrix Bw, Matrix Dw)
        : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)), Bw_(std::move(Bw)), Dw_(std::move(Dw)) {
        const auto n = A_.rows();
        if (Bw_.size() == 0 && Dw_.size() == 0) {
            const auto nd = std::max(Bw_.cols(), Dw_.cols());
            Bw_ = Matrix::Zero(n, nd);
            Dw_ = Matrix::Zero(C_.rows(), nd);
        } else if (Dw_.size() == 0) {
            Dw_ = Matrix::Zero(C_.rows(), Bw_.cols());
        } else if (Bw_.size() == 0) {
            Bw_ = Matrix::Zero(n, Dw_.cols());
        }
        require(A_.cols() == n, ErrorKind::DimensionMismatch, "A must be square");
        require(B_.rows() == n, ErrorKind::DimensionMismatch, "B rows must equal state dimension");
        require(C_.cols() == n, ErrorKind::DimensionMismatch, "C cols must equal state dimension");
        require(D_.rows() == C_.rows() && D_.cols() == B_.cols(), ErrorKind::DimensionMismatch, "D must be p x m");
        require(Bw_.rows() == n && Dw_.rows() == C_.rows() && Bw_.cols() == Dw_.cols(), ErrorKind::DimensionMismatch,
                "disturbance matrices inconsistent");
    }

    [[nodiscard]] const Matrix& A() const noexcept { return A_; }
    [[nodiscard]] const Matrix& B() const noexcept { return B_; }
    [[nodiscard]] const Matrix& C() const noexcept { return C_; }
    [[nodiscard]] const Matrix& D() const noexcept { return D_; }
    [[nodiscard]] const Matrix& Bw() const noexcept { return Bw_; }
    [[nodiscard]] const Matrix& Dw() const noexcept { return Dw_; }

    [[nodiscard]] int n() const noexcept { return static_cast<int>(A_.rows()); }
    [[nodiscard]] int m() const noexcept { return static_cast<int>(B_.cols()); }
    [[nodiscard]] int p() const noexcept { return static_cast<int>(C_.rows()); }
    [[nodiscard]] int nw() const noexcept { return static_cast<int>(Bw_.cols()); }

    [[nodiscard]] double spectral_radius() const {
        if (n() == 0) {
            return 0.0;
        }
        return A_.eigenvalues().cwiseAbs().maxCoeff();
    }
    [[nodiscard]] bool is_stable() const { return spectral_radius() < 1.0; }

    /// Copy with new disturbance channels.
    [[nodiscard]] LinearSystem with_disturbance(Matrix Bw, Matrix Dw) const {
        return {A_, B_, C_, D_, std::move(Bw), std::move(Dw)};
    }

private:
    Matrix A_ = Matrix::Zero(0, 0);
    Matrix B_ = Matrix::Zero(0, 0);
    Matrix C_ = Matrix::Zero(0, 0);
    Matrix D_ = Matrix::Zero(0, 0);
    Matrix Bw_ = Matrix::Zero(0, 0);
    Matrix Dw_ = Matrix::Zero(0, 0);
};

[[nodiscard]] inline DcGain dc_gain(const LinearSystem& s) {
    if (s.n() == 0) {
        return s.D();
    }
    const Matrix I = Matrix::Identity(s.n(), s.n());
    Eigen::FullPivLU<Matrix> lu(I - s.A());
    lu.setThreshold(1e-12);
    require(lu.isInvertible(), ErrorKind::PoleAtOne, "A has an eigenvalue at 1");
    return s.C() * lu.solve(s.B()) + s.D();
}

/// (I - A)^{-1} B, the steady state per unit constant input.
[[nodiscard]] inline Matrix steady_state_map(const LinearSystem& s) {
    if (s.n() == 0) {
        return Matrix::Zero(0, s.m());
    }
    Eigen::FullPivLU<Matrix> lu(Matrix::Identity(s.n(), s.n()) - s.A());
    lu.setThreshold(1e-12);
    require(lu.isInvertible(), ErrorKind::PoleAtOne, "A has an eigenvalue at 1");
    return lu.solve(s.B());
}

struct Trajectory {
    Matrix states;  ///< n x (T+1)
    Matrix outputs; ///< p x T
};

/// Forward recursion. Inputs are column sequences (m x T, nw x T).
[[nodiscard]] inline Trajectory simulate(const LinearSystem& s, const Vector& x0, const Matrix& u,
                                         const std::optional<Matrix>& w = std::nullopt) {
    require(x0.size() == s.n(), ErrorKind::DimensionMismatch, "x0 size");
    require(u.rows() == s.m(), ErrorKind::DimensionMismatch, "input rows must equal m");
    if (w) {
        require(w->rows() == s.nw() && w->cols() == u.cols(), ErrorKind::DimensionMismatch,
                "disturbance sequence shape");
    }
    const auto T = u.cols();
    Trajectory tr{Matrix(s.n(), T + 1), Matrix(s.p(), T)};
    Vector x = x0;
    tr.states.col(0) = x;
    for (Eigen::Index t = 0; t < T; ++t) {
        Vector y = s.C() * x + s.D() * u.col(t);
        Vector xn = s.A() * x + s.B() * u.col(t);
        if (w) {
            y += s.Dw() * w->col(t);
            xn += s.Bw() * w->col(t);
        }
        tr.outputs.col(t) = y;
        x = std::move(xn);
        tr.states.col(t + 1) = x;
    }
    return tr;
}

/// Impulse response samples D, CB, CAB, ... (count entries).
[[nodiscard]] inline std::vector<Matrix> markov_parameters(const LinearSystem& s, int count) {
    std::vector<Matrix> out;
    if (count <= 0) {
        return out;
    }
    out.push_back(s.D());
    Matrix M = s.B();
    for (int k = 1; k < count; ++k) {
        out.push_back(s.n() == 0 ? Matrix(Matrix::Zero(s.p(), s.m())) : Matrix(s.C() * M));
        if (s.n() > 0) {
            M = s.A() * M;
        }
    }
    return out;
}

namespace detail {

/// Orthonormal basis of the Krylov space spanned by B, AB, A^2 B, ...
/// built one block at a time with rank decisions at relative tolerance `tol`.
inline Matrix krylov_basis(const Matrix& A, const Matrix& B, double tol) {
    const auto n = A.rows();
    Matrix basis(n, 0);
    if (n == 0 || B.cols() == 0) {
        return basis;
    }
    const double a_scale = std::max(1.0, A.norm());
    Matrix cand = B;
    double scale = std::max(B.norm(), 1e-300);
    for (int iter = 0; iter <= n && basis.cols() < n; ++iter) {
        for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) {
            cand -= basis * (basis.transpose() * cand);
        }
        if (cand.cols() == 0) {
            break;
        }
        Eigen::JacobiSVD<Matrix> svd(cand, Eigen::ComputeThinU);
        const auto& sv = svd.singularValues();
        Eigen::Index r = 0;
        while (r < sv.size() && sv(r) > tol * scale) {
            ++r;
        }
        r = std::min<Eigen::Index>(r, n - basis.cols());
        if (r == 0) {
            break;
        }
        Matrix fresh = svd.matrixU().leftCols(r);
        Matrix grown(n, basis.cols() + r);
        grown << basis, fresh;
        basis = std::move(grown);
        cand = A * fresh;
        scale = a_scale;
    }
    return basis;
}

} // namespace detail

/// Removes uncontrollable then unobservable directions by orthogonal projection.
[[nodiscard]] inline LinearSystem minimal_realization(const LinearSystem& s, double tol = 1e-9) {
    if (s.n() == 0) {
        return s;
    }
    Matrix Bfull(s.n(), s.m() + s.nw());
    Bfull << s.B(), s.Bw();
    const Matrix Tc = detail::krylov_basis(s.A(), Bfull, tol);
    Matrix A1 = Tc.transpose() * s.A() * Tc;
    Matrix B1 = Tc.transpose() * s.B();
    Matrix Bw1 = Tc.transpose() * s.Bw();
    Matrix C1 = s.C() * Tc;
    const Matrix To = detail::krylov_basis(A1.transpose(), C1.transpose(), tol);
    return {To.transpose() * A1 * To, To.transpose() * B1, C1 * To, s.D(), To.transpose() * Bw1, s.Dw()};
}

/// Parallel connection stacked block-diagonally: inputs and outputs concatenated.
[[nodiscard]] inline LinearSystem block_diagonal(const std::vector<LinearSystem>& parts) {
    int n = 0;
    int m = 0;
    int p = 0;
    for (const auto& s : parts) {
        n += s.n();
        m += s.m();
        p += s.p();
    }
    Matrix A = Matrix::Zero(n, n);
    Matrix B = Matrix::Zero(n, m);
    Matrix C = Matrix::Zero(p, n);
    Matrix D = Matrix::Zero(p, m);
    int on = 0;
    int om = 0;
    int op = 0;
    for (const auto& s : parts) {
        A.block(on, on, s.n(), s.n()) = s.A();
        B.block(on, om, s.n(), s.m()) = s.B();
        C.block(op, on, s.p(), s.n()) = s.C();
        D.block(op, om, s.p(), s.m()) = s.D();
        on += s.n();
        om += s.m();
        op += s.p();
    }
    return {A, B, C, D};
}

/// Cascade: `first` drives `second`. State is (x_first, x_second); the
/// disturbance channels of `second` are kept.
[[nodiscard]] inline LinearSystem series(const LinearSystem& first, const LinearSystem& second) {
    require(first.p() == second.m(), ErrorKind::DimensionMismatch, "series connection sizes");
    const int n1 = first.n();
    const int n2 = second.n();
    Matrix A = Matrix::Zero(n1 + n2, n1 + n2);
    A.topLeftCorner(n1, n1) = first.A();
    A.bottomLeftCorner(n2, n1) = second.B() * first.C();
    A.bottomRightCorner(n2, n2) = second.A();
    Matrix B(n1 + n2, first.m());
    B << first.B(), second.B() * first.D();
    Matrix C(second.p(), n1 + n2);
    C << second.D() * first.C(), second.C();
    Matrix Bw(n1 + n2, second.nw());
    Bw << Matrix::Zero(n1, second.nw()), second.Bw();
    return {A, B, C, second.D() * first.D(), Bw, second.Dw()};
}

/// Same state, a subset of inputs and outputs.
[[nodiscard]] inline LinearSystem subsystem(const LinearSystem& s, const std::vector<int>& outputs,
                                            const std::vector<int>& inputs) {
    Matrix B(s.n(), static_cast<Eigen::Index>(inputs.size()));
    Matrix C(static_cast<Eigen::Index>(outputs.size()), s.n());
    Matrix D(C.rows(), B.cols());
    Matrix Dw(C.rows(), s.nw());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        require(inputs[j] >= 0 && inputs[j] < s.m(), ErrorKind::DimensionMismatch, "input index");
        B.col(static_cast<Eigen::Index>(j)) = s.B().col(inputs[j]);
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        require(outputs[i] >= 0 && outputs[i] < s.p(), ErrorKind::DimensionMismatch, "output index");
        C.row(static_cast<Eigen::Index>(i)) = s.C().row(outputs[i]);
        Dw.row(static_cast<Eigen::Index>(i)) = s.Dw().row(outputs[i]);
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.D()(outputs[i], inputs[j]);
        }
    }
    return {s.A(), B, C, D, s.Bw(), Dw};
}

} // namespace drg

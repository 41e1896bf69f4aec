#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"
#include "drg/linear_system.hpp"

namespace drg {

enum class ObserverKind {
    OpenLoop,            ///< model propagation only
    DecoupledLuenberger, ///< one observer per channel, innovation on y_i
    Centralized,         ///< one observer for the plant on the measured outputs
    Measured,            ///< state taken as known (channel models driven by the true disturbance)
};

[[nodiscard]] inline std::string to_string(ObserverKind k) {
    switch (k) {
    case ObserverKind::OpenLoop:
        return "open_loop";
    case ObserverKind::DecoupledLuenberger:
        return "decoupled_luenberger";
    case ObserverKind::Centralized:
        return "centralized";
    case ObserverKind::Measured:
        return "measured";
    }
    return "unknown";
}

[[nodiscard]] inline ObserverKind observer_kind_from_string(const std::string& s) {
    for (auto k : {ObserverKind::OpenLoop, ObserverKind::DecoupledLuenberger, ObserverKind::Centralized,
                   ObserverKind::Measured}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorKind::Validation, "unknown observer kind '" + s + "'");
}

struct ObserverConfig {
    ObserverKind kind = ObserverKind::OpenLoop;
    std::vector<Matrix> gains; ///< per channel, or a single gain for the centralized kind; empty means default
    std::vector<int> measured; ///< centralized: measured output rows, empty means all
    int warmup = 50;           ///< steps the governor holds v when x0 is unknown
};

/// Steady-state predictor gain from the filter Riccati recursion with
/// identity weights. e(t+1) = (A - L C) e(t).
[[nodiscard]] inline Matrix default_observer_gain(const Matrix& A, const Matrix& C) {
    const auto n = A.rows();
    const auto p = C.rows();
    if (n == 0) {
        return Matrix::Zero(0, p);
    }
    Matrix P = Matrix::Identity(n, n);
    const Matrix Q = Matrix::Identity(n, n);
    const Matrix R = Matrix::Identity(p, p);
    for (int k = 0; k < 100000; ++k) {
        const Matrix S = C * P * C.transpose() + R;
        const Matrix K = A * P * C.transpose() * S.inverse();
        const Matrix next = A * P * A.transpose() + Q - K * S * K.transpose();
        const double change = (next - P).norm();
        P = 0.5 * (next + next.transpose());
        if (change <= 1e-12 * (1.0 + P.norm())) {
            break;
        }
    }
    return A * P * C.transpose() * (C * P * C.transpose() + R).inverse();
}

/// Deadbeat gain for a single-output pair by Ackermann's formula.
[[nodiscard]] inline Matrix deadbeat_gain(const Matrix& A, const Matrix& C) {
    require(C.rows() == 1, ErrorKind::DimensionMismatch, "deadbeat gain needs a single output");
    const auto n = A.rows();
    Matrix O(n, n);
    Eigen::RowVectorXd row = C.row(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        O.row(i) = row;
        row = row * A;
    }
    Eigen::FullPivLU<Matrix> lu(O);
    require(lu.isInvertible(), ErrorKind::UnstableObserver, "pair is not observable");
    Vector e = Vector::Zero(n);
    e(n - 1) = 1.0;
    Matrix An = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        An = An * A;
    }
    return An * lu.solve(e);
}

/// x̂(t+1) = A x̂ + B u + L (y - C x̂ - D u)
class Luenberger {
public:
    Luenberger() = default;
    Luenberger(const LinearSystem& model, Matrix L) : model_(model), L_(std::move(L)) {
        require(L_.rows() == model.n() && L_.cols() == model.p(), ErrorKind::DimensionMismatch, "observer gain shape");
        if (model.n() > 0) {
            const Matrix E = model.A() - L_ * model.C();
            const double rho = E.eigenvalues().cwiseAbs().maxCoeff();
            require(rho < 1.0, ErrorKind::UnstableObserver,
                    "observer error dynamics have spectral radius " + std::to_string(rho));
        }
        xhat_ = Vector::Zero(model.n());
    }

    /// Open-loop propagation, no innovation.
    static Luenberger open_loop(const LinearSystem& model) {
        Luenberger o;
        o.model_ = model;
        o.L_ = Matrix::Zero(model.n(), model.p());
        o.xhat_ = Vector::Zero(model.n());
        return o;
    }

    void reset(const Vector& x) { xhat_ = x; }
    [[nodiscard]] const Vector& estimate() const noexcept { return xhat_; }
    [[nodiscard]] const LinearSystem& model() const noexcept { return model_; }

    [[nodiscard]] Vector predict_output(const Vector& u) const { return model_.C() * xhat_ + model_.D() * u; }

    void update(const Vector& u, const Vector& y) {
        const Vector innovation = y - predict_output(u);
        xhat_ = model_.A() * xhat_ + model_.B() * u + L_ * innovation;
    }

    /// Propagation with a known disturbance sample.
    void update(const Vector& u, const Vector& y, const Vector& w) {
        const Vector innovation = y - predict_output(u) - model_.Dw() * w;
        xhat_ = model_.A() * xhat_ + model_.B() * u + model_.Bw() * w + L_ * innovation;
    }

private:
    LinearSystem model_;
    Matrix L_;
    Vector xhat_;
};

} // namespace drg

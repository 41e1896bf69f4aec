#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

#include "drg/linear_system.hpp"

namespace drg {

/// Singular values in descending order.
[[nodiscard]] inline Vector singular_values(const Matrix& M) {
    if (M.size() == 0) {
        return Vector(0);
    }
    return Eigen::JacobiSVD<Matrix>(M).singularValues();
}

/// Ratio of the largest to the smallest singular value.
[[nodiscard]] inline double condition_number(const Matrix& M) {
    const Vector s = singular_values(M);
    return s(0) / s(s.size() - 1);
}

/// C (e^{jw} I - A)^{-1} B + D
[[nodiscard]] inline Eigen::MatrixXcd frequency_response(const LinearSystem& s, double w) {
    const std::complex<double> z = std::polar(1.0, w);
    Eigen::MatrixXcd out = s.D().cast<std::complex<double>>();
    if (s.n() > 0) {
        Eigen::MatrixXcd zI = Eigen::MatrixXcd::Identity(s.n(), s.n()) * z;
        Eigen::MatrixXcd lhs = zI - s.A().cast<std::complex<double>>();
        out += s.C().cast<std::complex<double>>() *
               lhs.partialPivLu().solve(s.B().cast<std::complex<double>>());
    }
    return out;
}

/// Peak gain over the unit circle: 2048-point grid, then golden-section
/// refinement around the best local maxima.
[[nodiscard]] inline double hinf_norm(const LinearSystem& s, double tol = 1e-6) {
    require(s.is_stable(), ErrorKind::UnstableSystem, "H-infinity norm of an unstable system");
    const auto gain = [&](double w) {
        const Eigen::MatrixXcd F = frequency_response(s, w);
        if (F.size() == 0) {
            return 0.0;
        }
        return Eigen::JacobiSVD<Eigen::MatrixXcd>(F).singularValues()(0);
    };
    constexpr int grid = 2048;
    const double pi = std::numbers::pi;
    std::vector<double> g(grid + 1);
    for (int k = 0; k <= grid; ++k) {
        g[static_cast<std::size_t>(k)] = gain(pi * k / grid);
    }
    double best = *std::max_element(g.begin(), g.end());
    std::vector<std::pair<double, int>> peaks;
    for (int k = 0; k <= grid; ++k) {
        const double left = k > 0 ? g[static_cast<std::size_t>(k - 1)] : -1.0;
        const double right = k < grid ? g[static_cast<std::size_t>(k + 1)] : -1.0;
        const double v = g[static_cast<std::size_t>(k)];
        if (v >= left && v >= right) {
            peaks.emplace_back(v, k);
        }
    }
    std::sort(peaks.rbegin(), peaks.rend());
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(peaks.size(), 4); ++i) {
        const int k = peaks[i].second;
        double a = pi * std::max(0, k - 1) / grid;
        double b = pi * std::min(grid, k + 1) / grid;
        double c = b - phi * (b - a);
        double d = a + phi * (b - a);
        double gc = gain(c);
        double gd = gain(d);
        while (b - a > tol) {
            if (gc > gd) {
                b = d;
                d = c;
                gd = gc;
                c = b - phi * (b - a);
                gc = gain(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + phi * (b - a);
                gd = gain(d);
            }
        }
        best = std::max({best, gc, gd});
    }
    return best;
}

/// Largest row sum of absolute impulse-response entries. The series stops
/// once ||C A^k|| ||B|| / (1 - rho) drops below `tail_tol`.
[[nodiscard]] inline double l1_impulse_norm(const LinearSystem& s, double tail_tol = 1e-9) {
    require(s.is_stable(), ErrorKind::UnstableSystem, "L1 norm of an unstable system");
    Vector rows = s.D().cwiseAbs().rowwise().sum();
    if (s.n() == 0) {
        return rows.size() ? rows.maxCoeff() : 0.0;
    }
    const double rho = s.spectral_radius();
    const double bnorm = s.B().norm();
    Matrix CAk = s.C();
    constexpr int max_terms = 1000000;
    for (int k = 0; k < max_terms; ++k) {
        rows += (CAk * s.B()).cwiseAbs().rowwise().sum();
        CAk = CAk * s.A();
        if (k >= s.n() && CAk.norm() * bnorm / (1.0 - rho) < tail_tol) {
            break;
        }
    }
    return rows.maxCoeff();
}

} // namespace drg

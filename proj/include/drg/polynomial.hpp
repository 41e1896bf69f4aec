#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

namespace drg {

using Complex = std::complex<double>;

/// Real polynomial in z, coefficients stored in ascending powers.
///
/// The zero polynomial is the single coefficient {0}; every other value keeps
/// a nonzero leading coefficient after trimming.
class Polynomial {
public:
    Polynomial() : coeffs_{0.0} {}
    Polynomial(std::initializer_list<double> coeffs) : coeffs_(coeffs) { trim(); }
    explicit Polynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) { trim(); }

    static Polynomial constant(double c) { return Polynomial(std::vector<double>{c}); }
    static Polynomial monomial(int power, double c = 1.0) {
        std::vector<double> v(static_cast<std::size_t>(power) + 1, 0.0);
        v.back() = c;
        return Polynomial(std::move(v));
    }

    /// Monic product of (z - r) over the given roots times `gain`. Complex roots
    /// are expected in conjugate pairs; the imaginary residue is dropped.
    static Polynomial from_roots(const std::vector<Complex>& roots, double gain = 1.0) {
        std::vector<Complex> c{Complex(1.0, 0.0)};
        for (const auto& r : roots) {
            std::vector<Complex> next(c.size() + 1, Complex(0.0, 0.0));
            for (std::size_t i = 0; i < c.size(); ++i) {
                next[i + 1] += c[i];
                next[i] -= r * c[i];
            }
            c = std::move(next);
        }
        std::vector<double> out(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            out[i] = gain * c[i].real();
        }
        return Polynomial(std::move(out));
    }

    [[nodiscard]] const std::vector<double>& coeffs() const noexcept { return coeffs_; }
    [[nodiscard]] int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
    [[nodiscard]] bool is_zero() const noexcept { return coeffs_.size() == 1 && coeffs_[0] == 0.0; }
    [[nodiscard]] double leading() const noexcept { return coeffs_.back(); }
    [[nodiscard]] double operator[](std::size_t i) const noexcept {
        return i < coeffs_.size() ? coeffs_[i] : 0.0;
    }

    template <typename T>
    [[nodiscard]] T operator()(const T& z) const {
        T acc = T(coeffs_.back());
        for (auto it = coeffs_.rbegin() + 1; it != coeffs_.rend(); ++it) {
            acc = acc * z + T(*it);
        }
        return acc;
    }

    /// Roots via companion-matrix eigenvalues. Exact zero roots (vanishing
    /// low-order coefficients) are returned as exact zeros.
    [[nodiscard]] std::vector<Complex> roots() const {
        std::vector<Complex> out;
        if (degree() < 1) {
            return out;
        }
        std::size_t low = 0;
        while (low < coeffs_.size() && coeffs_[low] == 0.0) {
            out.emplace_back(0.0, 0.0);
            ++low;
        }
        const int n = degree() - static_cast<int>(low);
        if (n < 1) {
            return out;
        }
        Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            companion(0, i) = -coeffs_[low + static_cast<std::size_t>(n - 1 - i)] / leading();
        }
        for (int i = 1; i < n; ++i) {
            companion(i, i - 1) = 1.0;
        }
        Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
        for (int i = 0; i < n; ++i) {
            out.push_back(solver.eigenvalues()(i));
        }
        return out;
    }

    Polynomial& operator+=(const Polynomial& o) {
        coeffs_.resize(std::max(coeffs_.size(), o.coeffs_.size()), 0.0);
        for (std::size_t i = 0; i < o.coeffs_.size(); ++i) {
            coeffs_[i] += o.coeffs_[i];
        }
        trim();
        return *this;
    }
    Polynomial& operator-=(const Polynomial& o) { return *this += o * -1.0; }

    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(const Polynomial& a, double s) {
        std::vector<double> v = a.coeffs_;
        for (auto& c : v) {
            c *= s;
        }
        return Polynomial(std::move(v));
    }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        std::vector<double> v(a.coeffs_.size() + b.coeffs_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.coeffs_.size(); ++i) {
            for (std::size_t j = 0; j < b.coeffs_.size(); ++j) {
                v[i + j] += a.coeffs_[i] * b.coeffs_[j];
            }
        }
        return Polynomial(std::move(v));
    }

    friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.coeffs_ == b.coeffs_; }

private:
    void trim() {
        if (coeffs_.empty()) {
            coeffs_.push_back(0.0);
            return;
        }
        double scale = 0.0;
        for (double c : coeffs_) {
            scale = std::max(scale, std::abs(c));
        }
        const double cut = scale * 1e-13;
        while (coeffs_.size() > 1 && std::abs(coeffs_.back()) <= cut) {
            coeffs_.pop_back();
        }
        if (coeffs_.size() == 1 && std::abs(coeffs_[0]) <= cut) {
            coeffs_[0] = 0.0;
        }
    }

    std::vector<double> coeffs_;
};

namespace detail {

/// Merges numerically split repeated roots: single-linkage clusters within a
/// relative radius are replaced by copies of their centroid.
inline std::vector<Complex> polish_roots(std::vector<Complex> roots, double radius = 1e-5) {
    const std::size_t n = roots.size();
    std::vector<int> label(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] >= 0) {
            continue;
        }
        label[i] = next;
        std::vector<std::size_t> stack{i};
        while (!stack.empty()) {
            const std::size_t k = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j) {
                if (label[j] < 0 &&
                    std::abs(roots[j] - roots[k]) <= radius * std::max(1.0, std::abs(roots[k]))) {
                    label[j] = next;
                    stack.push_back(j);
                }
            }
        }
        ++next;
    }
    for (int c = 0; c < next; ++c) {
        Complex sum(0.0, 0.0);
        int count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (label[i] == c) {
                sum += roots[i];
                ++count;
            }
        }
        if (count > 1) {
            const Complex centroid = sum / static_cast<double>(count);
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] == c) {
                    roots[i] = centroid;
                }
            }
        }
    }
    for (auto& r : roots) {
        if (std::abs(r.imag()) <= 1e-12 * std::max(1.0, std::abs(r))) {
            r = Complex(r.real(), 0.0);
        }
    }
    return roots;
}

} // namespace detail

} // namespace drg

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drg/error.hpp"
#include "drg/polynomial.hpp"

namespace drg {

namespace detail {

inline constexpr double kCancelTol = 1e-8;

inline bool roots_match(const Complex& a, const Complex& b, double tol = kCancelTol) {
    return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

/// Removes one matching element of `value` from `pool`; returns true on success.
inline bool take_match(std::vector<Complex>& pool, const Complex& value) {
    for (auto it = pool.begin(); it != pool.end(); ++it) {
        if (roots_match(*it, value)) {
            pool.erase(it);
            return true;
        }
    }
    return false;
}

using CPoly = std::vector<Complex>;

inline CPoly cpoly_from_roots(const std::vector<Complex>& roots, Complex gain) {
    CPoly c{gain};
    for (const auto& r : roots) {
        CPoly next(c.size() + 1, Complex(0.0, 0.0));
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i + 1] += c[i];
            next[i] -= r * c[i];
        }
        c = std::move(next);
    }
    return c;
}

inline Complex cpoly_eval(const CPoly& c, Complex z) {
    Complex acc(0.0, 0.0);
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        acc = acc * z + *it;
    }
    return acc;
}

inline double cpoly_abs_eval(const CPoly& c, double r) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        acc = acc * r + std::abs(*it);
    }
    return acc;
}

/// Synthetic division by (z - p); the remainder is discarded.
inline CPoly cpoly_deflate(const CPoly& c, Complex p) {
    const std::size_t n = c.size() - 1;
    CPoly q(n, Complex(0.0, 0.0));
    Complex carry(0.0, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        carry = c[i + 1] + carry * p;
        q[i] = carry;
    }
    return q;
}

} // namespace detail

/// Scalar rational transfer function in z.
///
/// Stored as gain, zeros and poles with common roots cancelled, so the
/// denominator is monic. num() and den() rebuild the coefficient form.
class RationalTf {
public:
    RationalTf() = default;
    RationalTf(double c) : gain_(c) {} // NOLINT(google-explicit-constructor)

    RationalTf(const Polynomial& num, const Polynomial& den) {
        require(!den.is_zero(), ErrorKind::Validation, "rational denominator is the zero polynomial");
        if (num.is_zero()) {
            return;
        }
        gain_ = num.leading() / den.leading();
        zeros_ = detail::polish_roots(num.roots());
        poles_ = detail::polish_roots(den.roots());
        cancel();
    }

    static RationalTf from_zpk(std::vector<Complex> zeros, std::vector<Complex> poles, double gain) {
        RationalTf r;
        if (gain == 0.0) {
            return r;
        }
        r.gain_ = gain;
        r.zeros_ = std::move(zeros);
        r.poles_ = std::move(poles);
        r.cancel();
        return r;
    }

    /// z^{-k}
    static RationalTf delay(int k) {
        return from_zpk({}, std::vector<Complex>(static_cast<std::size_t>(k), Complex(0.0, 0.0)), 1.0);
    }

    [[nodiscard]] double gain() const noexcept { return gain_; }
    [[nodiscard]] const std::vector<Complex>& zeros() const noexcept { return zeros_; }
    [[nodiscard]] const std::vector<Complex>& poles() const noexcept { return poles_; }
    [[nodiscard]] bool is_zero() const noexcept { return gain_ == 0.0; }

    [[nodiscard]] Polynomial num() const {
        if (is_zero()) {
            return Polynomial{};
        }
        return Polynomial::from_roots(zeros_, gain_);
    }
    [[nodiscard]] Polynomial den() const { return Polynomial::from_roots(poles_); }

    /// deg(den) - deg(num); the zero function counts as strictly proper.
    [[nodiscard]] int relative_degree() const noexcept {
        if (is_zero()) {
            return 0;
        }
        return static_cast<int>(poles_.size()) - static_cast<int>(zeros_.size());
    }
    [[nodiscard]] bool is_proper() const noexcept { return relative_degree() >= 0; }

    [[nodiscard]] Complex operator()(Complex z) const {
        Complex v(gain_, 0.0);
        for (const auto& q : zeros_) {
            v *= (z - q);
        }
        for (const auto& p : poles_) {
            v /= (z - p);
        }
        return v;
    }

    [[nodiscard]] RationalTf reciprocal() const {
        require(!is_zero(), ErrorKind::SingularTransferMatrix, "reciprocal of the zero function");
        return from_zpk(poles_, zeros_, 1.0 / gain_);
    }

    friend RationalTf operator*(const RationalTf& a, const RationalTf& b) {
        if (a.is_zero() || b.is_zero()) {
            return {};
        }
        auto zeros = a.zeros_;
        zeros.insert(zeros.end(), b.zeros_.begin(), b.zeros_.end());
        auto poles = a.poles_;
        poles.insert(poles.end(), b.poles_.begin(), b.poles_.end());
        return from_zpk(std::move(zeros), std::move(poles), a.gain_ * b.gain_);
    }
    friend RationalTf operator/(const RationalTf& a, const RationalTf& b) { return a * b.reciprocal(); }
    friend RationalTf operator-(const RationalTf& a) { return from_zpk(a.zeros_, a.poles_, -a.gain_); }
    friend RationalTf operator+(const RationalTf& a, const RationalTf& b) { return sum({a, b}); }
    friend RationalTf operator-(const RationalTf& a, const RationalTf& b) { return sum({a, -b}); }

    /// Sum over a common denominator built from the union of pole multisets.
    /// Numerator roots that sit on a pole of the union are divided out before
    /// root finding.
    static RationalTf sum(const std::vector<RationalTf>& terms) {
        std::vector<const RationalTf*> live;
        for (const auto& t : terms) {
            if (!t.is_zero()) {
                live.push_back(&t);
            }
        }
        if (live.empty()) {
            return {};
        }
        if (live.size() == 1) {
            return *live.front();
        }
        std::vector<Complex> common;
        for (const auto* t : live) {
            auto missing = t->poles_;
            std::vector<Complex> have = common;
            std::vector<Complex> extra;
            for (const auto& p : missing) {
                if (!detail::take_match(have, p)) {
                    extra.push_back(p);
                }
            }
            common.insert(common.end(), extra.begin(), extra.end());
        }
        detail::CPoly total;
        double scale = 0.0;
        for (const auto* t : live) {
            std::vector<Complex> rest = common;
            for (const auto& p : t->poles_) {
                detail::take_match(rest, p);
            }
            auto roots = t->zeros_;
            roots.insert(roots.end(), rest.begin(), rest.end());
            auto c = detail::cpoly_from_roots(roots, Complex(t->gain_, 0.0));
            if (c.size() > total.size()) {
                total.resize(c.size(), Complex(0.0, 0.0));
            }
            for (std::size_t i = 0; i < c.size(); ++i) {
                total[i] += c[i];
                scale = std::max(scale, std::abs(c[i]));
            }
        }
        const double cut = 1e-12 * scale;
        while (!total.empty() && std::abs(total.back()) <= cut) {
            total.pop_back();
        }
        if (total.empty()) {
            return {};
        }
        std::vector<Complex> poles = common;
        for (std::size_t i = 0; i < poles.size();) {
            if (total.size() < 2) {
                break;
            }
            const Complex p = poles[i];
            const double ref = detail::cpoly_abs_eval(total, std::abs(p));
            if (std::abs(detail::cpoly_eval(total, p)) <= 1e-10 * ref) {
                total = detail::cpoly_deflate(total, p);
                poles.erase(poles.begin() + static_cast<std::ptrdiff_t>(i));
                i = 0;
            } else {
                ++i;
            }
        }
        std::vector<double> real(total.size());
        for (std::size_t i = 0; i < total.size(); ++i) {
            real[i] = total[i].real();
        }
        Polynomial num(std::move(real));
        if (num.is_zero()) {
            return {};
        }
        return from_zpk(detail::polish_roots(num.roots()), std::move(poles), num.leading());
    }

private:
    void cancel() {
        for (std::size_t i = 0; i < zeros_.size();) {
            if (detail::take_match(poles_, zeros_[i])) {
                zeros_.erase(zeros_.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }
    }

    double gain_ = 0.0;
    std::vector<Complex> zeros_;
    std::vector<Complex> poles_;
};

/// Rectangular grid of RationalTf entries, row-major.
class RationalMatrix {
public:
    RationalMatrix() = default;
    RationalMatrix(int rows, int cols)
        : rows_(rows), cols_(cols), entries_(static_cast<std::size_t>(rows * cols)) {
        require(rows > 0 && cols > 0, ErrorKind::DimensionMismatch, "rational matrix needs positive dimensions");
    }

    static RationalMatrix identity(int n) {
        RationalMatrix m(n, n);
        for (int i = 0; i < n; ++i) {
            m(i, i) = RationalTf(1.0);
        }
        return m;
    }
    static RationalMatrix constant(const Eigen::MatrixXd& k) {
        RationalMatrix m(static_cast<int>(k.rows()), static_cast<int>(k.cols()));
        for (int i = 0; i < m.rows(); ++i) {
            for (int j = 0; j < m.cols(); ++j) {
                m(i, j) = RationalTf(k(i, j));
            }
        }
        return m;
    }
    static RationalMatrix diagonal(const std::vector<RationalTf>& d) {
        RationalMatrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
        for (std::size_t i = 0; i < d.size(); ++i) {
            m(static_cast<int>(i), static_cast<int>(i)) = d[i];
        }
        return m;
    }

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }
    [[nodiscard]] const std::vector<RationalTf>& entries() const noexcept { return entries_; }

    RationalTf& operator()(int i, int j) { return entries_[index(i, j)]; }
    [[nodiscard]] const RationalTf& operator()(int i, int j) const { return entries_[index(i, j)]; }

    [[nodiscard]] Eigen::MatrixXcd operator()(Complex z) const {
        Eigen::MatrixXcd out(rows_, cols_);
        for (int i = 0; i < rows_; ++i) {
            for (int j = 0; j < cols_; ++j) {
                out(i, j) = (*this)(i, j)(z);
            }
        }
        return out;
    }

    [[nodiscard]] bool is_proper() const {
        return std::all_of(entries_.begin(), entries_.end(), [](const RationalTf& e) { return e.is_proper(); });
    }

    [[nodiscard]] RationalMatrix block(int r0, int c0, int nr, int nc) const {
        require(r0 >= 0 && c0 >= 0 && r0 + nr <= rows_ && c0 + nc <= cols_, ErrorKind::DimensionMismatch,
                "block out of range");
        RationalMatrix out(nr, nc);
        for (int i = 0; i < nr; ++i) {
            for (int j = 0; j < nc; ++j) {
                out(i, j) = (*this)(r0 + i, c0 + j);
            }
        }
        return out;
    }

    friend RationalMatrix operator*(const RationalMatrix& a, const RationalMatrix& b) {
        require(a.cols_ == b.rows_, ErrorKind::DimensionMismatch, "rational product dimensions");
        RationalMatrix out(a.rows_, b.cols_);
        for (int i = 0; i < a.rows_; ++i) {
            for (int j = 0; j < b.cols_; ++j) {
                std::vector<RationalTf> terms;
                for (int k = 0; k < a.cols_; ++k) {
                    terms.push_back(a(i, k) * b(k, j));
                }
                out(i, j) = RationalTf::sum(terms);
            }
        }
        return out;
    }
    friend RationalMatrix operator*(const RationalMatrix& a, const RationalTf& s) {
        RationalMatrix out = a;
        for (auto& e : out.entries_) {
            e = e * s;
        }
        return out;
    }
    friend RationalMatrix operator+(const RationalMatrix& a, const RationalMatrix& b) {
        require(a.rows_ == b.rows_ && a.cols_ == b.cols_, ErrorKind::DimensionMismatch, "rational sum dimensions");
        RationalMatrix out(a.rows_, a.cols_);
        for (std::size_t k = 0; k < a.entries_.size(); ++k) {
            out.entries_[k] = a.entries_[k] + b.entries_[k];
        }
        return out;
    }
    friend RationalMatrix operator-(const RationalMatrix& a) { return a * RationalTf(-1.0); }
    friend RationalMatrix operator-(const RationalMatrix& a, const RationalMatrix& b) { return a + (-b); }

private:
    [[nodiscard]] std::size_t index(int i, int j) const {
        require(i >= 0 && i < rows_ && j >= 0 && j < cols_, ErrorKind::DimensionMismatch, "rational index out of range");
        return static_cast<std::size_t>(i * cols_ + j);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<RationalTf> entries_;
};

namespace detail {

inline RationalTf rational_det(const RationalMatrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    if (rows.size() == 1) {
        return m(rows[0], cols[0]);
    }
    std::vector<RationalTf> terms;
    const std::vector<int> sub_rows(rows.begin() + 1, rows.end());
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const RationalTf& lead = m(rows[0], cols[k]);
        if (lead.is_zero()) {
            continue;
        }
        std::vector<int> sub_cols = cols;
        sub_cols.erase(sub_cols.begin() + static_cast<std::ptrdiff_t>(k));
        RationalTf t = lead * rational_det(m, sub_rows, sub_cols);
        terms.push_back(k % 2 == 0 ? t : -t);
    }
    return RationalTf::sum(terms);
}

inline std::vector<int> iota_without(int n, int skip) {
    std::vector<int> v;
    for (int i = 0; i < n; ++i) {
        if (i != skip) {
            v.push_back(i);
        }
    }
    return v;
}

} // namespace detail

[[nodiscard]] inline RationalTf rational_det(const RationalMatrix& m) {
    require(m.is_square(), ErrorKind::DimensionMismatch, "determinant of a non-square rational matrix");
    return detail::rational_det(m, detail::iota_without(m.rows(), -1), detail::iota_without(m.cols(), -1));
}

/// Inverse via adjugate over determinant.
[[nodiscard]] inline RationalMatrix rational_inverse(const RationalMatrix& g) {
    require(g.is_square(), ErrorKind::DimensionMismatch, "inverse of a non-square rational matrix");
    const RationalTf det = rational_det(g);
    require(!det.is_zero(), ErrorKind::SingularTransferMatrix, "determinant is identically zero");
    const RationalTf inv_det = det.reciprocal();
    const int n = g.rows();
    RationalMatrix out(n, n);
    if (n == 1) {
        out(0, 0) = inv_det;
        return out;
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            RationalTf minor = detail::rational_det(g, detail::iota_without(n, j), detail::iota_without(n, i));
            if ((i + j) % 2 == 1) {
                minor = -minor;
            }
            out(i, j) = minor * inv_det;
        }
    }
    return out;
}

/// Pads with the smallest common delay z^{-beta} that makes every entry proper.
[[nodiscard]] inline std::pair<RationalMatrix, int> make_proper(const RationalMatrix& m) {
    int beta = 0;
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            beta = std::max(beta, -m(i, j).relative_degree());
        }
    }
    if (beta == 0) {
        return {m, 0};
    }
    return {m * RationalTf::delay(beta), beta};
}

/// [a b]
[[nodiscard]] inline RationalMatrix hconcat(const RationalMatrix& a, const RationalMatrix& b) {
    require(a.rows() == b.rows(), ErrorKind::DimensionMismatch, "hconcat row counts");
    RationalMatrix out(a.rows(), a.cols() + b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            out(i, j) = a(i, j);
        }
        for (int j = 0; j < b.cols(); ++j) {
            out(i, a.cols() + j) = b(i, j);
        }
    }
    return out;
}

/// [a; b]
[[nodiscard]] inline RationalMatrix vconcat(const RationalMatrix& a, const RationalMatrix& b) {
    require(a.cols() == b.cols(), ErrorKind::DimensionMismatch, "vconcat column counts");
    RationalMatrix out(a.rows() + b.rows(), a.cols());
    for (int j = 0; j < a.cols(); ++j) {
        for (int i = 0; i < a.rows(); ++i) {
            out(i, j) = a(i, j);
        }
        for (int i = 0; i < b.rows(); ++i) {
            out(a.rows() + i, j) = b(i, j);
        }
    }
    return out;
}

/// diag(a, b) with zero off-diagonal blocks.
[[nodiscard]] inline RationalMatrix block_diag(const RationalMatrix& a, const RationalMatrix& b) {
    return vconcat(hconcat(a, RationalMatrix(a.rows(), b.cols())), hconcat(RationalMatrix(b.rows(), a.cols()), b));
}

} // namespace drg

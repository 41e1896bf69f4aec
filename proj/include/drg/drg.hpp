#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "drg/decoupling.hpp"
#include "drg/error.hpp"
#include "drg/governors.hpp"
#include "drg/linear_system.hpp"
#include "drg/mas.hpp"
#include "drg/observer.hpp"
#include "drg/polytope.hpp"
#include "drg/rational.hpp"
#include "drg/realization.hpp"

namespace drg {

/// One sample of a governed loop.
struct StepRecord {
    Vector r;
    Vector r_prime;
    Vector v;
    Vector u;
    Vector y;
    Vector kappa;
    double obs_err = 0.0;
    double governor_seconds = 0.0; ///< wall clock of the governor call alone
};

enum class GovernorSolver { Explicit, ImplicitLp };

namespace detail {

/// Proper filter driven one sample at a time from zero state.
class FilterRunner {
public:
    FilterRunner() = default;
    explicit FilterRunner(LinearSystem sys) : sys_(std::move(sys)), x_(Vector::Zero(sys_.n())) {}

    Vector step(const Vector& in) {
        Vector out = sys_.C() * x_ + sys_.D() * in;
        x_ = sys_.A() * x_ + sys_.B() * in;
        return out;
    }
    void reset() { x_ = Vector::Zero(sys_.n()); }
    [[nodiscard]] const Vector& state() const noexcept { return x_; }
    [[nodiscard]] const LinearSystem& system() const noexcept { return sys_; }

private:
    LinearSystem sys_;
    Vector x_;
};

/// Splits the trailing `nw` inputs of a realization off as disturbance channels.
inline LinearSystem split_disturbance(const LinearSystem& s, int nw) {
    const int m = s.m() - nw;
    return {s.A(), s.B().leftCols(m), s.C(), s.D().leftCols(m), s.B().rightCols(nw), s.D().rightCols(nw)};
}

inline Vector concat(const Vector& a, const Vector& b) {
    Vector z(a.size() + b.size());
    z << a, b;
    return z;
}

/// Runs one scalar governor per channel into `v` and `kappa`; errors carry the channel index.
inline void bank(GovernorSolver solver, const std::vector<Mas>& mas, const std::vector<Vector>& states,
                 const Vector& v_prev, const Vector& rp, Vector& v, Vector& kappa) {
    for (std::size_t i = 0; i < mas.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        try {
            if (solver == GovernorSolver::Explicit) {
                const ScalarStep s = srg_step_scalar(mas[i], states[i], v_prev(k), rp(k));
                v(k) = s.v_new;
                kappa(k) = s.kappa;
            } else {
                const KappaResult s =
                    srg_step_lp(mas[i], states[i], Vector::Constant(1, v_prev(k)), Vector::Constant(1, rp(k)));
                v(k) = s.v_new(0);
                kappa(k) = s.kappa;
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "channel " + std::to_string(i) + ": " + e.what());
        }
    }
}

inline void check_channel_count(const Box& Y, int p) {
    require(Y.dim() == p, ErrorKind::DimensionMismatch,
            "constraint box has " + std::to_string(Y.dim()) + " entries for " + std::to_string(p) + " outputs");
}

} // namespace detail

enum class TfMethod { Diagonal, Identity };

struct DrgTfOptions {
    TfMethod method = TfMethod::Diagonal;
    double epsilon = kDefaultEpsilon;
    int t_max = kDefaultTmax;
    ObserverConfig observer{};
    GovernorSolver solver = GovernorSolver::Explicit;
};

/// Square system G with p extra fictitious outputs [0 G_bar] appended.
struct WideDecoupling {
    RationalMatrix G_tilde;
    TfDecoupling dec;
};

/// Squares up a wide plant (p outputs, m > p inputs). F uses the block
/// inverse of G_tilde:
///   F = [G1^{-1} Wp, -G1^{-1} G2 G_bar^{-1} G_bar_w; 0, G_bar^{-1} G_bar_w]
/// with G = [G1 G2] split after p columns.
[[nodiscard]] inline WideDecoupling squarify_wide(const RationalMatrix& G, const RationalMatrix& G_bar,
                                                  const RationalMatrix& G_bar_w) {
    const int p = G.rows();
    const int m = G.cols();
    require(m >= p, ErrorKind::DimensionMismatch, "wide plant needs at least as many inputs as outputs");
    if (m == p) {
        return {G, design_tf_diagonal(G)};
    }
    const int k = m - p;
    require(G_bar.rows() == k && G_bar.cols() == k && G_bar_w.rows() == k && G_bar_w.cols() == k,
            ErrorKind::DimensionMismatch, "fictitious blocks must be (m-p) x (m-p)");
    RationalMatrix G_bar_inv;
    try {
        G_bar_inv = rational_inverse(G_bar);
    } catch (const Error& e) {
        throw Error(ErrorKind::SingularGBar, std::string("fictitious block is not invertible: ") + e.what());
    }
    const RationalMatrix G1 = G.block(0, 0, p, p);
    const RationalMatrix G2 = G.block(0, p, p, k);
    const RationalMatrix G1_inv = rational_inverse(G1);
    std::vector<RationalTf> wp;
    std::vector<RationalTf> wp_inv;
    for (int i = 0; i < p; ++i) {
        require(!G1(i, i).is_zero(), ErrorKind::SingularTransferMatrix, "zero diagonal entry");
        wp.push_back(G1(i, i));
        wp_inv.push_back(G1(i, i).reciprocal());
    }
    const RationalMatrix Wp = RationalMatrix::diagonal(wp);
    const RationalMatrix lower = G_bar_inv * G_bar_w;
    const RationalMatrix F_raw =
        vconcat(hconcat(G1_inv * Wp, -(G1_inv * G2 * lower)), hconcat(RationalMatrix(k, p), lower));
    const RationalMatrix W_raw = block_diag(Wp, G_bar_w);
    const RationalMatrix G_tilde = vconcat(G, hconcat(RationalMatrix(k, p), G_bar));
    const RationalMatrix W_inv = block_diag(RationalMatrix::diagonal(wp_inv), rational_inverse(G_bar_w));
    auto [F, beta1] = make_proper(F_raw);
    auto [F_inv, beta2] = make_proper(W_inv * G_tilde);
    detail::require_stable_filter(F, "F");
    detail::require_stable_filter(F_inv, "F_inv");
    return {G_tilde, {std::move(F), std::move(F_inv), W_raw * RationalTf::delay(beta1), beta1, beta2}};
}

/// F^{-1} -> bank of scalar governors -> F -> plant.
class DrgTfPipeline {
public:
    static DrgTfPipeline build(const RationalMatrix& G, const Box& Y, const DrgTfOptions& opt = {}) {
        detail::check_channel_count(Y, G.rows());
        TfDecoupling dec = opt.method == TfMethod::Diagonal ? design_tf_diagonal(G) : design_tf_identity(G);
        return DrgTfPipeline(realize(G), std::move(dec), G, G.rows(), Y, Box(), opt);
    }

    /// Channel models carry the disturbance path: y_i = W_ii v_i + G_w,i d.
    static DrgTfPipeline build_robust(const RationalMatrix& G, const RationalMatrix& G_w, const Box& Y,
                                      const Box& W_dist, const DrgTfOptions& opt = {}) {
        detail::check_channel_count(Y, G.rows());
        require(G_w.rows() == G.rows() && W_dist.dim() == G_w.cols(), ErrorKind::DimensionMismatch,
                "disturbance model sizes");
        TfDecoupling dec = opt.method == TfMethod::Diagonal ? design_tf_diagonal(G) : design_tf_identity(G);
        const LinearSystem plant = detail::split_disturbance(realize(hconcat(G, G_w)), G_w.cols());
        return DrgTfPipeline(plant, std::move(dec), G, G.rows(), Y, W_dist, opt, &G_w);
    }

    /// Wide plant: only the p real outputs get governors, the fictitious
    /// channels pass r' through.
    static DrgTfPipeline build_wide(const RationalMatrix& G, const RationalMatrix& G_bar,
                                    const RationalMatrix& G_bar_w, const Box& Y, const DrgTfOptions& opt = {}) {
        detail::check_channel_count(Y, G.rows());
        WideDecoupling wide = squarify_wide(G, G_bar, G_bar_w);
        return DrgTfPipeline(realize(G), std::move(wide.dec), RationalMatrix(), G.rows(), Y, Box(), opt);
    }

    /// `x0` is the true plant state. When it is known the decoupled observers
    /// get the cancellation input and the centralized observer starts at
    /// (0, x0); otherwise the governor holds v for the warm-up window.
    void reset(const Vector& x0 = Vector(), bool x0_known = true, const Vector& v_init = Vector()) {
        x_ = x0.size() ? x0 : Vector::Zero(plant_.n());
        require(x_.size() == plant_.n(), ErrorKind::DimensionMismatch, "plant initial state size");
        v_prev_ = v_init.size() ? v_init : Vector::Zero(n_v_);
        require(v_prev_.size() == n_v_, ErrorKind::DimensionMismatch, "initial v size");
        f_.reset();
        finv_.reset();
        t_ = 0;
        hold_ = x0_known ? 0 : cfg_.warmup;
        ic_.reset();
        const bool nonzero = !x_.isZero(0.0);
        for (auto& o : ch_obs_) {
            o.reset(Vector::Zero(o.model().n()));
        }
        if (cfg_.kind == ObserverKind::Centralized) {
            plant_obs_.reset(x0_known ? x_ : Vector::Zero(plant_.n()));
        } else if (nonzero && x0_known && G_square_.rows() > 0) {
            ic_.emplace(G_square_, plant_, x_);
        }
    }

    StepRecord step(const Vector& r, const Vector& d = Vector()) {
        require(r.size() == n_v_, ErrorKind::DimensionMismatch, "reference size");
        const Vector w = d.size() ? d : Vector::Zero(plant_.nw());
        require(w.size() == plant_.nw(), ErrorKind::DimensionMismatch, "disturbance size");
        StepRecord rec;
        rec.r = r;
        rec.r_prime = finv_.step(r);
        rec.v = v_prev_;
        rec.kappa = Vector::Zero(n_ch_);
        if (t_ >= hold_) {
            const auto states = governor_states();
            const auto start = std::chrono::steady_clock::now();
            detail::bank(solver_, mas_, states, v_prev_, rec.r_prime, rec.v, rec.kappa);
            rec.governor_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            rec.v.tail(n_v_ - n_ch_) = rec.r_prime.tail(n_v_ - n_ch_);
        }
        rec.u = f_.step(rec.v);
        if (ic_) {
            rec.u += ic_->next();
        }
        rec.y = plant_.C() * x_ + plant_.D() * rec.u + plant_.Dw() * w;
        rec.obs_err = observe(rec.v, rec.u, rec.y, w);
        x_ = plant_.A() * x_ + plant_.B() * rec.u + plant_.Bw() * w;
        v_prev_ = rec.v;
        ++t_;
        return rec;
    }

    [[nodiscard]] const LinearSystem& plant() const noexcept { return plant_; }
    [[nodiscard]] const TfDecoupling& decoupling() const noexcept { return dec_; }
    [[nodiscard]] const std::vector<Mas>& mas() const noexcept { return mas_; }
    [[nodiscard]] const std::vector<LinearSystem>& channels() const noexcept { return channels_; }
    [[nodiscard]] const LinearSystem& f_system() const noexcept { return f_.system(); }
    [[nodiscard]] const LinearSystem& finv_system() const noexcept { return finv_.system(); }
    [[nodiscard]] const Vector& plant_state() const noexcept { return x_; }
    [[nodiscard]] int governed_channels() const noexcept { return n_ch_; }
    void set_solver(GovernorSolver s) noexcept { solver_ = s; }

    /// Governor inputs for the current sample.
    [[nodiscard]] std::vector<Vector> governor_states() const {
        std::vector<Vector> s;
        s.reserve(static_cast<std::size_t>(n_ch_));
        for (int i = 0; i < n_ch_; ++i) {
            if (cfg_.kind == ObserverKind::Centralized) {
                s.push_back(detail::concat(f_.state(), plant_obs_.estimate()));
            } else {
                s.push_back(ch_obs_[static_cast<std::size_t>(i)].estimate());
            }
        }
        return s;
    }

private:
    DrgTfPipeline(LinearSystem plant, TfDecoupling dec, RationalMatrix G_square, int n_ch, const Box& Y, const Box& W_dist,
                  const DrgTfOptions& opt, const RationalMatrix* G_w = nullptr)
        : plant_(std::move(plant)), dec_(std::move(dec)), G_square_(std::move(G_square)), cfg_(opt.observer), solver_(opt.solver) {
        n_ch_ = n_ch;
        n_v_ = dec_.F.cols();
        f_ = detail::FilterRunner(realize(dec_.F));
        finv_ = detail::FilterRunner(realize(dec_.F_inv));
        const bool robust = W_dist.dim() > 0;
        const bool identity = opt.method == TfMethod::Identity;
        if (cfg_.kind == ObserverKind::Centralized) {
            const LinearSystem w_aug = series(f_.system(), plant_);
            for (int i = 0; i < n_ch_; ++i) {
                const LinearSystem ch = subsystem(w_aug, {i}, {i});
                channels_.push_back(ch);
                mas_.push_back(channel_mas(ch, Y.component(i), W_dist, robust, identity, opt));
                mas_.back().channel = i;
            }
            std::vector<int> rows = cfg_.measured;
            if (rows.empty()) {
                for (int i = 0; i < plant_.p(); ++i) {
                    rows.push_back(i);
                }
            }
            std::vector<int> inputs;
            for (int j = 0; j < plant_.m(); ++j) {
                inputs.push_back(j);
            }
            const LinearSystem model = subsystem(plant_, rows, inputs);
            const LinearSystem nominal(model.A(), model.B(), model.C(), model.D());
            measured_rows_ = rows;
            const Matrix L = cfg_.gains.empty() ? default_observer_gain(nominal.A(), nominal.C()) : cfg_.gains.front();
            plant_obs_ = Luenberger(nominal, L);
        } else {
            for (int i = 0; i < n_ch_; ++i) {
                LinearSystem ch;
                if (robust && G_w != nullptr) {
                    RationalMatrix row(1, 1);
                    row(0, 0) = dec_.W(i, i);
                    ch = detail::split_disturbance(realize(hconcat(row, G_w->block(i, 0, 1, G_w->cols()))),
                                                   G_w->cols());
                } else {
                    ch = realize(dec_.W(i, i));
                }
                channels_.push_back(ch);
                mas_.push_back(channel_mas(ch, Y.component(i), W_dist, robust, identity, opt));
                mas_.back().channel = i;
                switch (cfg_.kind) {
                case ObserverKind::OpenLoop:
                case ObserverKind::Measured:
                    ch_obs_.push_back(Luenberger::open_loop(ch));
                    break;
                case ObserverKind::DecoupledLuenberger: {
                    const LinearSystem nominal(ch.A(), ch.B(), ch.C(), ch.D());
                    const Matrix L = static_cast<std::size_t>(i) < cfg_.gains.size()
                                         ? cfg_.gains[static_cast<std::size_t>(i)]
                                         : default_observer_gain(ch.A(), ch.C());
                    ch_obs_.emplace_back(nominal, L);
                    break;
                }
                case ObserverKind::Centralized:
                    break;
                }
            }
        }
        reset();
    }

    static Mas channel_mas(const LinearSystem& ch, const Box& Yi, const Box& W_dist, bool robust, bool identity,
                           const DrgTfOptions& opt) {
        if (identity && !robust) {
            return delay_mas(Yi, ch.n());
        }
        if (robust) {
            return build_robust_mas(ch, Yi, W_dist, opt.epsilon, opt.t_max);
        }
        return build_mas(ch, Yi, opt.epsilon, opt.t_max);
    }

    double observe(const Vector& v, const Vector& u, const Vector& y, const Vector& w) {
        double err = 0.0;
        if (cfg_.kind == ObserverKind::Centralized) {
            err = (plant_obs_.estimate() - x_).norm();
            Vector ym(static_cast<Eigen::Index>(measured_rows_.size()));
            for (std::size_t k = 0; k < measured_rows_.size(); ++k) {
                ym(static_cast<Eigen::Index>(k)) = y(measured_rows_[k]);
            }
            plant_obs_.update(u, ym);
            return err;
        }
        for (int i = 0; i < n_ch_; ++i) {
            auto& o = ch_obs_[static_cast<std::size_t>(i)];
            const Vector vi = Vector::Constant(1, v(i));
            const Vector yi = Vector::Constant(1, y(i));
            if (cfg_.kind == ObserverKind::Measured) {
                err = std::max(err, std::abs(y(i) - (o.predict_output(vi) + o.model().Dw() * w)(0)));
                o.update(vi, yi, w);
            } else {
                err = std::max(err, std::abs(y(i) - o.predict_output(vi)(0)));
                o.update(vi, yi);
            }
        }
        return err;
    }

    LinearSystem plant_;
    TfDecoupling dec_;
    RationalMatrix G_square_;
    ObserverConfig cfg_;
    GovernorSolver solver_ = GovernorSolver::Explicit;
    int n_ch_ = 0;
    int n_v_ = 0;
    detail::FilterRunner f_;
    detail::FilterRunner finv_;
    std::vector<LinearSystem> channels_;
    std::vector<Mas> mas_;
    std::vector<Luenberger> ch_obs_;
    Luenberger plant_obs_;
    std::vector<int> measured_rows_;
    std::optional<IcCancellation> ic_;
    Vector x_;
    Vector v_prev_;
    int t_ = 0;
    int hold_ = 0;
};

enum class SsMethod { Identity, PoleAssignment };

struct DrgSsOptions {
    SsMethod method = SsMethod::Identity;
    std::vector<Matrix> M; ///< pole-assignment coefficients M_0, M_1, ...
    double epsilon = kDefaultEpsilon;
    int t_max = kDefaultTmax;
    ObserverConfig observer{ObserverKind::Measured, {}, {}, 50};
    GovernorSolver solver = GovernorSolver::Explicit;
};

/// r' = Gamma^{-1}(r - Phi x) -> bank of scalar governors -> u = Gamma v + Phi x.
/// The feedback state is the true plant state (measured kind) or a
/// Luenberger estimate on the plant outputs (centralized kind).
class DrgSsPipeline {
public:
    static DrgSsPipeline build(const LinearSystem& S, const Box& Y, const DrgSsOptions& opt = {}) {
        detail::check_channel_count(Y, S.p());
        return DrgSsPipeline(S, design(S, opt), Y, Box(), opt);
    }

    /// Per-channel robust sets for x(t+1) = A_bar x + (B Gamma)_i v_i + Bw d.
    static DrgSsPipeline build_robust(const LinearSystem& S, const Box& Y, const Box& W_dist,
                                      const DrgSsOptions& opt = {}) {
        detail::check_channel_count(Y, S.p());
        require(W_dist.dim() == S.nw(), ErrorKind::DimensionMismatch, "disturbance box must match disturbance channels");
        return DrgSsPipeline(S, design(S, opt), Y, W_dist, opt);
    }

    /// Pipeline with externally built channel sets (parametric uncertainty).
    static DrgSsPipeline from_parts(const LinearSystem& S, SsDecoupling dec, std::vector<Mas> mas,
                                    const DrgSsOptions& opt = {}) {
        require(static_cast<int>(mas.size()) == S.p(), ErrorKind::DimensionMismatch, "one set per output");
        DrgSsPipeline out(S, std::move(dec), opt);
        out.mas_ = std::move(mas);
        out.reset();
        return out;
    }

    void reset(const Vector& x0 = Vector(), bool x0_known = true, const Vector& v_init = Vector()) {
        x_ = x0.size() ? x0 : Vector::Zero(plant_.n());
        require(x_.size() == plant_.n(), ErrorKind::DimensionMismatch, "plant initial state size");
        v_prev_ = v_init.size() ? v_init : Vector::Zero(plant_.p());
        require(v_prev_.size() == plant_.p(), ErrorKind::DimensionMismatch, "initial v size");
        t_ = 0;
        hold_ = x0_known ? 0 : cfg_.warmup;
        if (cfg_.kind == ObserverKind::Centralized) {
            obs_.reset(x0_known ? x_ : Vector::Zero(plant_.n()));
        }
    }

    /// Replaces the true plant while keeping the design (vertex tests).
    void set_plant(const LinearSystem& truth) {
        require(truth.n() == plant_.n() && truth.m() == plant_.m() && truth.p() == plant_.p(),
                ErrorKind::DimensionMismatch, "replacement plant has different sizes");
        truth_ = truth;
    }

    StepRecord step(const Vector& r, const Vector& d = Vector()) {
        require(r.size() == plant_.p(), ErrorKind::DimensionMismatch, "reference size");
        const Vector w = d.size() ? d : Vector::Zero(truth_.nw());
        require(w.size() == truth_.nw(), ErrorKind::DimensionMismatch, "disturbance size");
        const Vector xh = estimate();
        StepRecord rec;
        rec.r = r;
        rec.r_prime = gamma_inv_ * (r - dec_.Phi * xh);
        rec.v = v_prev_;
        rec.kappa = Vector::Zero(plant_.p());
        if (t_ >= hold_) {
            const std::vector<Vector> states(mas_.size(), xh);
            const auto start = std::chrono::steady_clock::now();
            detail::bank(solver_, mas_, states, v_prev_, rec.r_prime, rec.v, rec.kappa);
            rec.governor_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        rec.u = dec_.Gamma * rec.v + dec_.Phi * xh;
        rec.y = truth_.C() * x_ + truth_.D() * rec.u + truth_.Dw() * w;
        rec.obs_err = (xh - x_).norm();
        if (cfg_.kind == ObserverKind::Centralized) {
            Vector ym(static_cast<Eigen::Index>(measured_rows_.size()));
            for (std::size_t k = 0; k < measured_rows_.size(); ++k) {
                ym(static_cast<Eigen::Index>(k)) = rec.y(measured_rows_[k]);
            }
            obs_.update(rec.u, ym);
        }
        x_ = truth_.A() * x_ + truth_.B() * rec.u + truth_.Bw() * w;
        v_prev_ = rec.v;
        ++t_;
        return rec;
    }

    [[nodiscard]] const LinearSystem& plant() const noexcept { return plant_; }
    [[nodiscard]] const SsDecoupling& decoupling() const noexcept { return dec_; }
    [[nodiscard]] const std::vector<Mas>& mas() const noexcept { return mas_; }
    [[nodiscard]] const Vector& plant_state() const noexcept { return x_; }
    [[nodiscard]] LinearSystem closed_loop_system() const { return closed_loop(plant_, dec_); }
    /// L1 norm of the feedback loop; nullopt when A + B Phi is unstable.
    [[nodiscard]] std::optional<double> certificate() const noexcept { return certificate_; }
    /// True when the loop is not certified BIBO stable. Steps still run.
    [[nodiscard]] bool stability_warning() const noexcept { return !certificate_ || *certificate_ >= 1.0; }
    void set_solver(GovernorSolver s) noexcept { solver_ = s; }

    static SsDecoupling design(const LinearSystem& S, const DrgSsOptions& opt) {
        const LinearSystem nominal(S.A(), S.B(), S.C(), S.D());
        return opt.method == SsMethod::Identity ? fw_identity_pair(nominal) : fw_pole_assignment_pair(nominal, opt.M);
    }

private:
    DrgSsPipeline(const LinearSystem& S, SsDecoupling dec, const DrgSsOptions& opt)
        : plant_(S), truth_(S), dec_(std::move(dec)), cfg_(opt.observer), solver_(opt.solver) {
        require(cfg_.kind == ObserverKind::Measured || cfg_.kind == ObserverKind::Centralized, ErrorKind::Validation,
                "state feedback needs the measured or centralized observer");
        gamma_inv_ = dec_.Gamma.fullPivLu().inverse();
        try {
            certificate_ = small_gain_certificate(S, dec_);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnstableLoop) {
                throw;
            }
        }
        if (cfg_.kind == ObserverKind::Centralized) {
            measured_rows_ = cfg_.measured;
            if (measured_rows_.empty()) {
                for (int i = 0; i < S.p(); ++i) {
                    measured_rows_.push_back(i);
                }
            }
            std::vector<int> inputs;
            for (int j = 0; j < S.m(); ++j) {
                inputs.push_back(j);
            }
            const LinearSystem sub = subsystem(S, measured_rows_, inputs);
            const LinearSystem model(sub.A(), sub.B(), sub.C(), sub.D());
            obs_ = Luenberger(model, cfg_.gains.empty() ? default_observer_gain(model.A(), model.C()) : cfg_.gains.front());
        }
    }

    DrgSsPipeline(const LinearSystem& S, SsDecoupling dec, const Box& Y, const Box& W_dist, const DrgSsOptions& opt)
        : DrgSsPipeline(S, std::move(dec), opt) {
        const LinearSystem cl = closed_loop(S, dec_);
        require(cl.is_stable(), ErrorKind::UnstableLoop,
                "A + B Phi has spectral radius " + std::to_string(cl.spectral_radius()));
        const bool robust = W_dist.dim() > 0;
        const bool pure_delay =
            opt.method == SsMethod::Identity && std::all_of(dec_.d.begin(), dec_.d.end(), [](int d) { return d == 0; });
        for (int i = 0; i < S.p(); ++i) {
            const LinearSystem ch(cl.A(), cl.B().col(i), cl.C().row(i), cl.D().block(i, i, 1, 1), cl.Bw(),
                                  cl.Dw().row(i));
            if (robust) {
                mas_.push_back(build_robust_mas(ch, Y.component(i), W_dist, opt.epsilon, opt.t_max));
            } else if (pure_delay) {
                mas_.push_back(delay_mas(Y.component(i), S.n()));
            } else {
                mas_.push_back(build_mas(ch, Y.component(i), opt.epsilon, opt.t_max));
            }
            mas_.back().channel = i;
        }
        reset();
    }

    [[nodiscard]] Vector estimate() const { return cfg_.kind == ObserverKind::Centralized ? obs_.estimate() : x_; }

    LinearSystem plant_;
    LinearSystem truth_;
    SsDecoupling dec_;
    Matrix gamma_inv_;
    ObserverConfig cfg_;
    GovernorSolver solver_ = GovernorSolver::Explicit;
    std::optional<double> certificate_;
    std::vector<Mas> mas_;
    Luenberger obs_;
    std::vector<int> measured_rows_;
    Vector x_;
    Vector v_prev_;
    int t_ = 0;
    int hold_ = 0;
};

/// Plant matrices at one vertex of the uncertainty polytope.
struct Vertex {
    Matrix A;
    Matrix B;
};

/// Bounds on v_k implied by its own steady-state constraint at every vertex:
/// the intersection over j of {v : W_kk0^(j) v in (1 - eps) Y_k}.
[[nodiscard]] inline Box steady_v_bounds(const std::vector<Vertex>& vertices, const Matrix& C, const SsDecoupling& dec,
                                         const Box& Y, double epsilon) {
    const int m = static_cast<int>(C.rows());
    Vector lo = Vector::Constant(m, -kInf);
    Vector hi = Vector::Constant(m, kInf);
    const Box Yt = Y.scaled(1.0 - epsilon);
    for (const Vertex& vx : vertices) {
        const LinearSystem cl(vx.A + vx.B * dec.Phi, vx.B * dec.Gamma, C, Matrix::Zero(m, m));
        const DcGain g = dc_gain(cl);
        for (int k = 0; k < m; ++k) {
            const double w = g(k, k);
            require(std::abs(w) > 1e-12, ErrorKind::SingularTransferMatrix,
                    "channel " + std::to_string(k) + " has zero steady-state gain at a vertex");
            double a = Yt.lower(k) / w;
            double b = Yt.upper(k) / w;
            if (w < 0.0) {
                std::swap(a, b);
            }
            lo(k) = std::max(lo(k), a);
            hi(k) = std::min(hi(k), b);
        }
    }
    for (int k = 0; k < m; ++k) {
        require(lo(k) <= hi(k), ErrorKind::EmptyRobustMas,
                "vertices admit no common steady input on channel " + std::to_string(k));
    }
    return {lo, hi};
}

struct ParamOptions {
    SsMethod method = SsMethod::Identity;
    std::vector<Matrix> M;
    double epsilon = kDefaultEpsilon;
    int t_max = kDefaultTmax;
    Box v_limit; ///< optional extra box on v, intersected with the steady bounds
};

namespace detail {

using Row = std::pair<Eigen::RowVectorXd, double>;

/// Robust admissible set of one channel over the polytopic family
/// x+ = A_j x + b_j v_i + E_j w, y_i = C_i x, w in V_other. Rows are mapped
/// backwards through every vertex until no mapped row tightens the set.
inline Mas polytopic_channel_mas(const std::vector<LinearSystem>& vx, const Box& Yi, const Box& V_other,
                                 const Box& v_box, double epsilon, int t_max) {
    const int n = vx.front().n();
    std::vector<Row> rows;
    {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(1, n + 1);
        M.leftCols(n) = vx.front().C();
        push_bounded_rows(rows, M, Yi);
        Eigen::MatrixXd V = Eigen::MatrixXd::Zero(1, n + 1);
        V(0, n) = 1.0;
        push_bounded_rows(rows, V, v_box);
    }
    for (const LinearSystem& s : vx) {
        const Box settled = tightened_sequence(s, Yi, V_other, 100 * (t_max + 1), 1e-14).back().scaled(1.0 - epsilon);
        require(settled.lower(0) < 0.0 && settled.upper(0) > 0.0, ErrorKind::EmptyRobustMas,
                "coupling through the other channels consumes the constraint set");
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(1, n + 1);
        M(0, n) = dc_gain(LinearSystem(s.A(), s.B(), s.C(), s.D()))(0, 0);
        push_bounded_rows(rows, M, settled);
    }
    std::vector<Row> frontier;
    for (const auto& r : rows) {
        if (!r.first.head(n).isZero(0.0)) {
            frontier.push_back(r);
        }
    }
    Polytope acc = Polytope::from_rows(rows, n + 1);
    for (int t = 0; t <= t_max; ++t) {
        std::vector<Row> next;
        for (const auto& [a, b] : frontier) {
            const Eigen::RowVectorXd ax = a.head(n);
            for (const LinearSystem& s : vx) {
                Eigen::RowVectorXd na(n + 1);
                na.head(n) = ax * s.A();
                na(n) = (ax * s.B())(0) + a(n);
                const double nb = b - V_other.support(ax * s.Bw());
                if (!is_redundant(acc, na, nb)) {
                    rows.emplace_back(na, nb);
                    next.emplace_back(na, nb);
                    acc = Polytope::from_rows(rows, n + 1);
                }
            }
        }
        if (next.empty()) {
            Polytope poly = remove_redundant(acc);
            require(!is_empty(poly), ErrorKind::EmptyRobustMas, "robust channel set is empty");
            return {std::move(poly), n, 1, t, epsilon, -1};
        }
        frontier = std::move(next);
    }
    throw Error(ErrorKind::NotFinitelyDetermined, "vertex row generation did not settle by t_max");
}

} // namespace detail

/// DRG-ss for a plant whose (A, B) lie in the convex hull of `vertices`.
/// The nominal vertex is decoupled; each channel set is robust to every vertex
/// and treats the other governed inputs as a bounded disturbance.
[[nodiscard]] inline DrgSsPipeline param_uncertain_build(const std::vector<Vertex>& vertices, const Matrix& C,
                                                         int nominal, const Box& Y, const ParamOptions& opt = {}) {
    require(!vertices.empty(), ErrorKind::Validation, "need at least one vertex");
    require(nominal >= 0 && nominal < static_cast<int>(vertices.size()), ErrorKind::Validation,
            "nominal vertex index out of range");
    const int m = static_cast<int>(C.rows());
    detail::check_channel_count(Y, m);
    require(Y.bounded(), ErrorKind::Validation, "parametric sets need two-sided output bounds");
    const Vertex& nv = vertices[static_cast<std::size_t>(nominal)];
    const LinearSystem S(nv.A, nv.B, C, Matrix::Zero(m, nv.B.cols()));
    DrgSsOptions ss;
    ss.method = opt.method;
    ss.M = opt.M;
    ss.epsilon = opt.epsilon;
    ss.t_max = opt.t_max;
    SsDecoupling dec = DrgSsPipeline::design(S, ss);
    for (std::size_t j = 0; j < vertices.size(); ++j) {
        const Matrix Abar = vertices[j].A + vertices[j].B * dec.Phi;
        const double rho = Abar.eigenvalues().cwiseAbs().maxCoeff();
        require(rho < 1.0, ErrorKind::UnstableVertexLoop,
                "vertex " + std::to_string(j) + " loop has spectral radius " + std::to_string(rho));
    }
    Box vb = steady_v_bounds(vertices, C, dec, Y, opt.epsilon);
    if (opt.v_limit.dim() > 0) {
        require(opt.v_limit.dim() == m, ErrorKind::DimensionMismatch, "v limit size");
        const Vector lo = vb.lower.cwiseMax(opt.v_limit.lower);
        const Vector hi = vb.upper.cwiseMin(opt.v_limit.upper);
        require((lo.array() <= hi.array()).all(), ErrorKind::EmptyRobustMas, "v limit misses the steady bounds");
        vb = Box(lo, hi);
    }
    require(vb.bounded(), ErrorKind::EmptyRobustMas, "governed inputs are unbounded; supply a v limit");
    std::vector<Mas> mas;
    for (int i = 0; i < m; ++i) {
        std::vector<int> others;
        for (int k = 0; k < m; ++k) {
            if (k != i) {
                others.push_back(k);
            }
        }
        Vector olo(static_cast<Eigen::Index>(others.size()));
        Vector ohi(static_cast<Eigen::Index>(others.size()));
        std::vector<LinearSystem> vx;
        for (const Vertex& v : vertices) {
            const Matrix Abar = v.A + v.B * dec.Phi;
            const Matrix Bbar = v.B * dec.Gamma;
            Matrix E(Abar.rows(), static_cast<Eigen::Index>(others.size()));
            for (std::size_t k = 0; k < others.size(); ++k) {
                E.col(static_cast<Eigen::Index>(k)) = Bbar.col(others[k]);
            }
            vx.emplace_back(Abar, Bbar.col(i), C.row(i), Matrix::Zero(1, 1), E,
                            Matrix::Zero(1, static_cast<Eigen::Index>(others.size())));
        }
        for (std::size_t k = 0; k < others.size(); ++k) {
            olo(static_cast<Eigen::Index>(k)) = vb.lower(others[k]);
            ohi(static_cast<Eigen::Index>(k)) = vb.upper(others[k]);
        }
        mas.push_back(detail::polytopic_channel_mas(vx, Y.component(i), Box(olo, ohi), vb.component(i), opt.epsilon,
                                                    opt.t_max));
        mas.back().channel = i;
    }
    return DrgSsPipeline::from_parts(S, std::move(dec), std::move(mas));
}

/// Tall plant: p outputs, m < p inputs. The leading m outputs are decoupled
/// and get one scalar governor each; the remaining outputs share one scalar
/// governor over all inputs. Every set is over the state of (F, G) in series.
struct TallDrg {
    TfDecoupling dec;
    LinearSystem w_aug;
    std::vector<Mas> channel_mas;
    Mas srg_mas;
};

[[nodiscard]] inline TallDrg build_tall(const RationalMatrix& G, const Box& Y, double epsilon = kDefaultEpsilon,
                                        int t_max = kDefaultTmax) {
    const int p = G.rows();
    const int m = G.cols();
    require(p > m, ErrorKind::DimensionMismatch, "tall plant needs more outputs than inputs");
    detail::check_channel_count(Y, p);
    TallDrg out;
    out.dec = design_tf_diagonal(G.block(0, 0, m, m));
    out.w_aug = series(realize(out.dec.F), realize(G));
    std::vector<int> inputs;
    for (int j = 0; j < m; ++j) {
        inputs.push_back(j);
        LinearSystem ch = subsystem(out.w_aug, {j}, {j});
        out.channel_mas.push_back(build_mas(ch, Y.component(j), epsilon, t_max));
        out.channel_mas.back().channel = j;
    }
    std::vector<int> rest;
    for (int i = m; i < p; ++i) {
        rest.push_back(i);
    }
    const LinearSystem tail = subsystem(out.w_aug, rest, inputs);
    out.srg_mas = build_mas(tail, Box(Y.lower.tail(p - m), Y.upper.tail(p - m)), epsilon, t_max);
    return out;
}

enum class FuseStrategy { MinKappa, Projection };

struct FuseResult {
    Vector v;
    Vector kappa;        ///< per decoupled channel, then the shared governor
    bool used_drg_target = false; ///< projection picked the point toward the channel-wise result
};

/// One governor step of a tall plant. Both candidates stay on a segment from
/// v_prev whose end point is admissible for every set, so the fused v is
/// admissible for all outputs.
[[nodiscard]] inline FuseResult tall_fuse_step(const TallDrg& tall, const Vector& xw, const Vector& v_prev,
                                               const Vector& r_prime, FuseStrategy strategy) {
    const int m = static_cast<int>(tall.channel_mas.size());
    require(v_prev.size() == m && r_prime.size() == m, ErrorKind::DimensionMismatch, "tall step sizes");
    FuseResult out;
    out.kappa = Vector::Zero(m + 1);
    try {
        Vector v_d(m);
        for (int i = 0; i < m; ++i) {
            const KappaResult k = srg_step_explicit(tall.channel_mas[static_cast<std::size_t>(i)], xw, v_prev(i),
                                                    r_prime(i));
            out.kappa(i) = k.kappa;
            v_d(i) = k.v_new(0);
        }
        const KappaResult ks = srg_step_explicit(tall.srg_mas, xw, v_prev, r_prime);
        out.kappa(m) = ks.kappa;
        const double kbar = out.kappa.minCoeff();
        const Vector v_min = kbar >= 1.0 ? r_prime : Vector(v_prev + kbar * (r_prime - v_prev));
        if (strategy == FuseStrategy::MinKappa) {
            out.v = v_min;
            return out;
        }
        const KappaResult kt2 = srg_step_explicit(tall.srg_mas, xw, v_prev, v_d);
        const Vector v_t2 = kt2.kappa >= 1.0 ? v_d : Vector(v_prev + kt2.kappa * (v_d - v_prev));
        if ((r_prime - v_t2).norm() < (r_prime - v_min).norm()) {
            out.v = v_t2;
            out.used_drg_target = true;
        } else {
            out.v = v_min;
        }
        return out;
    } catch (const Error& e) {
        if (strategy == FuseStrategy::Projection && e.kind() == ErrorKind::InfeasibleStart) {
            throw Error(ErrorKind::BothProjectionsInfeasible, e.what());
        }
        throw;
    }
}

} // namespace drg

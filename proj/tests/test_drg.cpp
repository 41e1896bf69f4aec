#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <drg/drg.hpp>
#include <drg/norms.hpp>

#include "plants.hpp"
#include "theorems.hpp"

using namespace drg;

namespace {

const Box kYtf(Eigen::Vector2d(-1.2, -3.9), Eigen::Vector2d(1.2, 3.9));
const Box kYss(Eigen::Vector2d(-kInf, -kInf), Eigen::Vector2d(2.1, 1.1));

double violation(const Box& Y, const Vector& y) {
    double worst = -kInf;
    for (int i = 0; i < Y.dim(); ++i) {
        worst = std::max({worst, y(i) - Y.upper(i), Y.lower(i) - y(i)});
    }
    return worst;
}

template <class Pipeline>
std::vector<StepRecord> run(Pipeline& p, const Vector& r, int steps) {
    std::vector<StepRecord> out;
    for (int t = 0; t < steps; ++t) {
        out.push_back(p.step(r));
    }
    return out;
}

double max_violation(const Box& Y, const std::vector<StepRecord>& trace) {
    double worst = -kInf;
    for (const auto& s : trace) {
        worst = std::max(worst, violation(Y, s.y));
    }
    return worst;
}

RationalMatrix disturbance_tf() {
    RationalMatrix gw(2, 1);
    gw(0, 0) = RationalTf(Polynomial{0.2}, Polynomial::from_roots({Complex(0.5, 0), Complex(0.5, 0)}) *
                                               Polynomial{1.0, 3.0});
    gw(1, 0) = RationalTf(Polynomial{0.3}, Polynomial{1.0, 2.0} *
                                               Polynomial::from_roots({Complex(0.7, 0), Complex(0.7, 0)}));
    return gw;
}

LinearSystem channel_w11() {
    return realize(RationalTf(Polynomial{0.9}, Polynomial::from_roots({Complex(0, 0), Complex(0.2, 0), Complex(0.2, 0)})));
}

double peak_to_peak(const std::vector<StepRecord>& trace, int channel, int from, int to) {
    double lo = kInf;
    double hi = -kInf;
    for (int t = from; t < to; ++t) {
        lo = std::min(lo, trace[static_cast<std::size_t>(t)].y(channel));
        hi = std::max(hi, trace[static_cast<std::size_t>(t)].y(channel));
    }
    return hi - lo;
}

} // namespace

TEST(Observer, KindNamesRoundTrip) {
    for (auto k : {ObserverKind::OpenLoop, ObserverKind::DecoupledLuenberger, ObserverKind::Centralized,
                   ObserverKind::Measured}) {
        EXPECT_EQ(observer_kind_from_string(to_string(k)), k);
    }
    EXPECT_THROW((void)observer_kind_from_string("kalman"), Error);
}

TEST(Observer, OpenLoopIsExactWithExactModel) {
    const LinearSystem s = channel_w11();
    Luenberger o = Luenberger::open_loop(s);
    Vector x = Vector::LinSpaced(s.n(), 0.1, 0.3);
    o.reset(x);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const Vector v = Vector::Constant(1, u(rng));
        const Vector y = s.C() * x + s.D() * v;
        o.update(v, y);
        x = s.A() * x + s.B() * v;
        EXPECT_EQ(o.estimate(), x);
    }
}

TEST(Observer, DeadbeatConvergesFromWrongState) {
    const LinearSystem s = channel_w11();
    Luenberger o(s, deadbeat_gain(s.A(), s.C()));
    Vector x = Vector::Constant(s.n(), 0.5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 20 * s.n(); ++t) {
        const Vector v = Vector::Constant(1, u(rng));
        o.update(v, s.C() * x + s.D() * v);
        x = s.A() * x + s.B() * v;
    }
    EXPECT_LT((o.estimate() - x).norm(), 1e-6);
}

TEST(Observer, DefaultGainIsStable) {
    const LinearSystem s = realize(plants::coupled_tf(0.05));
    const Matrix L = default_observer_gain(s.A(), s.C());
    EXPECT_LT((s.A() - L * s.C()).eigenvalues().cwiseAbs().maxCoeff(), 1.0);
}

TEST(Observer, UnstableGainRejected) {
    const LinearSystem s = channel_w11();
    try {
        Luenberger o(s, Matrix::Constant(s.n(), 1, 50.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnstableObserver);
    }
}

TEST(DrgTf, CoupledPlantKeepsConstraints) {
    for (double q : {0.05, 0.5}) {
        DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(q), kYtf);
        const auto trace = run(p, Eigen::Vector2d(1, 1), 500);
        EXPECT_LE(max_violation(kYtf, trace), 1e-9) << "q=" << q;
        for (const auto& s : trace) {
            EXPECT_TRUE((s.kappa.array() >= 0.0).all() && (s.kappa.array() <= 1.0).all());
        }
    }
}

TEST(DrgTf, AdmissibleReferenceIsDelayedThrough) {
    const RationalMatrix G = plants::coupled_tf(0.05);
    DrgTfPipeline p = DrgTfPipeline::build(G, kYtf);
    const Vector r = Eigen::Vector2d(0.05, 0.05);
    const auto trace = run(p, r, 200);
    const int delay = p.decoupling().beta1 + p.decoupling().beta2;
    for (int t = 0; t < 200; ++t) {
        const auto& s = trace[static_cast<std::size_t>(t)];
        EXPECT_EQ(s.kappa, Eigen::Vector2d(1, 1));
        if (t >= delay) {
            EXPECT_LT((s.u - r).norm(), 1e-9) << "t=" << t;
        } else {
            EXPECT_LT(s.u.norm(), 1e-9) << "t=" << t;
        }
    }
}

TEST(DrgTf, WorseConditioningGivesLargerGap) {
    double gap[2];
    int k = 0;
    for (double q : {0.05, 0.5}) {
        DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(q), kYtf);
        const auto trace = run(p, Eigen::Vector2d(1, 1), 500);
        gap[k++] = (trace.back().u - trace.back().r).norm();
    }
    EXPECT_GT(gap[1], gap[0]);
}

TEST(DrgTf, SolversAgree) {
    DrgTfOptions lp;
    lp.solver = GovernorSolver::ImplicitLp;
    DrgTfPipeline a = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf);
    DrgTfPipeline b = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf, lp);
    for (int t = 0; t < 300; ++t) {
        const auto sa = a.step(Eigen::Vector2d(1, 1));
        const auto sb = b.step(Eigen::Vector2d(1, 1));
        EXPECT_NEAR((sa.v - sb.v).cwiseAbs().maxCoeff(), 0.0, 1e-8);
    }
}

TEST(DrgTf, IdentityMethodSaturatesReference) {
    DrgTfOptions opt;
    opt.method = TfMethod::Identity;
    DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf, opt);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Vector r = Eigen::Vector2d(1, 1);
    for (int t = 0; t < 500; ++t) {
        if (t % 50 == 0) {
            r = Eigen::Vector2d(u(rng), u(rng));
        }
        const auto s = p.step(r);
        for (int i = 0; i < 2; ++i) {
            EXPECT_EQ(s.v(i), std::clamp(s.r_prime(i), kYtf.lower(i), kYtf.upper(i)));
        }
    }
}

TEST(DrgTf, IdentityMethodOscillatesOnUnderdampedPlant) {
    const RationalMatrix G = plants::underdamped_tf(0.05);
    DrgTfOptions id;
    id.method = TfMethod::Identity;
    DrgTfPipeline a = DrgTfPipeline::build(G, kYtf);
    DrgTfPipeline b = DrgTfPipeline::build(G, kYtf, id);
    const auto ta = run(a, Eigen::Vector2d(1, 1), 500);
    const auto tb = run(b, Eigen::Vector2d(1, 1), 500);
    EXPECT_LE(max_violation(kYtf, ta), 1e-9);
    EXPECT_LE(max_violation(kYtf, tb), 1e-9);
    // Compare after the rise: from the first sample where y1 reaches its bound.
    const auto arrival = [](const std::vector<StepRecord>& tr) {
        int t = 0;
        while (tr[static_cast<std::size_t>(t)].y(0) < 1.2 - 1e-9) {
            ++t;
        }
        return t;
    };
    EXPECT_GE(peak_to_peak(tb, 0, arrival(tb), 300), 2.0 * peak_to_peak(ta, 0, arrival(ta), 300));
}

TEST(DrgTf, CentralizedObserverUsesAugmentedSets) {
    DrgTfOptions opt;
    opt.observer.kind = ObserverKind::Centralized;
    DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf, opt);
    for (const Mas& m : p.mas()) {
        EXPECT_EQ(m.n_x, p.f_system().n() + p.plant().n());
    }
    const auto trace = run(p, Eigen::Vector2d(1, 1), 500);
    EXPECT_LE(max_violation(kYtf, trace), 1e-9);
    EXPECT_LT(trace.back().obs_err, 1e-9);
}

TEST(DrgTf, DecoupledLuenbergerMatchesOpenLoopWithExactModel) {
    DrgTfOptions opt;
    opt.observer.kind = ObserverKind::DecoupledLuenberger;
    DrgTfPipeline a = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf);
    DrgTfPipeline b = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf, opt);
    for (int t = 0; t < 300; ++t) {
        const auto sa = a.step(Eigen::Vector2d(1, 1));
        const auto sb = b.step(Eigen::Vector2d(1, 1));
        EXPECT_LT((sa.y - sb.y).norm(), 1e-9);
        EXPECT_LT(sb.obs_err, 1e-9);
    }
}

TEST(DrgTf, UnknownInitialStateHoldsDuringWarmup) {
    DrgTfOptions opt;
    opt.observer.kind = ObserverKind::Centralized;
    opt.observer.warmup = 30;
    DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf, opt);
    p.reset(Vector::Constant(p.plant().n(), 0.05), false);
    const auto trace = run(p, Eigen::Vector2d(1, 1), 200);
    for (int t = 0; t < 30; ++t) {
        EXPECT_EQ(trace[static_cast<std::size_t>(t)].v, Vector::Zero(2));
    }
    EXPECT_LT(trace[30].obs_err, 1e-3);
    EXPECT_LE(max_violation(kYtf, trace), 1e-9);
}

TEST(DrgTf, CancellationRemovesFreeResponseAfterDelay) {
    const RationalMatrix G = plants::coupled_tf(0.05);
    DrgTfPipeline a = DrgTfPipeline::build(G, kYtf);
    DrgTfPipeline b = DrgTfPipeline::build(G, kYtf);
    b.reset(Vector::LinSpaced(b.plant().n(), -0.1, 0.1));
    const int rho = IcCancellation(G, b.plant(), b.plant_state()).rho();
    for (int t = 0; t < 200; ++t) {
        const auto sa = a.step(Eigen::Vector2d(1, 1));
        const auto sb = b.step(Eigen::Vector2d(1, 1));
        if (t >= rho) {
            EXPECT_LT((sa.y - sb.y).norm(), 1e-8) << "t=" << t;
        }
    }
}

TEST(DrgTf, RobustBuildWithZeroDisturbanceMatchesNominal) {
    const RationalMatrix G = plants::coupled_tf(0.05);
    DrgTfPipeline a = DrgTfPipeline::build(G, kYtf);
    DrgTfPipeline b = DrgTfPipeline::build_robust(G, disturbance_tf(), kYtf, Box::interval(0.0, 0.0));
    for (int i = 0; i < 2; ++i) {
        const LinearSystem& ch = b.channels()[static_cast<std::size_t>(i)];
        const Mas nominal = build_mas(LinearSystem(ch.A(), ch.B(), ch.C(), ch.D()), kYtf.component(i));
        const Polytope& pr = b.mas()[static_cast<std::size_t>(i)].poly;
        std::mt19937_64 rng(7);
        const Box bb = bounding_box(nominal.poly);
        std::uniform_real_distribution<double> u(-0.1, 1.1);
        for (int k = 0; k < 2000; ++k) {
            Vector z(bb.dim());
            for (int j = 0; j < bb.dim(); ++j) {
                z(j) = bb.lower(j) + (bb.upper(j) - bb.lower(j)) * u(rng);
            }
            EXPECT_EQ(nominal.poly.contains(z, 1e-9), pr.contains(z, 1e-9));
        }
    }
    for (int t = 0; t < 300; ++t) {
        const auto sa = a.step(Eigen::Vector2d(1, 1));
        const auto sb = b.step(Eigen::Vector2d(1, 1), Vector::Zero(1));
        EXPECT_LT((sa.v - sb.v).norm(), 1e-8);
    }
}

TEST(DrgTf, RobustKeepsConstraintsUnderDisturbance) {
    const RationalMatrix G = plants::coupled_tf(0.05);
    const Box W = Box::interval(-0.1, 0.1);
    const DrgTfPipeline proto = DrgTfPipeline::build_robust(G, disturbance_tf(), kYtf, W);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        DrgTfPipeline p = proto;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> d(-0.1, 0.1);
        double worst = -kInf;
        for (int t = 0; t < 300; ++t) {
            worst = std::max(worst, violation(kYtf, p.step(Eigen::Vector2d(1, 1), Vector::Constant(1, d(rng))).y));
        }
        EXPECT_LE(worst, 1e-9) << "seed " << seed;
    }
}

TEST(DrgTf, InfeasibleStartCarriesChannel) {
    DrgTfPipeline p = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf);
    p.reset(Vector(), true, Eigen::Vector2d(0.0, 50.0));
    try {
        (void)p.step(Eigen::Vector2d(0, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InfeasibleStart);
        EXPECT_NE(std::string(e.what()).find("channel 1"), std::string::npos);
    }
}

namespace {

RationalMatrix scalar(const RationalTf& t) {
    RationalMatrix m(1, 1);
    m(0, 0) = t;
    return m;
}


} // namespace

TEST(Wide, SquareCaseReducesToDiagonalDesign) {
    const RationalMatrix G = plants::coupled_tf(0.05);
    const WideDecoupling w = squarify_wide(G, RationalMatrix(), RationalMatrix());
    const TfDecoupling d = design_tf_diagonal(G);
    EXPECT_EQ(w.dec.beta1, d.beta1);
    const Complex z(1.3, 0.4);
    EXPECT_LT((w.dec.F(z) - d.F(z)).norm(), 1e-12);
}

TEST(Wide, IdenticalFictitiousBlocksGiveIdentity) {
    const RationalTf gb(Polynomial{0.5}, Polynomial{-0.5, 1.0});
    const WideDecoupling w = squarify_wide(plants::wide_tf(), scalar(gb), scalar(gb));
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> mag(1.05, 3.0);
    std::uniform_real_distribution<double> ang(0.0, 6.283);
    for (int k = 0; k < 50; ++k) {
        const Complex z = std::polar(mag(rng), ang(rng));
        const Complex pad = std::pow(z, -w.dec.beta1);
        EXPECT_LT(std::abs(w.dec.F(2, 2)(z) - pad), 1e-8);
        EXPECT_LT(std::abs(w.dec.F(2, 0)(z)) + std::abs(w.dec.F(2, 1)(z)), 1e-8);
    }
}

TEST(Wide, ClosedFormMatchesInverse) {
    const RationalTf gb(Polynomial{0.3}, Polynomial{-0.2, 1.0});
    const RationalTf gbw(Polynomial{0.5}, Polynomial{-0.5, 1.0});
    const WideDecoupling w = squarify_wide(plants::wide_tf(), scalar(gb), scalar(gbw));
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> mag(1.05, 3.0);
    std::uniform_real_distribution<double> ang(0.0, 6.283);
    for (int k = 0; k < 50; ++k) {
        const Complex z = std::polar(mag(rng), ang(rng));
        const Eigen::MatrixXcd expect = w.G_tilde(z).inverse() * w.dec.W(z);
        EXPECT_LT((w.dec.F(z) - expect).norm(), 1e-8 * (1.0 + expect.norm()));
        EXPECT_LT((w.G_tilde(z) * w.dec.F(z) - w.dec.W(z)).norm(), 1e-8 * (1.0 + w.dec.W(z).norm()));
    }
}

TEST(Wide, SingularFictitiousBlockRejected) {
    try {
        (void)squarify_wide(plants::wide_tf(), RationalMatrix(1, 1), scalar(RationalTf(1.0)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularGBar);
    }
}

TEST(Wide, PipelineKeepsConstraints) {
    const RationalTf gb(Polynomial{0.5}, Polynomial{-0.5, 1.0});
    const Box Y(Eigen::Vector2d(-0.8, -0.8), Eigen::Vector2d(0.8, 0.8));
    DrgTfPipeline p = DrgTfPipeline::build_wide(plants::wide_tf(), scalar(gb), scalar(gb), Y);
    EXPECT_EQ(p.governed_channels(), 2);
    const auto trace = run(p, Eigen::Vector3d(2.0, -1.0, 0.5), 300);
    EXPECT_LE(max_violation(Y, trace), 1e-9);
    for (const auto& s : trace) {
        EXPECT_EQ(s.v(2), s.r_prime(2));
    }
}

TEST(Tall, MinKappaOfList) {
    const Box Y(Eigen::Vector3d(-1, -1, -0.5), Eigen::Vector3d(1, 1, 0.5));
    const TallDrg tall = build_tall(plants::tall_tf(), Y);
    const FuseResult r = tall_fuse_step(tall, Vector::Zero(tall.w_aug.n()), Vector::Zero(2), Eigen::Vector2d(0.01, 0.01),
                                        FuseStrategy::MinKappa);
    EXPECT_EQ(r.v, Eigen::Vector2d(0.01, 0.01));
    EXPECT_EQ(r.kappa.minCoeff(), 1.0);
}

TEST(Tall, FusedInputAdmissibleAndProjectionNoWorse) {
    const Box Y(Eigen::Vector3d(-1, -1, -0.5), Eigen::Vector3d(1, 1, 0.5));
    const TallDrg tall = build_tall(plants::tall_tf(), Y);
    const LinearSystem& w = tall.w_aug;
    for (auto strategy : {FuseStrategy::MinKappa, FuseStrategy::Projection}) {
        Vector x = Vector::Zero(w.n());
        Vector v = Vector::Zero(2);
        int better = 0;
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        Vector r = Eigen::Vector2d(2.0, 0.5);
        for (int t = 0; t < 400; ++t) {
            if (t % 40 == 0) {
                r = Eigen::Vector2d(u(rng), u(rng));
            }
            const FuseResult f = tall_fuse_step(tall, x, v, r, strategy);
            for (std::size_t i = 0; i < tall.channel_mas.size(); ++i) {
                EXPECT_TRUE(tall.channel_mas[i].contains(x, f.v.segment(static_cast<Eigen::Index>(i), 1)));
            }
            EXPECT_TRUE(tall.srg_mas.contains(x, f.v));
            const Vector y = w.C() * x + w.D() * f.v;
            EXPECT_LE(violation(Y, y), 1e-9);
            if (strategy == FuseStrategy::Projection) {
                const FuseResult mk = tall_fuse_step(tall, x, v, r, FuseStrategy::MinKappa);
                EXPECT_LE((r - f.v).norm(), (r - mk.v).norm());
                better += (r - f.v).norm() < (r - mk.v).norm() ? 1 : 0;
            }
            x = w.A() * x + w.B() * f.v;
            v = f.v;
        }
        if (strategy == FuseStrategy::Projection) {
            EXPECT_GT(better, 0);
        }
    }
}

TEST(Tall, InconsistentStartRaises) {
    const Box Y(Eigen::Vector3d(-1, -1, -0.5), Eigen::Vector3d(1, 1, 0.5));
    const TallDrg tall = build_tall(plants::tall_tf(), Y);
    try {
        (void)tall_fuse_step(tall, Vector::Zero(tall.w_aug.n()), Eigen::Vector2d(40, 40), Eigen::Vector2d(0, 0),
                             FuseStrategy::Projection);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BothProjectionsInfeasible);
    }
}

namespace {

DrgSsOptions pole_options(double pole) {
    DrgSsOptions o;
    o.method = SsMethod::PoleAssignment;
    o.M = {Matrix(Eigen::Vector2d(pole, pole).asDiagonal())};
    return o;
}

} // namespace

TEST(DrgSs, BothPairsKeepConstraints) {
    for (const DrgSsOptions& opt : {DrgSsOptions{}, pole_options(0.9)}) {
        DrgSsPipeline p = DrgSsPipeline::build(plants::three_state(), kYss, opt);
        for (const Mas& m : p.mas()) {
            EXPECT_EQ(m.n_x + m.n_u, 4);
        }
        const auto trace = run(p, Eigen::Vector2d(1, 1), 500);
        EXPECT_LE(max_violation(kYss, trace), 1e-9);
        for (const auto& s : trace) {
            EXPECT_LT((s.u - s.r - p.decoupling().Gamma * (s.v - s.r_prime)).norm(), 1e-12);
        }
    }
}

TEST(DrgSs, IdentityPairUsesDelaySets) {
    DrgSsPipeline p = DrgSsPipeline::build(plants::three_state(), kYss);
    for (const Mas& m : p.mas()) {
        EXPECT_EQ(m.t_star, 0);
        EXPECT_TRUE(m.poly.H().leftCols(m.n_x).isZero(0.0));
    }
}

TEST(DrgSs, CertificateReported) {
    DrgSsPipeline a = DrgSsPipeline::build(plants::three_state(), kYss);
    ASSERT_TRUE(a.certificate().has_value());
    EXPECT_NEAR(*a.certificate(), 1.1, 1e-9);
    EXPECT_TRUE(a.stability_warning());
}

TEST(DrgSs, TrivialDecouplingIsIndependentGovernors) {
    Matrix A(2, 2);
    A << 0.5, 0, 0, 0.7;
    const LinearSystem S(A, Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Zero(2, 2));
    DrgSsOptions opt;
    opt.method = SsMethod::PoleAssignment;
    opt.M = {Matrix(Eigen::Vector2d(0.5, 0.7).asDiagonal())};
    DrgSsPipeline p = DrgSsPipeline::build(S, Box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)), opt);
    EXPECT_TRUE(p.decoupling().Phi.isZero(1e-15));
    EXPECT_TRUE(p.decoupling().Gamma.isIdentity(1e-15));
    const Mas m0 = build_mas(LinearSystem(A.block(0, 0, 1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)),
                             Box::interval(-1, 1));
    Vector x = Vector::Zero(2);
    double v0 = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto s = p.step(Eigen::Vector2d(3, -3));
        const double expect = srg_step_explicit(m0, x.head(1), v0, 3.0).v_new(0);
        EXPECT_NEAR(s.v(0), expect, 1e-12);
        x = A * x + s.u;
        v0 = s.v(0);
    }
}

TEST(DrgSs, AdmissibleReferencePassesThrough) {
    DrgSsPipeline p = DrgSsPipeline::build(plants::three_state(), kYss, pole_options(0.9));
    const Vector r = Eigen::Vector2d(0.1, 0.1);
    const auto trace = run(p, r, 400);
    EXPECT_LT((trace.back().u - r).norm(), 1e-8);
}

TEST(DrgSs, RobustKeepsConstraints) {
    Matrix Bw(3, 1);
    Bw << 1.3, 0.3, 2.51;
    const LinearSystem S = plants::three_state().with_disturbance(Bw, Matrix::Zero(2, 1));
    const DrgSsPipeline proto = DrgSsPipeline::build_robust(S, kYss, Box::interval(-0.1, 0.1), pole_options(0.1));
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        DrgSsPipeline p = proto;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> d(-0.1, 0.1);
        double worst = -kInf;
        for (int t = 0; t < 300; ++t) {
            worst = std::max(worst, violation(kYss, p.step(Eigen::Vector2d(1, 1), Vector::Constant(1, d(rng))).y));
        }
        EXPECT_LE(worst, 1e-9) << "seed " << seed;
    }
}

TEST(DrgSs, CentralizedObserverConverges) {
    DrgSsOptions opt = pole_options(0.9);
    opt.observer.kind = ObserverKind::Centralized;
    opt.observer.warmup = 40;
    DrgSsPipeline p = DrgSsPipeline::build(plants::three_state(), kYss, opt);
    p.reset(Eigen::Vector3d(0.05, -0.05, 0.02), false);
    const auto trace = run(p, Eigen::Vector2d(1, 1), 300);
    EXPECT_LT(trace.back().obs_err, 1e-6);
}

namespace {

std::vector<Vertex> scaled_vertices(const LinearSystem& s, std::initializer_list<double> scales) {
    std::vector<Vertex> out;
    for (double k : scales) {
        out.push_back({k * s.A(), s.B()});
    }
    return out;
}

} // namespace

TEST(Parametric, SteadyBoundsOnHalfLine) {
    const LinearSystem s = plants::three_state();
    const auto vx = scaled_vertices(s, {1.02, 0.98});
    DrgSsOptions opt = pole_options(0.9);
    const SsDecoupling dec = DrgSsPipeline::design(s, opt);
    const Box vb = steady_v_bounds(vx, s.C(), dec, kYss, 0.01);
    double expect = kInf;
    for (const Vertex& v : vx) {
        const Matrix Abar = v.A + v.B * dec.Phi;
        const Matrix g = s.C() * (Matrix::Identity(3, 3) - Abar).inverse() * v.B * dec.Gamma;
        ASSERT_GT(g(1, 1), 0.0);
        expect = std::min(expect, 0.99 * 1.1 / g(1, 1));
    }
    EXPECT_NEAR(vb.upper(1), expect, 1e-12);
    EXPECT_EQ(vb.lower(1), -kInf);
}

TEST(Parametric, SingleVertexMatchesNominalInsideBounds) {
    const LinearSystem s = plants::three_state();
    const Box Y(Eigen::Vector2d(-2.1, -1.1), Eigen::Vector2d(2.1, 1.1));
    ParamOptions po;
    po.method = SsMethod::PoleAssignment;
    po.M = {Matrix(Eigen::Vector2d(0.9, 0.9).asDiagonal())};
    DrgSsPipeline a = param_uncertain_build(scaled_vertices(s, {1.0}), s.C(), 0, Y, po);
    DrgSsPipeline b = DrgSsPipeline::build(s, Y, pole_options(0.9));
    const Box vb = steady_v_bounds(scaled_vertices(s, {1.0}), s.C(), a.decoupling(), Y, 0.01);
    std::mt19937_64 rng(23);
    for (int i = 0; i < 2; ++i) {
        const Mas& ma = a.mas()[static_cast<std::size_t>(i)];
        const Mas& mb = b.mas()[static_cast<std::size_t>(i)];
        // The sets are unbounded along the unobservable state direction, so
        // sample a fixed box with v inside the steady bounds.
        std::uniform_real_distribution<double> ux(-3.0, 3.0);
        std::uniform_real_distribution<double> uv(vb.lower(i), vb.upper(i));
        int inside = 0;
        for (int k = 0; k < 4000; ++k) {
            const Vector z = Eigen::Vector4d(ux(rng), ux(rng), ux(rng), uv(rng));
            const bool in = mb.poly.contains(z, 1e-9);
            inside += in ? 1 : 0;
            EXPECT_EQ(ma.poly.contains(z, 1e-9), in);
        }
        EXPECT_GT(inside, 100);
    }
}

TEST(Parametric, VertexPlantsStaySafe) {
    const LinearSystem s = plants::three_state();
    const Box Y(Eigen::Vector2d(-2.1, -1.1), Eigen::Vector2d(2.1, 1.1));
    const auto vx = scaled_vertices(s, {1.02, 0.98});
    ParamOptions po;
    po.method = SsMethod::PoleAssignment;
    po.M = {Matrix(Eigen::Vector2d(0.9, 0.9).asDiagonal())};
    const DrgSsPipeline proto = param_uncertain_build(vx, s.C(), 0, Y, po);
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_real_distribution<double> mix(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double lam = trial < 2 ? static_cast<double>(trial) : mix(rng);
        DrgSsPipeline p = proto;
        p.set_plant(LinearSystem(lam * vx[0].A + (1.0 - lam) * vx[1].A, s.B(), s.C(), Matrix::Zero(2, 2)));
        Vector r = Eigen::Vector2d(u(rng), u(rng));
        double worst = -kInf;
        for (int t = 0; t < 300; ++t) {
            if (t % 60 == 0) {
                r = Eigen::Vector2d(u(rng), u(rng));
            }
            worst = std::max(worst, violation(Y, p.step(r).y));
        }
        EXPECT_LE(worst, 1e-9) << "trial " << trial;
    }
}

TEST(Parametric, UnstableVertexRejected) {
    const LinearSystem s = plants::three_state();
    ParamOptions po;
    po.method = SsMethod::PoleAssignment;
    po.M = {Matrix(Eigen::Vector2d(0.9, 0.9).asDiagonal())};
    try {
        (void)param_uncertain_build(scaled_vertices(s, {1.0, 12.0}), s.C(), 0,
                                    Box(Eigen::Vector2d(-2.1, -1.1), Eigen::Vector2d(2.1, 1.1)), po);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnstableVertexLoop);
    }
}

namespace {

void expect_check(const theorems::Check& c, double floor, const std::string& label) {
    EXPECT_GT(c.samples, 0) << label;
    EXPECT_GE(c.worst, floor) << label << ": " << c.note;
}

void expect_tf(const theorems::TfResults& r, const std::string& label) {
    expect_check(r.t1, 0.0, label + " steady set mapping");
    expect_check(r.t2, 0.0, label + " saturation limit");
    expect_check(r.t3, theorems::kNormSlack, label + " steady gap bounds");
    expect_check(r.t4, theorems::kNormSlack, label + " L2 transient bound");
    expect_check(r.t5, theorems::kNormSlack, label + " Linf transient bound");
}

void expect_ss(const theorems::SsResults& r, const std::string& label) {
    expect_check(r.t6, 0.0, label + " closed-loop set mapping");
    expect_check(r.t7, theorems::kNormSlack, label + " per-step gap bounds");
    expect_check(r.t8, theorems::kNormSlack, label + " norm gap bounds");
}

} // namespace

TEST(Theorems, TransferFunctionExamples) {
    expect_tf(theorems::check_tf(plants::coupled_tf(0.05), kYtf, 1), "q=0.05");
    expect_tf(theorems::check_tf(plants::coupled_tf(0.5), kYtf, 2), "q=0.5");
}

TEST(Theorems, StateSpaceExample) {
    expect_ss(theorems::check_ss(plants::three_state(), kYss, DrgSsOptions{}, 3), "identity pair");
    expect_ss(theorems::check_ss(plants::three_state(), kYss, pole_options(0.9), 4), "pole pair");
}

TEST(Theorems, RandomPlants) {
    std::mt19937_64 rng(101);
    for (int k = 0; k < 6; ++k) {
        const int m = 2 + k % 2;
        const RationalMatrix G = theorems::random_tf_plant(m, rng);
        expect_tf(theorems::check_tf(G, theorems::unit_box(m), 200 + static_cast<std::uint64_t>(k)),
                  "tf plant " + std::to_string(k));
        const DrgSsOptions opt = theorems::pole_pair(m, 0.5);
        const LinearSystem S = theorems::random_ss_plant(m, rng, opt);
        expect_ss(theorems::check_ss(S, theorems::unit_box(m), opt, 300 + static_cast<std::uint64_t>(k)),
                  "ss plant " + std::to_string(k));
    }
}

TEST(Theorems, MappingOracleRejectsWrongMaps) {
    const LinearSystem S = plants::three_state();
    const DrgSsPipeline p = DrgSsPipeline::build(S, kYss, pole_options(0.9));
    const Matrix G0 = dc_gain(S);
    const Matrix W0 = dc_gain(p.closed_loop_system());
    const Box Yt = kYss.scaled(0.99);
    EXPECT_GE(theorems::boundary_mapping(G0, W0, Yt, W0.inverse() * G0, 200, 5).worst, 0.0);
    EXPECT_LT(theorems::boundary_mapping(G0, W0, Yt, W0 * G0.inverse(), 200, 5).worst, 0.0);
    const DrgTfPipeline tf = DrgTfPipeline::build(plants::coupled_tf(0.05), kYtf);
    const Matrix F0 = dc_gain(tf.f_system());
    EXPECT_LT(theorems::boundary_mapping(dc_gain(tf.plant()), theorems::diag_dc(tf.channels()), kYtf.scaled(0.99), F0,
                                         200, 6)
                  .worst,
              0.0);
}

// drg command line: simulate scenarios, build MAS files, benchmark governors
// and print decoupling diagnostics.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <drg/harness.hpp>

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string fmt(const drg::Vector& v) {
    std::ostringstream os;
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        os << (i ? ", " : "") << v(i);
    }
    os << ']';
    return os.str();
}

std::string fmt(const drg::Matrix& m) {
    std::ostringstream os;
    os << '[';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        os << (r ? "; " : "");
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            os << (c ? " " : "") << m(r, c);
        }
    }
    os << ']';
    return os.str();
}

/// A system file holds either a bare system object or a whole scenario.
drg::SystemSpec load_system(const std::string& path, std::vector<drg::Matrix>* M = nullptr) {
    const auto j = drg::read_json(path);
    if (j.contains("schema")) {
        drg::Scenario s = drg::parse_scenario(j);
        if (M) {
            *M = s.M;
        }
        return s.system;
    }
    if (j.contains("system")) {
        return drg::parse_system(j.at("system"));
    }
    return drg::parse_system(j);
}

/// "lo:hi,lo:hi" with inf, -inf or an empty side for no bound.
drg::Box parse_constraints(const std::string& text) {
    std::vector<double> lo;
    std::vector<double> hi;
    std::stringstream ss(text);
    std::string item;
    const auto side = [&](const std::string& s, double missing) {
        if (s.empty()) {
            return missing;
        }
        if (s == "inf" || s == "+inf") {
            return drg::kInf;
        }
        if (s == "-inf") {
            return -drg::kInf;
        }
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        drg::require(used == s.size(), drg::ErrorKind::Validation, "--constraints: bad number '" + s + "'");
        return x;
    };
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        drg::require(colon != std::string::npos, drg::ErrorKind::Validation,
                     "--constraints: expected lo:hi, got '" + item + "'");
        lo.push_back(side(item.substr(0, colon), -drg::kInf));
        hi.push_back(side(item.substr(colon + 1), drg::kInf));
        drg::require(lo.back() <= hi.back(), drg::ErrorKind::Validation, "--constraints: lower exceeds upper");
    }
    return {Eigen::Map<drg::Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
            Eigen::Map<drg::Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
}

int simulate(const std::string& file, std::string out) {
    const drg::Scenario s = drg::load_scenario(file);
    const drg::Trace tr = drg::run_scenario(s);
    if (out.empty()) {
        out = s.id + ".csv";
    }
    out = drg::output_path(out);
    drg::export_trace(tr, out, s.system.inputs(), s.system.outputs());
    const auto& sum = tr.summary;
    std::printf("scenario %s: %zu steps -> %s\n", s.id.c_str(), tr.steps.size(), out.c_str());
    std::printf("max violation   %.3e\n", sum.max_violation);
    std::printf("steady |u - r|  %.6g\n", sum.steady_gap);
    std::printf("rise times     ");
    for (int t : sum.rise_time) {
        std::printf(" %d", t);
    }
    std::printf("\ngovernor        mean %.3g us, max %.3g us\n", sum.governor_mean * 1e6, sum.governor_max * 1e6);
    return 0;
}

int mas_build(const std::string& file, const std::string& constraints, const std::string& out, double epsilon,
              int t_max, int channel) {
    const drg::SystemSpec sys = load_system(file);
    const drg::Box Y = parse_constraints(constraints);
    drg::Mas mas;
    if (channel < 0) {
        drg::require(Y.dim() == sys.outputs(), drg::ErrorKind::Validation, "--constraints: needs one range per output");
        const drg::LinearSystem s = sys.realization();
        mas = drg::build_mas(drg::LinearSystem(s.A(), s.B(), s.C(), s.D()), Y, epsilon, t_max);
    } else {
        drg::require(sys.is_tf, drg::ErrorKind::Validation, "--channel: needs a transfer-function system");
        drg::require(channel < sys.outputs(), drg::ErrorKind::Validation, "--channel: index out of range");
        drg::require(Y.dim() == 1, drg::ErrorKind::Validation, "--constraints: a channel takes one range");
        const drg::TfDecoupling dec = drg::design_tf_diagonal(sys.G);
        mas = drg::build_mas(drg::realize(dec.W(channel, channel)), Y, epsilon, t_max);
        mas.channel = channel;
    }
    const std::string path = drg::output_path(out);
    drg::save_mas(mas, path);
    std::printf("MAS: %d rows, t* = %d, state dim %d -> %s\n", mas.poly.rows(), mas.t_star, mas.n_x, path.c_str());
    return 0;
}

int bench(const std::string& file, const std::string& solver, int steps, int reps) {
    const drg::Scenario s = drg::load_scenario(file);
    const drg::BenchStats b = drg::benchmark(s, drg::bench_solver_from_string(solver), steps, reps);
    std::printf("scenario %s, solver %s, %d steps x %d repetitions\n", s.id.c_str(), solver.c_str(), b.steps, reps);
    for (std::size_t k = 0; k < b.rep_means.size(); ++k) {
        std::printf("  rep %zu: mean %.3f us\n", k + 1, b.rep_means[k] * 1e6);
    }
    std::printf("mean %.3f us per governor step, max %.3f us\n", b.mean * 1e6, b.max * 1e6);
    return 0;
}

int analyze(const std::string& file) {
    std::vector<drg::Matrix> M;
    const drg::SystemSpec sys = load_system(file, &M);
    const drg::Analysis a = drg::analyze(sys, M);
    std::cout << "DC gain            " << fmt(a.dc_gain) << '\n';
    std::cout << "DC singular values " << fmt(a.dc_singular_values) << '\n';
    std::cout << "DC condition       " << a.dc_condition << '\n';
    std::cout << "H-inf norm         " << a.hinf << '\n';
    std::cout << "L1 norm            " << a.l1 << '\n';
    if (a.F0) {
        std::cout << "F0                 " << fmt(*a.F0) << '\n';
        std::cout << "F0 singular values " << fmt(*a.F0_singular_values) << '\n';
        std::cout << "gamma              " << *a.gamma << '\n';
    }
    if (a.d) {
        std::cout << "decoupling indices";
        for (int d : *a.d) {
            std::cout << ' ' << d;
        }
        std::cout << '\n';
    }
    if (a.certificate_identity) {
        std::cout << "certificate (identity pair) " << *a.certificate_identity
                  << (*a.certificate_identity < 1.0 ? "" : "  (not certified)") << '\n';
    }
    if (a.certificate_pole) {
        std::cout << "certificate (pole pair)     " << *a.certificate_pole
                  << (*a.certificate_pole < 1.0 ? "" : "  (not certified)") << '\n';
    }
    for (const auto& n : a.notes) {
        std::cout << "note: " << n << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoupled reference governors"};
    app.require_subcommand(1);

    std::string file;
    std::string out;
    auto* sim = app.add_subcommand("simulate", "run a scenario and write its trace as CSV");
    sim->add_option("scenario", file, "scenario JSON file")->required();
    sim->add_option("--out", out, "trace CSV (default <id>.csv, relative to DRG_OUTPUT_DIR when set)");

    auto* mas = app.add_subcommand("mas", "maximal admissible sets");
    mas->require_subcommand(1);
    auto* mas_b = mas->add_subcommand("build", "build a MAS and save it as JSON");
    std::string constraints;
    double epsilon = drg::kDefaultEpsilon;
    int t_max = drg::kDefaultTmax;
    int channel = -1;
    mas_b->add_option("system", file, "system or scenario JSON file")->required();
    mas_b->add_option("--constraints", constraints, "output ranges lo:hi,lo:hi")->required();
    mas_b->add_option("--out", out, "MAS JSON file")->required();
    mas_b->add_option("--epsilon", epsilon, "steady-state tightening");
    mas_b->add_option("--t-max", t_max, "largest horizon tried");
    mas_b->add_option("--channel", channel, "build the decoupled channel set for this output instead");

    std::string solver = "explicit";
    int steps = 1000;
    int reps = 5;
    auto* bench_cmd = app.add_subcommand("bench", "time the governor step");
    bench_cmd->add_option("scenario", file, "scenario JSON file")->required();
    bench_cmd->add_option("--solver", solver, "explicit, implicit_lp or implicit_qp");
    bench_cmd->add_option("--steps", steps, "steps per repetition, at least 1000");
    bench_cmd->add_option("--reps", reps, "timed repetitions");

    auto* an = app.add_subcommand("analyze", "print gains, norms and decoupling diagnostics");
    an->add_option("system", file, "system or scenario JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (sim->parsed()) {
            return simulate(file, out);
        }
        if (mas_b->parsed()) {
            return mas_build(file, constraints, out, epsilon, t_max, channel);
        }
        if (bench_cmd->parsed()) {
            return bench(file, solver, steps, reps);
        }
        if (an->parsed()) {
            return analyze(file);
        }
    } catch (const drg::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == drg::ErrorKind::Validation ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitValidation;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drg/decoupling.hpp"
#include "drg/drg.hpp"
#include "drg/error.hpp"
#include "drg/governors.hpp"
#include "drg/linear_system.hpp"
#include "drg/mas.hpp"
#include "drg/norms.hpp"
#include "drg/rational.hpp"
#include "drg/realization.hpp"

namespace drg {

inline constexpr const char* kScenarioSchema = "drg-scenario/1";

enum class GovernorKind { Srg, Vrg, DrgTfDiag, DrgTfIdentity, DrgSsIdentity, DrgSsPole };

[[nodiscard]] inline std::string to_string(GovernorKind k) {
    switch (k) {
    case GovernorKind::Srg:
        return "srg";
    case GovernorKind::Vrg:
        return "vrg";
    case GovernorKind::DrgTfDiag:
        return "drg_tf_diag";
    case GovernorKind::DrgTfIdentity:
        return "drg_tf_identity";
    case GovernorKind::DrgSsIdentity:
        return "drg_ss_identity";
    case GovernorKind::DrgSsPole:
        return "drg_ss_pole";
    }
    return "unknown";
}

[[nodiscard]] inline GovernorKind governor_kind_from_string(const std::string& s) {
    for (auto k : {GovernorKind::Srg, GovernorKind::Vrg, GovernorKind::DrgTfDiag, GovernorKind::DrgTfIdentity,
                   GovernorKind::DrgSsIdentity, GovernorKind::DrgSsPole}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorKind::Validation, "governor: unknown kind '" + s + "'");
}

/// Plant description. Transfer-function plants keep G (and an optional
/// disturbance model Gw); state-space plants keep S.
struct SystemSpec {
    bool is_tf = true;
    RationalMatrix G;
    std::optional<RationalMatrix> Gw;
    LinearSystem S;

    [[nodiscard]] int outputs() const { return is_tf ? G.rows() : S.p(); }
    [[nodiscard]] int inputs() const { return is_tf ? G.cols() : S.m(); }
    [[nodiscard]] int disturbances() const { return is_tf ? (Gw ? Gw->cols() : 0) : S.nw(); }

    /// Realization with disturbance channels split off.
    [[nodiscard]] LinearSystem realization() const {
        if (!is_tf) {
            return S;
        }
        if (Gw) {
            return detail::split_disturbance(realize(hconcat(G, *Gw)), Gw->cols());
        }
        return realize(G);
    }
};

struct ReferenceStep {
    int t = 0;
    Vector value;
};

struct DisturbanceSpec {
    Box W;
    std::uint64_t seed = 0;
};

struct UncertaintySpec {
    std::vector<Vertex> vertices;
    int nominal = 0;
    std::vector<double> weights; ///< convex weights of the true plant, empty means the nominal vertex
    Box v_limit;
};

struct Scenario {
    std::string id;
    SystemSpec system;
    Box Y;
    GovernorKind governor = GovernorKind::DrgTfDiag;
    GovernorSolver solver = GovernorSolver::Explicit;
    std::optional<ObserverConfig> observer;
    std::optional<DisturbanceSpec> disturbance;
    std::optional<UncertaintySpec> uncertainty;
    std::vector<ReferenceStep> reference;
    int horizon = 500;
    double epsilon = kDefaultEpsilon;
    int t_max = kDefaultTmax;
    std::vector<Matrix> M;
    Vector x0;
    bool x0_known = true;

    [[nodiscard]] Vector reference_at(int t) const {
        Vector r = reference.front().value;
        for (const auto& s : reference) {
            if (s.t <= t) {
                r = s.value;
            }
        }
        return r;
    }
};

namespace detail {

/// Error text without the leading kind name.
inline std::string message(const Error& e) {
    const std::string w = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

inline Error field_error(const std::string& path, const std::string& what) {
    return {ErrorKind::Validation, path + ": " + what};
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        throw field_error(path + "." + key, "missing");
    }
    return j.at(key);
}

inline double number(const nlohmann::json& j, const std::string& path) {
    if (j.is_null()) {
        throw field_error(path, "expected a number");
    }
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf") {
            return kInf;
        }
        if (s == "-inf") {
            return -kInf;
        }
        throw field_error(path, "expected a number, got '" + s + "'");
    }
    if (!j.is_number()) {
        throw field_error(path, "expected a number");
    }
    return j.get<double>();
}

inline Vector vector_of(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) {
        throw field_error(path, "expected an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
    }
    return v;
}

/// Bounds may be null for an unbounded side.
inline Vector bounds_of(const nlohmann::json& j, const std::string& path, double missing) {
    if (!j.is_array()) {
        throw field_error(path, "expected an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? missing : number(j[i], path + "[" + std::to_string(i) + "]");
    }
    return v;
}

inline Matrix matrix_of(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) {
        throw field_error(path, "expected an array of rows");
    }
    if (j.empty()) {
        return {};
    }
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Matrix M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const std::string rp = path + "[" + std::to_string(r) + "]";
        if (!j[r].is_array() || j[r].size() != cols) {
            throw field_error(rp, "rows must all have " + std::to_string(cols) + " entries");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                number(j[r][c], rp + "[" + std::to_string(c) + "]");
        }
    }
    return M;
}

/// Coefficients are listed from the highest power of z down.
inline Polynomial polynomial_of(const nlohmann::json& j, const std::string& path) {
    const Vector v = vector_of(j, path);
    if (v.size() == 0) {
        throw field_error(path, "empty coefficient list");
    }
    std::vector<double> asc(v.data(), v.data() + v.size());
    std::reverse(asc.begin(), asc.end());
    return Polynomial(std::move(asc));
}

/// {rows, cols, entries} with entries listed row-major as {num, den}.
inline RationalMatrix tf_matrix_of(const nlohmann::json& j, const std::string& path) {
    const auto dim = [&](const char* key) {
        const auto& v = field(j, key, path);
        if (!v.is_number_integer() || v.get<int>() < 1) {
            throw field_error(path + "." + key, "expected a positive integer");
        }
        return v.get<int>();
    };
    const int rows = dim("rows");
    const int cols = dim("cols");
    const auto& entries = field(j, "entries", path);
    if (!entries.is_array() || entries.size() != static_cast<std::size_t>(rows * cols)) {
        throw field_error(path + ".entries", "expected " + std::to_string(rows * cols) + " entries (rows x cols)");
    }
    RationalMatrix G(rows, cols);
    for (int k = 0; k < rows * cols; ++k) {
        const std::string ep = path + ".entries[" + std::to_string(k) + "]";
        const auto& e = entries[static_cast<std::size_t>(k)];
        const Polynomial num = polynomial_of(field(e, "num", ep), ep + ".num");
        const Polynomial den = polynomial_of(field(e, "den", ep), ep + ".den");
        if (den.is_zero()) {
            throw field_error(ep + ".den", "zero denominator");
        }
        G(k / cols, k % cols) = RationalTf(num, den);
    }
    return G;
}

inline Box box_of(const nlohmann::json& j, const std::string& path) {
    const Vector lo = bounds_of(field(j, "lower", path), path + ".lower", -kInf);
    const Vector hi = bounds_of(field(j, "upper", path), path + ".upper", kInf);
    if (lo.size() != hi.size()) {
        throw field_error(path, "lower and upper have different lengths");
    }
    for (int i = 0; i < lo.size(); ++i) {
        if (lo(i) > hi(i)) {
            throw field_error(path, "lower exceeds upper at index " + std::to_string(i));
        }
    }
    return {lo, hi};
}

inline std::string string_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_string()) {
        throw field_error(path + "." + key, "expected a string");
    }
    return v.get<std::string>();
}

inline int int_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_number_integer()) {
        throw field_error(path + "." + key, "expected an integer");
    }
    return v.get<int>();
}

inline void require_shape(const Matrix& M, Eigen::Index r, Eigen::Index c, const std::string& path) {
    if (M.rows() != r || M.cols() != c) {
        std::ostringstream os;
        os << "expected " << r << "x" << c << ", got " << M.rows() << "x" << M.cols();
        throw field_error(path, os.str());
    }
}

} // namespace detail

/// Either {"tf": {rows, cols, entries, disturbance?}} or {"ss": {A, B, C, D?, Bw?, Dw?}}.
[[nodiscard]] inline SystemSpec parse_system(const nlohmann::json& root, const std::string& system_path = "system") {
    SystemSpec s;
    if (!root.is_object() || root.contains("tf") == root.contains("ss")) {
        throw detail::field_error(system_path, "expected exactly one of 'tf' or 'ss'");
    }
    if (root.contains("tf")) {
        const std::string path = system_path + ".tf";
        const auto& j = root.at("tf");
        s.is_tf = true;
        s.G = detail::tf_matrix_of(j, path);
        if (j.contains("disturbance")) {
            s.Gw = detail::tf_matrix_of(j.at("disturbance"), path + ".disturbance");
            if (s.Gw->rows() != s.G.rows()) {
                throw detail::field_error(path + ".disturbance.rows", "must equal rows of the plant");
            }
        }
        return s;
    }
    const std::string path = system_path + ".ss";
    const auto& j = root.at("ss");
    s.is_tf = false;
    const Matrix A = detail::matrix_of(detail::field(j, "A", path), path + ".A");
    const auto n = A.rows();
    detail::require_shape(A, n, n, path + ".A");
    const Matrix B = detail::matrix_of(detail::field(j, "B", path), path + ".B");
    if (B.rows() != n) {
        throw detail::field_error(path + ".B", "must have " + std::to_string(n) + " rows");
    }
    const Matrix C = detail::matrix_of(detail::field(j, "C", path), path + ".C");
    if (C.cols() != n) {
        throw detail::field_error(path + ".C", "must have " + std::to_string(n) + " columns");
    }
    Matrix D = Matrix::Zero(C.rows(), B.cols());
    if (j.contains("D")) {
        D = detail::matrix_of(j.at("D"), path + ".D");
        detail::require_shape(D, C.rows(), B.cols(), path + ".D");
    }
    Matrix Bw;
    Matrix Dw;
    if (j.contains("Bw")) {
        Bw = detail::matrix_of(j.at("Bw"), path + ".Bw");
        if (Bw.rows() != n) {
            throw detail::field_error(path + ".Bw", "must have " + std::to_string(n) + " rows");
        }
    }
    if (j.contains("Dw")) {
        Dw = detail::matrix_of(j.at("Dw"), path + ".Dw");
        if (Dw.rows() != C.rows() || (Bw.size() && Dw.cols() != Bw.cols())) {
            throw detail::field_error(path + ".Dw", "shape disagrees with C and Bw");
        }
    }
    s.S = LinearSystem(A, B, C, D, Bw, Dw);
    return s;
}


/// Checks every cross-field size. Throws Validation naming the field.
inline void validate(const Scenario& s) {
    const int p = s.system.outputs();
    const int m = s.system.inputs();
    if (s.Y.dim() != p) {
        throw detail::field_error("constraints", "has " + std::to_string(s.Y.dim()) + " entries for " +
                                                      std::to_string(p) + " outputs");
    }
    if (s.reference.empty()) {
        throw detail::field_error("reference", "needs at least one step");
    }
    for (std::size_t k = 0; k < s.reference.size(); ++k) {
        const std::string path = "reference[" + std::to_string(k) + "]";
        if (s.reference[k].value.size() != m) {
            throw detail::field_error(path + ".value", "needs " + std::to_string(m) + " entries");
        }
        if (k == 0 && s.reference[k].t != 0) {
            throw detail::field_error(path + ".t", "first step must start at t = 0");
        }
        if (k > 0 && s.reference[k].t <= s.reference[k - 1].t) {
            throw detail::field_error(path + ".t", "times must increase");
        }
    }
    if (s.horizon < 1) {
        throw detail::field_error("horizon", "must be positive");
    }
    if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) {
        throw detail::field_error("epsilon", "must lie in (0, 1)");
    }
    if (s.t_max < 1) {
        throw detail::field_error("t_max", "must be positive");
    }
    const bool decoupled = s.governor != GovernorKind::Srg && s.governor != GovernorKind::Vrg;
    if (decoupled && p != m) {
        throw detail::field_error("governor", "decoupled governors need a square plant");
    }
    const bool tf_kind = s.governor == GovernorKind::DrgTfDiag || s.governor == GovernorKind::DrgTfIdentity;
    const bool ss_kind = s.governor == GovernorKind::DrgSsIdentity || s.governor == GovernorKind::DrgSsPole;
    if (tf_kind && !s.system.is_tf) {
        throw detail::field_error("governor", to_string(s.governor) + " needs a transfer-function system");
    }
    if (ss_kind && s.system.is_tf) {
        throw detail::field_error("governor", to_string(s.governor) + " needs a state-space system");
    }
    if (s.governor == GovernorKind::DrgSsPole) {
        if (s.M.empty()) {
            throw detail::field_error("M", "pole assignment needs at least M_0");
        }
        for (std::size_t k = 0; k < s.M.size(); ++k) {
            detail::require_shape(s.M[k], m, m, "M[" + std::to_string(k) + "]");
        }
    }
    if (s.disturbance) {
        if (s.disturbance->W.dim() != s.system.disturbances()) {
            throw detail::field_error("disturbance", "has " + std::to_string(s.disturbance->W.dim()) +
                                                         " entries for " + std::to_string(s.system.disturbances()) +
                                                         " disturbance inputs");
        }
        if (!s.disturbance->W.bounded()) {
            throw detail::field_error("disturbance", "must be bounded");
        }
    }
    if (s.uncertainty) {
        if (!ss_kind) {
            throw detail::field_error("uncertainty", "only supported with drg_ss governors");
        }
        if (s.disturbance) {
            throw detail::field_error("uncertainty", "cannot be combined with a disturbance");
        }
        const auto& u = *s.uncertainty;
        const int n = s.system.S.n();
        if (u.vertices.empty()) {
            throw detail::field_error("uncertainty.vertices", "needs at least one vertex");
        }
        for (std::size_t k = 0; k < u.vertices.size(); ++k) {
            const std::string path = "uncertainty.vertices[" + std::to_string(k) + "]";
            detail::require_shape(u.vertices[k].A, n, n, path + ".A");
            detail::require_shape(u.vertices[k].B, n, m, path + ".B");
        }
        if (u.nominal < 0 || u.nominal >= static_cast<int>(u.vertices.size())) {
            throw detail::field_error("uncertainty.nominal", "index out of range");
        }
        if (!u.weights.empty()) {
            if (u.weights.size() != u.vertices.size()) {
                throw detail::field_error("uncertainty.weights", "needs one weight per vertex");
            }
            double sum = 0.0;
            for (double w : u.weights) {
                if (w < 0.0) {
                    throw detail::field_error("uncertainty.weights", "weights must be non-negative");
                }
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw detail::field_error("uncertainty.weights", "weights must sum to 1");
            }
        }
        if (u.v_limit.dim() != 0 && u.v_limit.dim() != m) {
            throw detail::field_error("uncertainty.v_limit", "needs " + std::to_string(m) + " entries");
        }
    }
    if (s.x0.size() != 0) {
        const int n = s.system.realization().n();
        if (s.x0.size() != n) {
            throw detail::field_error("x0", "needs " + std::to_string(n) + " entries");
        }
    }
    if (s.observer) {
        for (int row : s.observer->measured) {
            if (row < 0 || row >= p) {
                throw detail::field_error("observer.measured", "output index out of range");
            }
        }
        if (s.observer->warmup < 0) {
            throw detail::field_error("observer.warmup", "must be non-negative");
        }
    }
}

[[nodiscard]] inline Scenario parse_scenario(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw detail::field_error("scenario", "expected an object");
    }
    const std::string schema = detail::string_field(j, "schema", "scenario");
    if (schema != kScenarioSchema) {
        throw detail::field_error("schema", "unsupported '" + schema + "', expected '" + kScenarioSchema + "'");
    }
    Scenario s;
    s.id = j.value("id", std::string("scenario"));
    s.system = parse_system(detail::field(j, "system", "scenario"));
    s.Y = detail::box_of(detail::field(j, "constraints", "scenario"), "constraints");
    s.governor = governor_kind_from_string(detail::string_field(j, "governor", "scenario"));
    if (j.contains("solver")) {
        const auto name = detail::string_field(j, "solver", "scenario");
        if (name == "explicit") {
            s.solver = GovernorSolver::Explicit;
        } else if (name == "implicit_lp") {
            s.solver = GovernorSolver::ImplicitLp;
        } else {
            throw detail::field_error("solver", "expected 'explicit' or 'implicit_lp'");
        }
    }
    if (j.contains("observer")) {
        const auto& o = j.at("observer");
        ObserverConfig cfg;
        try {
            cfg.kind = observer_kind_from_string(detail::string_field(o, "kind", "observer"));
        } catch (const Error& e) {
            throw detail::field_error("observer.kind", detail::message(e));
        }
        if (o.contains("warmup")) {
            cfg.warmup = detail::int_field(o, "warmup", "observer");
        }
        if (o.contains("measured")) {
            for (const auto& v : o.at("measured")) {
                if (!v.is_number_integer()) {
                    throw detail::field_error("observer.measured", "expected integer indices");
                }
                cfg.measured.push_back(v.get<int>());
            }
        }
        s.observer = cfg;
    }
    if (j.contains("disturbance")) {
        const auto& d = j.at("disturbance");
        DisturbanceSpec ds;
        ds.W = detail::box_of(d, "disturbance");
        if (d.contains("seed")) {
            if (!d.at("seed").is_number_unsigned()) {
                throw detail::field_error("disturbance.seed", "expected a non-negative integer");
            }
            ds.seed = d.at("seed").get<std::uint64_t>();
        }
        s.disturbance = ds;
    }
    if (j.contains("uncertainty")) {
        const auto& u = j.at("uncertainty");
        UncertaintySpec us;
        const auto& vs = detail::field(u, "vertices", "uncertainty");
        if (!vs.is_array()) {
            throw detail::field_error("uncertainty.vertices", "expected an array");
        }
        for (std::size_t k = 0; k < vs.size(); ++k) {
            const std::string path = "uncertainty.vertices[" + std::to_string(k) + "]";
            us.vertices.push_back({detail::matrix_of(detail::field(vs[k], "A", path), path + ".A"),
                                   detail::matrix_of(detail::field(vs[k], "B", path), path + ".B")});
        }
        us.nominal = u.contains("nominal") ? detail::int_field(u, "nominal", "uncertainty") : 0;
        if (u.contains("weights")) {
            const Vector w = detail::vector_of(u.at("weights"), "uncertainty.weights");
            us.weights.assign(w.data(), w.data() + w.size());
        }
        if (u.contains("v_limit")) {
            us.v_limit = detail::box_of(u.at("v_limit"), "uncertainty.v_limit");
        }
        s.uncertainty = us;
    }
    const auto& ref = detail::field(j, "reference", "scenario");
    if (!ref.is_array()) {
        throw detail::field_error("reference", "expected an array of {t, value}");
    }
    for (std::size_t k = 0; k < ref.size(); ++k) {
        const std::string path = "reference[" + std::to_string(k) + "]";
        s.reference.push_back({detail::int_field(ref[k], "t", path),
                               detail::vector_of(detail::field(ref[k], "value", path), path + ".value")});
    }
    if (j.contains("horizon")) {
        s.horizon = detail::int_field(j, "horizon", "scenario");
    }
    if (j.contains("epsilon")) {
        s.epsilon = detail::number(j.at("epsilon"), "epsilon");
    }
    if (j.contains("t_max")) {
        s.t_max = detail::int_field(j, "t_max", "scenario");
    }
    if (j.contains("M")) {
        const auto& mj = j.at("M");
        if (!mj.is_array()) {
            throw detail::field_error("M", "expected a list of diagonals");
        }
        for (std::size_t k = 0; k < mj.size(); ++k) {
            s.M.push_back(Matrix(detail::vector_of(mj[k], "M[" + std::to_string(k) + "]").asDiagonal()));
        }
    }
    if (j.contains("x0")) {
        s.x0 = detail::vector_of(j.at("x0"), "x0");
    }
    if (j.contains("x0_known")) {
        if (!j.at("x0_known").is_boolean()) {
            throw detail::field_error("x0_known", "expected a boolean");
        }
        s.x0_known = j.at("x0_known").get<bool>();
    }
    validate(s);
    return s;
}

[[nodiscard]] inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Validation, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Validation, path + ": " + e.what());
    }
}

[[nodiscard]] inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_json(path)); }

struct TraceSummary {
    double max_violation = -kInf; ///< max over t and outputs of the signed constraint excess
    double steady_gap = 0.0;      ///< ||u - r|| at the last step
    std::vector<int> rise_time;   ///< first t with y_i within 10% of its final change, -1 if no change
    double governor_mean = 0.0;   ///< seconds per governor step
    double governor_max = 0.0;
};

struct Trace {
    std::string id;
    std::vector<StepRecord> steps;
    TraceSummary summary;
};

[[nodiscard]] inline TraceSummary summarize(const std::vector<StepRecord>& steps, const Box& Y) {
    TraceSummary s;
    if (steps.empty()) {
        return s;
    }
    double total = 0.0;
    for (const auto& r : steps) {
        for (int i = 0; i < Y.dim(); ++i) {
            s.max_violation = std::max({s.max_violation, r.y(i) - Y.upper(i), Y.lower(i) - r.y(i)});
        }
        total += r.governor_seconds;
        s.governor_max = std::max(s.governor_max, r.governor_seconds);
    }
    s.governor_mean = total / static_cast<double>(steps.size());
    s.steady_gap = (steps.back().u - steps.back().r).norm();
    const auto p = steps.front().y.size();
    for (Eigen::Index i = 0; i < p; ++i) {
        const double y0 = steps.front().y(i);
        const double yf = steps.back().y(i);
        int rise = -1;
        if (std::abs(yf - y0) > 1e-12) {
            for (std::size_t t = 0; t < steps.size(); ++t) {
                if (std::abs(steps[t].y(i) - yf) <= 0.1 * std::abs(yf - y0)) {
                    rise = static_cast<int>(t);
                    break;
                }
            }
        }
        s.rise_time.push_back(rise);
    }
    return s;
}

namespace detail {

using StepFn = std::function<StepRecord(const Vector& r, const Vector& d)>;

/// Single governor over the whole plant, state taken as measured.
inline StepFn plant_governor(const LinearSystem& plant, Mas mas, bool vector, GovernorSolver solver,
                             const Vector& x0) {
    struct State {
        LinearSystem plant;
        Mas mas;
        Vector x;
        Vector v;
    };
    auto st = std::make_shared<State>(State{plant, std::move(mas), x0, Vector::Zero(plant.m())});
    return [st, vector, solver](const Vector& r, const Vector& d) {
        StepRecord rec;
        rec.r = r;
        rec.r_prime = r;
        const auto start = std::chrono::steady_clock::now();
        if (vector) {
            const VrgResult k = vrg_step(st->mas, st->x, st->v, r);
            rec.v = k.u_new;
            rec.kappa = k.K;
        } else {
            const KappaResult k = solver == GovernorSolver::Explicit ? srg_step_explicit(st->mas, st->x, st->v, r)
                                                                     : srg_step_lp(st->mas, st->x, st->v, r);
            rec.v = k.v_new;
            rec.kappa = Vector::Constant(r.size(), k.kappa);
        }
        rec.governor_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rec.u = rec.v;
        const auto& P = st->plant;
        rec.y = P.C() * st->x + P.D() * rec.u + P.Dw() * d;
        st->x = P.A() * st->x + P.B() * rec.u + P.Bw() * d;
        st->v = rec.v;
        return rec;
    };
}

inline StepFn make_stepper(const Scenario& s) {
    const LinearSystem plant = s.system.realization();
    const Vector x0 = s.x0.size() ? s.x0 : Vector::Zero(plant.n());
    switch (s.governor) {
    case GovernorKind::Srg:
    case GovernorKind::Vrg: {
        const LinearSystem nominal(plant.A(), plant.B(), plant.C(), plant.D());
        Mas mas = s.disturbance ? build_robust_mas(plant, s.Y, s.disturbance->W, s.epsilon, s.t_max)
                                : build_mas(nominal, s.Y, s.epsilon, s.t_max);
        return plant_governor(plant, std::move(mas), s.governor == GovernorKind::Vrg, s.solver, x0);
    }
    case GovernorKind::DrgTfDiag:
    case GovernorKind::DrgTfIdentity: {
        DrgTfOptions opt;
        opt.method = s.governor == GovernorKind::DrgTfDiag ? TfMethod::Diagonal : TfMethod::Identity;
        opt.epsilon = s.epsilon;
        opt.t_max = s.t_max;
        opt.solver = s.solver;
        if (s.observer) {
            opt.observer = *s.observer;
        } else if (s.disturbance) {
            opt.observer.kind = ObserverKind::Measured;
        }
        auto p = std::make_shared<DrgTfPipeline>(
            s.disturbance ? DrgTfPipeline::build_robust(s.system.G, *s.system.Gw, s.Y, s.disturbance->W, opt)
                          : DrgTfPipeline::build(s.system.G, s.Y, opt));
        p->reset(x0, s.x0_known);
        return [p](const Vector& r, const Vector& d) { return p->step(r, d); };
    }
    case GovernorKind::DrgSsIdentity:
    case GovernorKind::DrgSsPole: {
        DrgSsOptions opt;
        opt.method = s.governor == GovernorKind::DrgSsIdentity ? SsMethod::Identity : SsMethod::PoleAssignment;
        opt.M = s.M;
        opt.epsilon = s.epsilon;
        opt.t_max = s.t_max;
        opt.solver = s.solver;
        if (s.observer) {
            opt.observer = *s.observer;
        }
        std::shared_ptr<DrgSsPipeline> p;
        if (s.uncertainty) {
            const auto& u = *s.uncertainty;
            ParamOptions po;
            po.method = opt.method;
            po.M = s.M;
            po.epsilon = s.epsilon;
            po.t_max = s.t_max;
            po.v_limit = u.v_limit;
            p = std::make_shared<DrgSsPipeline>(param_uncertain_build(u.vertices, plant.C(), u.nominal, s.Y, po));
            if (!u.weights.empty()) {
                Matrix A = Matrix::Zero(plant.n(), plant.n());
                Matrix B = Matrix::Zero(plant.n(), plant.m());
                for (std::size_t k = 0; k < u.vertices.size(); ++k) {
                    A += u.weights[k] * u.vertices[k].A;
                    B += u.weights[k] * u.vertices[k].B;
                }
                p->set_plant(LinearSystem(A, B, plant.C(), plant.D()));
            }
        } else if (s.disturbance) {
            p = std::make_shared<DrgSsPipeline>(DrgSsPipeline::build_robust(plant, s.Y, s.disturbance->W, opt));
        } else {
            p = std::make_shared<DrgSsPipeline>(DrgSsPipeline::build(plant, s.Y, opt));
        }
        p->reset(x0, s.x0_known);
        return [p](const Vector& r, const Vector& d) { return p->step(r, d); };
    }
    }
    throw Error(ErrorKind::Validation, "governor: unsupported kind");
}

} // namespace detail

/// Deterministic given the scenario (disturbances come from its seed).
[[nodiscard]] inline Trace run_scenario(const Scenario& s) {
    validate(s);
    detail::StepFn step = detail::make_stepper(s);
    const int nw = s.system.disturbances();
    std::mt19937_64 rng(s.disturbance ? s.disturbance->seed : 0);
    Trace tr;
    tr.id = s.id;
    tr.steps.reserve(static_cast<std::size_t>(s.horizon));
    for (int t = 0; t < s.horizon; ++t) {
        Vector d = Vector::Zero(nw);
        if (s.disturbance) {
            for (int k = 0; k < nw; ++k) {
                std::uniform_real_distribution<double> u(s.disturbance->W.lower(k), s.disturbance->W.upper(k));
                d(k) = u(rng);
            }
        }
        try {
            tr.steps.push_back(step(s.reference_at(t), d));
        } catch (const Error& e) {
            throw Error(e.kind(), "step " + std::to_string(t) + ": " + detail::message(e));
        }
    }
    tr.summary = summarize(tr.steps, s.Y);
    return tr;
}

/// Runs scenarios on `workers` threads; results come back sorted by id.
[[nodiscard]] inline std::vector<Trace> run_batch(const std::vector<Scenario>& scenarios, unsigned workers = 0) {
    if (workers == 0) {
        workers = std::max(1u, std::thread::hardware_concurrency());
    }
    std::vector<Trace> out(scenarios.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&] {
            for (std::size_t k = next++; k < scenarios.size(); k = next++) {
                out[k] = run_scenario(scenarios[k]);
            }
        }));
    }
    for (auto& j : jobs) {
        j.get();
    }
    std::stable_sort(out.begin(), out.end(), [](const Trace& a, const Trace& b) { return a.id < b.id; });
    return out;
}

[[nodiscard]] inline std::string trace_header(int m, int p) {
    std::string h = "t";
    const auto cols = [&](const char* name, int count) {
        for (int i = 1; i <= count; ++i) {
            h += ",";
            h += name;
            h += "_" + std::to_string(i);
        }
    };
    cols("r", m);
    cols("rp", m);
    cols("v", m);
    cols("u", m);
    cols("y", p);
    cols("kappa", m);
    h += ",obs_err";
    return h;
}

namespace detail {

inline std::string num17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

/// With no steps the file holds the header only, sized by `m` and `p`.
inline void export_trace(const Trace& tr, const std::string& path, int m = 0, int p = 0) {
    if (!tr.steps.empty()) {
        m = static_cast<int>(tr.steps.front().r.size());
        p = static_cast<int>(tr.steps.front().y.size());
    }
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
    out << trace_header(m, p) << '\n';
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const StepRecord& s = tr.steps[t];
        out << t;
        for (const Vector* v : {&s.r, &s.r_prime, &s.v, &s.u, &s.y, &s.kappa}) {
            for (Eigen::Index i = 0; i < v->size(); ++i) {
                out << ',' << detail::num17((*v)(i));
            }
        }
        out << ',' << detail::num17(s.obs_err) << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path);
}

[[nodiscard]] inline Trace import_trace(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io, path + " is empty");
    int m = 0;
    int p = 0;
    {
        std::stringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.rfind("r_", 0) == 0) {
                ++m;
            } else if (col.rfind("y_", 0) == 0) {
                ++p;
            }
        }
    }
    require(line == trace_header(m, p), ErrorKind::Io, path + " has an unexpected header");
    Trace tr;
    const std::size_t width = 1 + 5 * static_cast<std::size_t>(m) + static_cast<std::size_t>(p) + 1;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> vals;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            vals.push_back(std::strtod(cell.c_str(), &end));
            require(end != cell.c_str() && *end == '\0', ErrorKind::Io, "bad number '" + cell + "' in " + path);
        }
        require(vals.size() == width, ErrorKind::Io, "row has the wrong number of columns in " + path);
        std::size_t k = 1;
        const auto take = [&](int count) {
            Vector v(count);
            for (int i = 0; i < count; ++i) {
                v(i) = vals[k++];
            }
            return v;
        };
        StepRecord s;
        s.r = take(m);
        s.r_prime = take(m);
        s.v = take(m);
        s.u = take(m);
        s.y = take(p);
        s.kappa = take(m);
        s.obs_err = vals[k];
        tr.steps.push_back(std::move(s));
    }
    return tr;
}

/// Resolves a bare file name against DRG_OUTPUT_DIR when that is set.
[[nodiscard]] inline std::string output_path(const std::string& name) {
    const char* dir = std::getenv("DRG_OUTPUT_DIR");
    if (dir == nullptr || *dir == '\0' || std::filesystem::path(name).is_absolute()) {
        return name;
    }
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / name).string();
}

enum class BenchSolver { Explicit, ImplicitLp, ImplicitQp };

[[nodiscard]] inline BenchSolver bench_solver_from_string(const std::string& s) {
    if (s == "explicit") {
        return BenchSolver::Explicit;
    }
    if (s == "implicit_lp") {
        return BenchSolver::ImplicitLp;
    }
    if (s == "implicit_qp") {
        return BenchSolver::ImplicitQp;
    }
    throw Error(ErrorKind::Validation, "solver: expected explicit, implicit_lp or implicit_qp, got '" + s + "'");
}

struct BenchStats {
    double mean = 0.0; ///< mean over repetitions of the per-step mean, seconds
    double max = 0.0;  ///< slowest single governor step, seconds
    std::vector<double> rep_means;
    int steps = 0;
};

/// Times only the governor call. One warm-up run is discarded; implicit_qp
/// swaps the scenario's governor for the vector governor on the same plant.
[[nodiscard]] inline BenchStats benchmark(Scenario s, BenchSolver solver, int steps, int repetitions = 5) {
    require(steps >= 1000, ErrorKind::Validation, "steps: benchmark needs at least 1000 steps");
    require(repetitions >= 1, ErrorKind::Validation, "repetitions: must be positive");
    s.horizon = steps;
    if (solver == BenchSolver::ImplicitQp) {
        s.governor = GovernorKind::Vrg;
    } else {
        s.solver = solver == BenchSolver::Explicit ? GovernorSolver::Explicit : GovernorSolver::ImplicitLp;
    }
    BenchStats out;
    out.steps = steps;
    (void)run_scenario(s);
    double total = 0.0;
    for (int k = 0; k < repetitions; ++k) {
        const Trace tr = run_scenario(s);
        out.rep_means.push_back(tr.summary.governor_mean);
        total += tr.summary.governor_mean;
        out.max = std::max(out.max, tr.summary.governor_max);
    }
    out.mean = total / repetitions;
    return out;
}

struct Analysis {
    Matrix dc_gain;
    Vector dc_singular_values;
    double dc_condition = 0.0; ///< largest over smallest DC singular value
    double hinf = 0.0;
    double l1 = 0.0;
    std::optional<Matrix> F0;             ///< diagonal-method filter DC gain (square transfer functions)
    std::optional<Vector> F0_singular_values;
    std::optional<double> gamma;          ///< condition number of F0
    std::optional<std::vector<int>> d;    ///< state-feedback decoupling indices
    std::optional<double> certificate_identity;
    std::optional<double> certificate_pole;
    std::vector<std::string> notes;
};

[[nodiscard]] inline Analysis analyze(const SystemSpec& sys, const std::vector<Matrix>& M = {}) {
    Analysis a;
    const LinearSystem s = sys.realization();
    const LinearSystem nominal(s.A(), s.B(), s.C(), s.D());
    a.dc_gain = dc_gain(nominal);
    a.dc_singular_values = singular_values(a.dc_gain);
    a.dc_condition = a.dc_singular_values.size() ? a.dc_singular_values(0) /
                                                       a.dc_singular_values(a.dc_singular_values.size() - 1)
                                                 : 0.0;
    a.hinf = hinf_norm(nominal);
    a.l1 = l1_impulse_norm(nominal);
    if (sys.is_tf && sys.G.is_square()) {
        try {
            const TfDecoupling dec = design_tf_diagonal(sys.G);
            const Matrix F0 = dc_gain(realize(dec.F));
            a.F0 = F0;
            a.F0_singular_values = singular_values(F0);
            a.gamma = (*a.F0_singular_values)(0) / (*a.F0_singular_values)(a.F0_singular_values->size() - 1);
        } catch (const Error& e) {
            a.notes.push_back(std::string("diagonal decoupling unavailable: ") + e.what());
        }
    }
    if (!sys.is_tf && s.p() == s.m() && s.D().isZero(0.0)) {
        try {
            const SsDecoupling id = fw_identity_pair(nominal);
            a.d = id.d;
            try {
                a.certificate_identity = small_gain_certificate(nominal, id);
            } catch (const Error& e) {
                a.notes.push_back(std::string("identity pair: ") + e.what());
            }
            if (!M.empty()) {
                try {
                    a.certificate_pole = small_gain_certificate(nominal, fw_pole_assignment_pair(nominal, M));
                } catch (const Error& e) {
                    a.notes.push_back(std::string("pole pair: ") + e.what());
                }
            }
        } catch (const Error& e) {
            a.notes.push_back(std::string("state-feedback decoupling unavailable: ") + e.what());
        }
    }
    return a;
}

} // namespace drg

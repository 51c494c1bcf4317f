#include "jbsde/config.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jbsde/errors.hpp"

namespace jbsde {
namespace {

using nlohmann::json;

[[noreturn]] void fail_field(const std::string& field, const std::string& message) {
    throw ConfigError("config field '" + field + "' " + message);
}

std::string join_field(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

void require_object(const json& v, const std::string& field) {
    if (!v.is_object()) fail_field(field, "must be an object");
}

void require_known_keys(const json& obj, const std::string& parent,
                        std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* a) { return item.key() == a; });
        if (!known) fail_field(join_field(parent, item.key()), "is not recognized");
    }
}

double get_number(const json& obj, const std::string& parent, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail_field(join_field(parent, key), "must be a number");
    return v.get<double>();
}

std::uint64_t get_unsigned(const json& obj, const std::string& parent, const char* key,
                           std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer())
        fail_field(join_field(parent, key), "must be a nonnegative integer");
    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        fail_field(join_field(parent, key), "must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

int get_positive_int(const json& obj, const std::string& parent, const char* key, int fallback) {
    const auto v = get_unsigned(obj, parent, key, static_cast<std::uint64_t>(fallback));
    if (v == 0 || v > 1000000000ULL) fail_field(join_field(parent, key), "must be a positive integer");
    return static_cast<int>(v);
}

std::string get_string(const json& obj, const std::string& parent, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail_field(join_field(parent, key), "must be a string");
    return v.get<std::string>();
}

std::vector<double> get_vector(const json& v, const std::string& field, std::size_t expect) {
    if (!v.is_array() || v.size() != expect)
        fail_field(field, "must be an array of " + std::to_string(expect) + " numbers");
    std::vector<double> out(expect);
    for (std::size_t i = 0; i < expect; ++i) {
        if (!v[i].is_number()) fail_field(field, "must contain only numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

std::vector<std::vector<double>> get_matrix(const json& v, const std::string& field,
                                            std::size_t rows, std::size_t cols) {
    if (!v.is_array() || v.size() != rows)
        fail_field(field, "must be an array of " + std::to_string(rows) + " rows");
    std::vector<std::vector<double>> out;
    out.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r)
        out.push_back(get_vector(v[r], field + "[" + std::to_string(r) + "]", cols));
    return out;
}

double frobenius(const std::vector<std::vector<double>>& m) {
    double s = 0.0;
    for (const auto& row : m)
        for (double v : row) s += v * v;
    return std::sqrt(s);
}

bool any_nonzero(const std::vector<std::vector<double>>& m) {
    for (const auto& row : m)
        for (double v : row)
            if (v != 0.0) return true;
    return false;
}

std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
    // nlohmann reports the 1-based byte position of the offending token.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min(byte > 0 ? byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

// ---------------------------------------------------------------------------
// Inline problem grammar
// ---------------------------------------------------------------------------

json normalize_inline_problem(const json& in) {
    require_object(in, "problem");
    require_known_keys(in, "problem",
                       {"name", "dim_d", "dim_k", "epsilon_floor", "jumps", "factor", "driver",
                        "terminal", "coefficients"});

    json out;
    out["name"] = get_string(in, "problem", "name", "inline");
    const int d = get_positive_int(in, "problem", "dim_d", 1);
    const int k = get_positive_int(in, "problem", "dim_k", 1);
    out["dim_d"] = d;
    out["dim_k"] = k;
    const double eps = get_number(in, "problem", "epsilon_floor", 1e-8);
    if (!(eps > 0.0)) fail_field("problem.epsilon_floor", "must be positive");
    out["epsilon_floor"] = eps;

    const auto dd = static_cast<std::size_t>(d);
    const auto kk = static_cast<std::size_t>(k);

    // jumps -------------------------------------------------------------
    json jumps;
    std::vector<std::vector<double>> marks = {{1.0}};
    std::vector<double> kernel_mass = {1.0};
    double intensity = 1.0;
    if (in.contains("jumps")) {
        const json& jm = in.at("jumps");
        require_object(jm, "problem.jumps");
        require_known_keys(jm, "problem.jumps", {"marks", "kernel_mass", "intensity"});
        if (jm.contains("marks")) {
            const json& mk = jm.at("marks");
            if (!mk.is_array() || mk.empty())
                fail_field("problem.jumps.marks", "must be a nonempty array of mark vectors");
            const std::size_t ell = mk[0].is_array() ? mk[0].size() : 0;
            if (ell == 0) fail_field("problem.jumps.marks", "marks must be nonempty vectors");
            marks.clear();
            for (std::size_t j = 0; j < mk.size(); ++j) {
                auto mark = get_vector(mk[j], "problem.jumps.marks[" + std::to_string(j) + "]", ell);
                if (std::all_of(mark.begin(), mark.end(), [](double v) { return v == 0.0; }))
                    fail_field("problem.jumps.marks", "the zero vector is not a valid mark");
                marks.push_back(std::move(mark));
            }
        }
        const std::size_t m = marks.size();
        if (jm.contains("kernel_mass")) {
            const json& km = jm.at("kernel_mass");
            if (km.is_number()) {
                kernel_mass.assign(m, km.get<double>());
            } else {
                kernel_mass = get_vector(km, "problem.jumps.kernel_mass", m);
            }
            for (double q : kernel_mass)
                if (!(q >= 0.0)) fail_field("problem.jumps.kernel_mass", "must be nonnegative");
        } else {
            kernel_mass.assign(m, 1.0);
        }
        intensity = get_number(jm, "problem.jumps", "intensity", 1.0);
        if (!(intensity >= 0.0)) fail_field("problem.jumps.intensity", "must be nonnegative");
    }
    jumps["marks"] = marks;
    jumps["kernel_mass"] = kernel_mass;
    jumps["intensity"] = intensity;
    out["jumps"] = jumps;
    const std::size_t mm = marks.size();

    // factor --------------------------------------------------------------
    int factor_dim = 0;
    std::vector<double> x0;
    if (in.contains("factor")) {
        const json& fc = in.at("factor");
        require_object(fc, "problem.factor");
        require_known_keys(fc, "problem.factor", {"dim", "x0"});
        const auto fd = get_unsigned(fc, "problem.factor", "dim", 0);
        if (fd > static_cast<std::uint64_t>(k))
            fail_field("problem.factor.dim",
                       "must not exceed dim_k (the factor is driven by the leading Brownian "
                       "components through an identity diffusion)");
        factor_dim = static_cast<int>(fd);
        x0.assign(static_cast<std::size_t>(factor_dim), 0.0);
        if (fc.contains("x0"))
            x0 = get_vector(fc.at("x0"), "problem.factor.x0", static_cast<std::size_t>(factor_dim));
    }
    out["factor"] = json{{"dim", factor_dim}, {"x0", x0}};
    const auto fdim = static_cast<std::size_t>(factor_dim);

    // driver --------------------------------------------------------------
    std::vector<double> f_const(dd, 0.0);
    std::vector<std::vector<double>> lin_y(dd, std::vector<double>(dd, 0.0));
    std::vector<std::vector<double>> lin_z(dd, std::vector<double>(kk, 0.0));
    std::vector<std::vector<double>> lin_u(dd, std::vector<double>(mm, 0.0));
    bool has_odd = false;
    int odd_exponent = 3;
    std::vector<double> odd_coeff(dd, 0.0);
    if (in.contains("driver")) {
        const json& dr = in.at("driver");
        require_object(dr, "problem.driver");
        require_known_keys(dr, "problem.driver",
                           {"constant", "linear_y", "linear_z", "linear_u", "odd_power"});
        if (dr.contains("constant")) f_const = get_vector(dr.at("constant"), "problem.driver.constant", dd);
        if (dr.contains("linear_y")) lin_y = get_matrix(dr.at("linear_y"), "problem.driver.linear_y", dd, dd);
        if (dr.contains("linear_z")) lin_z = get_matrix(dr.at("linear_z"), "problem.driver.linear_z", dd, kk);
        if (dr.contains("linear_u")) lin_u = get_matrix(dr.at("linear_u"), "problem.driver.linear_u", dd, mm);
        if (dr.contains("odd_power")) {
            const json& op = dr.at("odd_power");
            require_object(op, "problem.driver.odd_power");
            require_known_keys(op, "problem.driver.odd_power", {"exponent", "coefficients"});
            const auto e = get_unsigned(op, "problem.driver.odd_power", "exponent", 3);
            if (e < 3 || e % 2 == 0)
                fail_field("problem.driver.odd_power.exponent", "must be an odd integer >= 3");
            odd_exponent = static_cast<int>(e);
            if (op.contains("coefficients"))
                odd_coeff = get_vector(op.at("coefficients"),
                                       "problem.driver.odd_power.coefficients", dd);
            for (double c : odd_coeff)
                if (c > 0.0)
                    fail_field("problem.driver.odd_power.coefficients",
                               "must be nonpositive (componentwise monotonicity)");
            has_odd = true;
        }
    }
    json driver;
    driver["constant"] = f_const;
    driver["linear_y"] = lin_y;
    driver["linear_z"] = lin_z;
    driver["linear_u"] = lin_u;
    if (has_odd) driver["odd_power"] = json{{"exponent", odd_exponent}, {"coefficients", odd_coeff}};
    out["driver"] = driver;

    // terminal --------------------------------------------------------------
    std::vector<double> t_const(dd, 0.0);
    std::vector<std::vector<double>> t_state(dd, std::vector<double>(fdim, 0.0));
    std::vector<std::vector<double>> t_jump(dd, std::vector<double>(mm, 0.0));
    if (in.contains("terminal")) {
        const json& tm = in.at("terminal");
        require_object(tm, "problem.terminal");
        require_known_keys(tm, "problem.terminal", {"constant", "state", "compensated_jump"});
        if (tm.contains("constant"))
            t_const = get_vector(tm.at("constant"), "problem.terminal.constant", dd);
        if (tm.contains("state"))
            t_state = get_matrix(tm.at("state"), "problem.terminal.state", dd, fdim);
        if (tm.contains("compensated_jump"))
            t_jump = get_matrix(tm.at("compensated_jump"), "problem.terminal.compensated_jump", dd, mm);
    }
    out["terminal"] =
        json{{"constant", t_const}, {"state", t_state}, {"compensated_jump", t_jump}};

    // coefficients ------------------------------------------------------
    // Defaults are conservative constants valid for the affine driver on the
    // default probe box: alpha is the top eigenvalue of the symmetrized y
    // matrix, the Lipschitz constants bound the affine parts against the
    // Frobenius / kernel-weighted norms, and growth covers the odd term on
    // the probe radius.
    double alpha_default = 0.0;
    if (d > 0) {
        Eigen::MatrixXd L(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) L(r, c) = lin_y[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        const Eigen::MatrixXd sym = 0.5 * (L + L.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
        alpha_default = es.eigenvalues().maxCoeff();
    }
    double lz_default = 0.0;
    for (std::size_t c = 0; c < dd; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < kk; ++j) s += lin_z[c][j] * lin_z[c][j];
        lz_default = std::max(lz_default, std::sqrt(s));
    }
    double lu_default = 0.0;
    for (std::size_t c = 0; c < dd; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < mm; ++j) {
            const double coeff = lin_u[c][j];
            if (coeff == 0.0) continue;
            const double rate = kernel_mass[j] * intensity;
            if (!(rate > 0.0))
                fail_field("problem.driver.linear_u",
                           "depends on mark " + std::to_string(j + 1) +
                               " whose compensator mass is zero; such a driver is not Lipschitz "
                               "in the kernel-weighted norm");
            s += coeff * coeff / rate;
        }
        lu_default = std::max(lu_default, std::sqrt(s));
    }
    const double probe_radius = 2.0;
    double odd_bound = 0.0;
    if (has_odd) {
        double worst = 0.0;
        for (double c : odd_coeff) worst = std::max(worst, std::abs(c));
        odd_bound = worst * std::pow(probe_radius, odd_exponent - 1);
    }
    double g_default = std::max(1.0, frobenius(lin_y) + odd_bound);
    double phi_default = 1.0;
    {
        double s = 0.0;
        for (double c : f_const) s += c * c;
        phi_default = std::max(1.0, std::sqrt(s));
    }

    json coeff_in = in.contains("coefficients") ? in.at("coefficients") : json::object();
    require_object(coeff_in, "problem.coefficients");
    require_known_keys(coeff_in, "problem.coefficients",
                       {"alpha", "lipschitz_z", "lipschitz_u", "phi", "g"});
    const double alpha = get_number(coeff_in, "problem.coefficients", "alpha", alpha_default);
    const double lz = get_number(coeff_in, "problem.coefficients", "lipschitz_z", lz_default);
    const double lu = get_number(coeff_in, "problem.coefficients", "lipschitz_u", lu_default);
    const double phi = get_number(coeff_in, "problem.coefficients", "phi", phi_default);
    const double g = get_number(coeff_in, "problem.coefficients", "g", g_default);
    if (!(lz >= 0.0)) fail_field("problem.coefficients.lipschitz_z", "must be nonnegative");
    if (!(lu >= 0.0)) fail_field("problem.coefficients.lipschitz_u", "must be nonnegative");
    if (!(g >= 0.0)) fail_field("problem.coefficients.g", "must be nonnegative");
    if (!(phi >= 1.0)) fail_field("problem.coefficients.phi", "must be at least 1");
    const double a_sq = g + lz * lz + lu * lu;
    if (!(a_sq >= eps))
        fail_field("problem.coefficients",
                   "give a^2 = g + lipschitz_z^2 + lipschitz_u^2 = " + std::to_string(a_sq) +
                       ", below epsilon_floor = " + std::to_string(eps));
    out["coefficients"] = json{{"alpha", alpha}, {"lipschitz_z", lz}, {"lipschitz_u", lu},
                               {"phi", phi},     {"g", g}};
    return out;
}

// ---------------------------------------------------------------------------
// Check normalization
// ---------------------------------------------------------------------------

const std::set<std::string>& known_check_names() {
    static const std::set<std::string> names = {"residual",      "norms",     "hypotheses",
                                                "power_integral", "jump_taylor", "apriori",
                                                "contraction",   "localization"};
    return names;
}

const std::set<std::string>& apriori_case_names() {
    static const std::set<std::string> names = {"P2",   "Pgt2_Y",   "Pgt2_ZU",
                                                "Plt2", "DataPge2", "DataPlt2"};
    return names;
}

CheckRequest normalize_check(const json& entry, const ExperimentConfig& cfg, std::size_t index) {
    const std::string field = "checks[" + std::to_string(index) + "]";
    json obj;
    if (entry.is_string()) {
        obj = json{{"name", entry.get<std::string>()}};
    } else if (entry.is_object()) {
        obj = entry;
    } else {
        fail_field(field, "must be a check name or an object with a 'name' key");
    }
    if (!obj.contains("name") || !obj.at("name").is_string())
        fail_field(field + ".name", "is required and must be a string");

    CheckRequest cr;
    cr.name = obj.at("name").get<std::string>();
    cr.params = json::object();
    if (known_check_names().count(cr.name) == 0) {
        std::string all;
        for (const auto& n : known_check_names()) all += (all.empty() ? "" : ", ") + n;
        fail_field(field + ".name", "names no known check; known checks: " + all);
    }

    if (cr.name == "residual" || cr.name == "norms") {
        require_known_keys(obj, field, {"name"});
    } else if (cr.name == "jump_taylor") {
        require_known_keys(obj, field, {"name"});
        if (!(cfg.p > 1.0 && cfg.p < 2.0))
            fail_field(field, "requires p in (1,2); the configured p is " + std::to_string(cfg.p));
    } else if (cr.name == "hypotheses") {
        require_known_keys(obj, field, {"name", "n_samples", "seed"});
        cr.params["n_samples"] = get_unsigned(obj, field, "n_samples", 256);
        cr.params["seed"] = get_unsigned(obj, field, "seed", 1);
        if (cr.params["n_samples"].get<std::uint64_t>() == 0)
            fail_field(field + ".n_samples", "must be positive");
    } else if (cr.name == "power_integral") {
        require_known_keys(obj, field, {"name", "n_samples", "dim", "p_max", "seed"});
        cr.params["n_samples"] = get_unsigned(obj, field, "n_samples", 2000);
        if (cr.params["n_samples"].get<std::uint64_t>() == 0)
            fail_field(field + ".n_samples", "must be positive");
        cr.params["dim"] = get_positive_int(obj, field, "dim", 2);
        const double p_max = get_number(obj, field, "p_max", 6.0);
        if (!(p_max > 2.0)) fail_field(field + ".p_max", "must exceed 2");
        cr.params["p_max"] = p_max;
        cr.params["seed"] = get_unsigned(obj, field, "seed", cfg.seed);
    } else if (cr.name == "apriori") {
        require_known_keys(obj, field, {"name", "case"});
        std::string c = get_string(obj, field, "case", "auto");
        if (c == "auto") c = cfg.p == 2.0 ? "P2" : (cfg.p > 2.0 ? "Pgt2_Y" : "Plt2");
        if (apriori_case_names().count(c) == 0)
            fail_field(field + ".case",
                       "must be one of auto, P2, Pgt2_Y, Pgt2_ZU, Plt2, DataPge2, DataPlt2");
        const bool ok = (c == "P2" && cfg.p == 2.0) ||
                        ((c == "Pgt2_Y" || c == "Pgt2_ZU") && cfg.p > 2.0) ||
                        (c == "DataPge2" && cfg.p >= 2.0) ||
                        ((c == "Plt2" || c == "DataPlt2") && cfg.p > 1.0 && cfg.p < 2.0);
        if (!ok)
            fail_field(field + ".case", "'" + c + "' does not apply at the configured p = " +
                                            std::to_string(cfg.p));
        cr.params["case"] = c;
    } else if (cr.name == "contraction") {
        require_known_keys(obj, field, {"name", "n_pairs", "beta", "amplitude", "seed"});
        const auto n_pairs = get_unsigned(obj, field, "n_pairs", 4);
        if (n_pairs < 2) fail_field(field + ".n_pairs", "must be at least 2");
        cr.params["n_pairs"] = n_pairs;
        const double beta = get_number(obj, field, "beta", cfg.beta);
        if (!(beta > 0.0)) fail_field(field + ".beta", "must be positive");
        cr.params["beta"] = beta;
        const double amplitude = get_number(obj, field, "amplitude", 1.0);
        if (!(amplitude > 0.0)) fail_field(field + ".amplitude", "must be positive");
        cr.params["amplitude"] = amplitude;
        cr.params["seed"] = get_unsigned(obj, field, "seed", cfg.seed);
    } else if (cr.name == "localization") {
        require_known_keys(obj, field, {"name", "levels", "beta"});
        if (!(cfg.p >= 2.0))
            fail_field(field, "requires p >= 2; the configured p is " + std::to_string(cfg.p));
        std::vector<double> levels = {1.0, 2.0, 4.0, 8.0};
        if (obj.contains("levels")) {
            const json& lv = obj.at("levels");
            if (!lv.is_array() || lv.size() < 2)
                fail_field(field + ".levels", "must be an array of at least two levels");
            levels = get_vector(lv, field + ".levels", lv.size());
        }
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (!(levels[i] > 0.0)) fail_field(field + ".levels", "must be positive");
            if (i > 0 && !(levels[i] > levels[i - 1]))
                fail_field(field + ".levels", "must be strictly increasing");
        }
        cr.params["levels"] = levels;
        const double beta = get_number(obj, field, "beta", cfg.beta);
        if (!(beta > 0.0)) fail_field(field + ".beta", "must be positive");
        cr.params["beta"] = beta;
    }
    return cr;
}

std::string check_identity(const CheckRequest& cr) {
    if (cr.name == "apriori") return cr.name + ":" + cr.params.at("case").get<std::string>();
    return cr.name;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_and_column(text, e.byte);
        throw ConfigError(origin + ": parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + " (" + e.what() + ")");
    }
    if (!root.is_object()) throw ConfigError(origin + ": the top level must be a JSON object");
    require_known_keys(root, "",
                       {"problem", "p", "beta", "grid", "ensemble", "scheme", "checks", "output"});

    ExperimentConfig cfg;

    if (!root.contains("problem"))
        fail_field("problem", "is required (a builtin key or an inline problem object)");
    const json& prob = root.at("problem");
    if (prob.is_string()) {
        cfg.problem_key = prob.get<std::string>();
        const auto keys = builtin_problem_keys();
        if (std::find(keys.begin(), keys.end(), cfg.problem_key) == keys.end()) {
            std::string all;
            for (const auto& k : keys) all += (all.empty() ? "" : ", ") + k;
            fail_field("problem", "names no builtin problem; known keys: " + all);
        }
    } else if (prob.is_object()) {
        cfg.inline_problem = normalize_inline_problem(prob);
    } else {
        fail_field("problem", "must be a builtin key string or an inline problem object");
    }

    cfg.p = get_number(root, "", "p", 2.0);
    if (!(cfg.p > 1.0)) fail_field("p", "is invalid: p must exceed 1");
    cfg.beta = get_number(root, "", "beta", 1.0);
    if (!(cfg.beta > 0.0)) fail_field("beta", "must be positive");

    if (root.contains("grid")) {
        const json& grid = root.at("grid");
        require_object(grid, "grid");
        require_known_keys(grid, "grid", {"horizon", "n_steps"});
        cfg.horizon = get_number(grid, "grid", "horizon", 1.0);
        if (!(cfg.horizon > 0.0)) fail_field("grid.horizon", "must be positive");
        cfg.n_steps = static_cast<std::size_t>(get_unsigned(grid, "grid", "n_steps", 64));
        if (cfg.n_steps == 0) fail_field("grid.n_steps", "must be positive");
    }

    if (!root.contains("ensemble"))
        fail_field("ensemble.seed",
                   "is required: reproducibility demands an explicit seed (no entropy defaults)");
    const json& ens = root.at("ensemble");
    require_object(ens, "ensemble");
    require_known_keys(ens, "ensemble", {"n_paths", "seed"});
    cfg.n_paths = static_cast<std::size_t>(get_unsigned(ens, "ensemble", "n_paths", 1024));
    if (cfg.n_paths == 0) fail_field("ensemble.n_paths", "must be positive");
    if (!ens.contains("seed"))
        fail_field("ensemble.seed",
                   "is required: reproducibility demands an explicit seed (no entropy defaults)");
    cfg.seed = get_unsigned(ens, "ensemble", "seed", 0);

    if (root.contains("scheme")) {
        const json& sch = root.at("scheme");
        require_object(sch, "scheme");
        require_known_keys(sch, "scheme",
                           {"basis_degree", "ridge", "implicit_max_iters", "implicit_tol",
                            "implicit_damping", "picard_max_iters", "picard_tol"});
        const auto degree = get_unsigned(sch, "scheme", "basis_degree",
                                         static_cast<std::uint64_t>(cfg.regression.basis_degree));
        if (degree > 8) fail_field("scheme.basis_degree", "must be at most 8");
        cfg.regression.basis_degree = static_cast<int>(degree);
        cfg.regression.ridge = get_number(sch, "scheme", "ridge", cfg.regression.ridge);
        if (cfg.regression.ridge < 0.0) fail_field("scheme.ridge", "must be nonnegative");
        cfg.regression.implicit_max_iters =
            get_positive_int(sch, "scheme", "implicit_max_iters", cfg.regression.implicit_max_iters);
        cfg.regression.implicit_tol =
            get_number(sch, "scheme", "implicit_tol", cfg.regression.implicit_tol);
        if (!(cfg.regression.implicit_tol > 0.0)) fail_field("scheme.implicit_tol", "must be positive");
        cfg.regression.implicit_damping =
            get_number(sch, "scheme", "implicit_damping", cfg.regression.implicit_damping);
        if (!(cfg.regression.implicit_damping > 0.0 && cfg.regression.implicit_damping <= 1.0))
            fail_field("scheme.implicit_damping", "must lie in (0, 1]");
        cfg.picard_max_iters = get_positive_int(sch, "scheme", "picard_max_iters", cfg.picard_max_iters);
        cfg.picard_tol = get_number(sch, "scheme", "picard_tol", cfg.picard_tol);
        if (!(cfg.picard_tol > 0.0)) fail_field("scheme.picard_tol", "must be positive");
    }

    if (root.contains("checks")) {
        const json& checks = root.at("checks");
        if (!checks.is_array()) fail_field("checks", "must be an array");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < checks.size(); ++i) {
            CheckRequest cr = normalize_check(checks[i], cfg, i);
            const std::string id = check_identity(cr);
            if (!seen.insert(id).second)
                fail_field("checks", "requests '" + id + "' more than once; every check appears "
                                     "exactly once in a report");
            cfg.checks.push_back(std::move(cr));
        }
    }

    if (root.contains("output")) {
        const json& outp = root.at("output");
        require_object(outp, "output");
        require_known_keys(outp, "output", {"directory", "formats"});
        cfg.out_dir = get_string(outp, "output", "directory", cfg.out_dir);
        if (cfg.out_dir.empty()) fail_field("output.directory", "must be nonempty");
        if (outp.contains("formats")) {
            const json& fm = outp.at("formats");
            if (!fm.is_array() || fm.empty())
                fail_field("output.formats", "must be a nonempty array drawn from {json, csv}");
            std::set<std::string> uniq;
            for (const json& f : fm) {
                if (!f.is_string() || (f != "json" && f != "csv"))
                    fail_field("output.formats", "must contain only 'json' and 'csv'");
                uniq.insert(f.get<std::string>());
            }
            cfg.formats.assign(uniq.begin(), uniq.end());
        }
    }

    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

nlohmann::json ExperimentConfig::effective() const {
    json j;
    j["problem"] = problem_key.empty() ? inline_problem : json(problem_key);
    j["p"] = p;
    j["beta"] = beta;
    j["grid"] = json{{"horizon", horizon}, {"n_steps", n_steps}};
    j["ensemble"] = json{{"n_paths", n_paths}, {"seed", seed}};
    j["scheme"] = json{{"basis_degree", regression.basis_degree},
                       {"ridge", regression.ridge},
                       {"implicit_max_iters", regression.implicit_max_iters},
                       {"implicit_tol", regression.implicit_tol},
                       {"implicit_damping", regression.implicit_damping},
                       {"picard_max_iters", picard_max_iters},
                       {"picard_tol", picard_tol}};
    json checks_json = json::array();
    for (const auto& c : checks) checks_json.push_back(json{{"name", c.name}, {"params", c.params}});
    j["checks"] = checks_json;
    j["output"] = json{{"directory", out_dir}, {"formats", formats}};
    return j;
}

BuiltProblem build_config_problem(const ExperimentConfig& cfg) {
    if (!cfg.problem_key.empty()) return make_builtin_problem(cfg.problem_key, cfg.p, cfg.beta);
    return parse_inline_problem(cfg.inline_problem, cfg.p, cfg.beta);
}

BuiltProblem parse_inline_problem(const nlohmann::json& spec, double p, double beta) {
    const json norm = normalize_inline_problem(spec);

    const int d = norm.at("dim_d").get<int>();
    const int k = norm.at("dim_k").get<int>();
    const auto dd = static_cast<std::size_t>(d);
    const auto kk = static_cast<std::size_t>(k);

    BuiltProblem bp;
    ProblemSpec& pr = bp.problem;
    pr.name = norm.at("name").get<std::string>();
    pr.dim_d = d;
    pr.dim_k = k;
    pr.p = p;
    pr.beta = beta;
    pr.epsilon_floor = norm.at("epsilon_floor").get<double>();

    const auto marks = norm.at("jumps").at("marks").get<std::vector<std::vector<double>>>();
    const auto kernel_mass = norm.at("jumps").at("kernel_mass").get<std::vector<double>>();
    const double intensity = norm.at("jumps").at("intensity").get<double>();
    const std::size_t mm = marks.size();
    pr.jump_spec.marks = marks;
    pr.jump_spec.kernel_mass = [kernel_mass](std::size_t mark, double, std::span<const double>) {
        return kernel_mass[mark];
    };
    pr.jump_spec.jump_intensity = [intensity](double, std::span<const double>) { return intensity; };

    const auto f_const = norm.at("driver").at("constant").get<std::vector<double>>();
    const auto lin_y = norm.at("driver").at("linear_y").get<std::vector<std::vector<double>>>();
    const auto lin_z = norm.at("driver").at("linear_z").get<std::vector<std::vector<double>>>();
    const auto lin_u = norm.at("driver").at("linear_u").get<std::vector<std::vector<double>>>();
    const bool has_odd = norm.at("driver").contains("odd_power");
    int odd_exponent = 3;
    std::vector<double> odd_coeff(dd, 0.0);
    if (has_odd) {
        odd_exponent = norm.at("driver").at("odd_power").at("exponent").get<int>();
        odd_coeff = norm.at("driver").at("odd_power").at("coefficients").get<std::vector<double>>();
    }

    pr.depends_on_z = any_nonzero(lin_z);
    pr.depends_on_u = any_nonzero(lin_u);
    const bool zero_driver = !has_odd && !pr.depends_on_z && !pr.depends_on_u &&
                             !any_nonzero(lin_y) &&
                             std::all_of(f_const.begin(), f_const.end(),
                                         [](double v) { return v == 0.0; });
    if (!zero_driver) {
        pr.generator = [=](const GeneratorArgs& a, std::span<double> out) {
            for (std::size_t c = 0; c < dd; ++c) {
                double v = f_const[c];
                for (std::size_t j = 0; j < dd; ++j) v += lin_y[c][j] * a.y[j];
                for (std::size_t j = 0; j < kk; ++j) v += lin_z[c][j] * a.z[c * kk + j];
                for (std::size_t j = 0; j < mm; ++j) v += lin_u[c][j] * a.u[c * mm + j];
                if (has_odd) {
                    double pow_y = a.y[c];
                    for (int e = 1; e < odd_exponent; ++e) pow_y *= a.y[c];
                    v += odd_coeff[c] * pow_y;
                }
                out[c] = v;
            }
        };
    }

    const auto t_const = norm.at("terminal").at("constant").get<std::vector<double>>();
    const auto t_state = norm.at("terminal").at("state").get<std::vector<std::vector<double>>>();
    const auto t_jump =
        norm.at("terminal").at("compensated_jump").get<std::vector<std::vector<double>>>();
    const bool zero_terminal = std::all_of(t_const.begin(), t_const.end(),
                                           [](double v) { return v == 0.0; }) &&
                               !any_nonzero(t_state) && !any_nonzero(t_jump);
    if (!zero_terminal) {
        const std::size_t fdim = t_state.empty() ? 0 : t_state[0].size();
        pr.terminal = [=](const TerminalArgs& a, std::span<double> out) {
            for (std::size_t c = 0; c < dd; ++c) {
                double v = t_const[c];
                for (std::size_t j = 0; j < fdim; ++j) v += t_state[c][j] * a.x[j];
                for (std::size_t j = 0; j < mm; ++j)
                    v += t_jump[c][j] * (a.jump_totals[j] - a.compensator_totals[j]);
                out[c] = v;
            }
        };
    }

    const json& coeff = norm.at("coefficients");
    const auto constant = [](double v) {
        return [v](double, std::span<const double>) { return v; };
    };
    pr.alpha = constant(coeff.at("alpha").get<double>());
    pr.lipschitz_z = constant(coeff.at("lipschitz_z").get<double>());
    pr.lipschitz_u = constant(coeff.at("lipschitz_u").get<double>());
    pr.phi_growth = constant(coeff.at("phi").get<double>());
    pr.g_growth = constant(coeff.at("g").get<double>());

    const int factor_dim = norm.at("factor").at("dim").get<int>();
    bp.factor.dim = factor_dim;
    bp.factor.x0 = norm.at("factor").at("x0").get<std::vector<double>>();
    if (factor_dim > 0) {
        bp.factor.diffusion = [factor_dim, kk](double, std::span<const double>,
                                               std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (int i = 0; i < factor_dim; ++i)
                out[static_cast<std::size_t>(i) * kk + static_cast<std::size_t>(i)] = 1.0;
        };
    }
    bp.description = "inline problem";
    return bp;
}

}  // namespace jbsde

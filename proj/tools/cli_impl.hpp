// Command implementations for the oiw command-line driver.
//
// Kept header-only and separate from main() so the format tests can call the
// commands in-process and parse the emitted files without spawning binaries.
#pragma once

#include <oiw/annulus.hpp>
#include <oiw/birkhoff.hpp>
#include <oiw/dynamics.hpp>
#include <oiw/rational.hpp>

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace oiw::cli {

using nlohmann::json;

// Exit contract: 0 success, 2 configuration error, 3 invariant failure.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- Run configuration -----------------------------------------------------------

struct RunConfig {
    // model family: H = p1^2/2 + (omega0/2)(q2^2+p2^2) - (c10 lambda / 2) q1^2
    //                 + c20 q1^3 + extra terms
    double omega0 = 1.0;
    double c10 = 1.0;
    double c20 = 1.0;
    double lambda = 1e-3;
    std::vector<std::pair<MultiIndex, double>> extra;
    double c3_target = 2.0 * std::sqrt(2.0);  // cubic coefficient after rescaling
    // exact-arithmetic mode (normalize only): coefficients given as "p/q" strings
    bool rational = false;
    std::map<std::string, std::string> rational_coefficients;

    // pipeline
    int n = 4;           // normal-form truncation degree
    int N0 = 5;          // skeleton truncation of the three-parameter model
    int max_degree = 8;  // local-chart degree for the return map

    // numerics
    double delta = 0.02;
    std::vector<double> eps_list{0.35};
    std::vector<double> mu_list{0.0};
    double nu_hat_scale = 0.3;  // nu_hat = scale * eps^2
    double tolerance = 1e-9;
    double step_budget = 300.0;
    std::vector<double> alpha_grid;            // portrait energy offsets
    std::vector<double> alpha_fractions{0.2};  // hunt: alpha = frac * alpha_max
    int samples = 12;
    int max_loops = 5;

    std::string out_dir = "out";
    unsigned long seed = 0;
    int jobs = 1;
};

// ---- JSON helpers -----------------------------------------------------------------

inline json load_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not readable: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_json_text(ss.str());
}

namespace detail {

inline const json* find_path(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::istringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
    }
    return cur;
}

template <class T>
T fetch(const json& j, const std::string& key, const T& fallback) {
    const json* v = find_path(j, key);
    if (v == nullptr) return fallback;
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key \"" + key + "\" has the wrong type");
    }
}

template <class T>
T require(const json& j, const std::string& key) {
    const json* v = find_path(j, key);
    if (v == nullptr) throw ConfigError("config key \"" + key + "\" is missing");
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key \"" + key + "\" has the wrong type");
    }
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    RunConfig c;
    using detail::fetch;
    c.omega0 = detail::require<double>(j, "model.omega0");
    c.c10 = detail::require<double>(j, "model.c10");
    c.c20 = detail::require<double>(j, "model.c20");
    c.lambda = fetch(j, "model.lambda", c.lambda);
    c.c3_target = fetch(j, "model.c3_target", c.c3_target);
    if (const json* ex = detail::find_path(j, "model.extra_terms")) {
        if (!ex->is_array()) throw ConfigError("config key \"model.extra_terms\" has the wrong type");
        for (const auto& t : *ex) {
            if (!t.is_object() || !t.contains("exponents") || !t.contains("value"))
                throw ConfigError(
                    "config key \"model.extra_terms\" entries need \"exponents\" and \"value\"");
            auto e = t["exponents"].get<std::vector<int>>();
            if (e.size() != 4)
                throw ConfigError("config key \"model.extra_terms\" exponents must have 4 entries");
            c.extra.push_back({mono(e[0], e[1], e[2], e[3]), t["value"].get<double>()});
        }
    }
    c.rational = fetch(j, "model.rational", false);
    if (const json* rc = detail::find_path(j, "model.rational_coefficients")) {
        for (auto it = rc->begin(); it != rc->end(); ++it)
            c.rational_coefficients[it.key()] = it.value().get<std::string>();
    }

    c.n = fetch(j, "pipeline.n", c.n);
    c.N0 = fetch(j, "pipeline.N0", c.N0);
    c.max_degree = fetch(j, "pipeline.max_degree", c.max_degree);

    c.delta = fetch(j, "numerics.delta", c.delta);
    c.eps_list = fetch(j, "numerics.eps", c.eps_list);
    c.mu_list = fetch(j, "numerics.mu", c.mu_list);
    c.nu_hat_scale = fetch(j, "numerics.nu_hat_scale", c.nu_hat_scale);
    c.tolerance = fetch(j, "numerics.tolerance", c.tolerance);
    c.step_budget = fetch(j, "numerics.step_budget", c.step_budget);
    c.alpha_grid = fetch(j, "numerics.alpha_grid", c.alpha_grid);
    c.alpha_fractions = fetch(j, "numerics.alpha_fractions", c.alpha_fractions);
    c.samples = fetch(j, "numerics.samples", c.samples);
    c.max_loops = fetch(j, "numerics.max_loops", c.max_loops);

    c.out_dir = fetch(j, "output.dir", c.out_dir);
    return c;
}

// Smallness/sanity assertions, evaluated and logged at startup.
inline std::vector<std::string> validate_config(const RunConfig& c) {
    std::vector<std::string> log;
    auto say = [&](const std::string& s) { log.push_back(s); };

    if (!(c.omega0 > 0)) throw ConfigError("config key \"model.omega0\" must be positive");
    if (c.eps_list.empty()) throw ConfigError("config key \"numerics.eps\" must be non-empty");
    for (double e : c.eps_list)
        if (!(e > 0)) throw ConfigError("config key \"numerics.eps\" entries must be positive");
    for (double m : c.mu_list)
        if (m < 0) throw ConfigError("config key \"numerics.mu\" entries must be non-negative");
    if (!(c.delta > 0)) throw ConfigError("config key \"numerics.delta\" must be positive");
    if (c.n < 3) throw ConfigError("config key \"pipeline.n\" must be at least 3");
    if (c.N0 < 1) throw ConfigError("config key \"pipeline.N0\" must be at least 1");
    if (c.max_degree < 4) throw ConfigError("config key \"pipeline.max_degree\" must be at least 4");
    if (!(c.tolerance > 0)) throw ConfigError("config key \"numerics.tolerance\" must be positive");
    if (!(c.step_budget > 0)) throw ConfigError("config key \"numerics.step_budget\" must be positive");
    for (double f : c.alpha_fractions)
        if (!(f > 0.0 && f <= 1.0))
            throw ConfigError("config key \"numerics.alpha_fractions\" entries must lie in (0,1]");

    std::ostringstream os;
    os << std::setprecision(6);
    os << "delta = " << c.delta << " (entry window delta/24 = " << c.delta / 24.0
       << ", exit window delta/16 = " << c.delta / 16.0 << ")";
    say(os.str());
    for (double e : c.eps_list) {
        std::ostringstream ls;
        ls << std::setprecision(6) << "eps = " << e << ": nu_hat = " << c.nu_hat_scale * e * e
           << ", nu_bar = " << nu_bar_of(std::min(e, 0.99)) << ", band I2 <= 0.08*delta^2*eps^2 = "
           << 0.08 * c.delta * c.delta * e * e;
        say(ls.str());
        if (e >= 1.0) say("warning: eps = " + std::to_string(e) + " is outside the small regime");
    }
    say("lambda = " + std::to_string(c.lambda) +
        (c.lambda > 0 ? " (correct half-bifurcation)" : " (non-positive: scaling will reject)"));
    return log;
}

// ---- Model construction -----------------------------------------------------------

inline RSeries build_family_hamiltonian(const RunConfig& cfg, double lambda, int D) {
    RSeries H(D);
    H.set(mono(0, 0, 2, 0), 0.5);
    H.set(mono(0, 2, 0, 0), 0.5 * cfg.omega0);
    H.set(mono(0, 0, 0, 2), 0.5 * cfg.omega0);
    H.add_term(mono(2, 0, 0, 0), -0.5 * cfg.c10 * lambda);
    H.add_term(mono(3, 0, 0, 0), cfg.c20);
    for (const auto& [m, v] : cfg.extra) H.add_term(m, v);
    return H;
}

inline ScaledModel scaled_model_for_eps(const RunConfig& cfg, double eps) {
    // The scaling identifies eps^4 with the unfolding coefficient c10*lambda,
    // so a requested eps fixes lambda.
    const double lambda = std::pow(eps, 4) / cfg.c10;
    const int D = std::max(cfg.n + 1, 4);
    RSeries H = build_family_hamiltonian(cfg, lambda, D);
    auto Q = QuadraticPart::resonance_02iw(cfg.omega0, D);
    NormalFormResult nf = normal_form_pipeline(H, cfg.n, Q);
    try {
        return scale_and_reparametrize(nf, lambda, cfg.c3_target);
    } catch (const std::runtime_error& e) {
        throw InvariantError(e.what());
    }
}

// Return maps are expensive to set up (the local chart is a degree-D series
// inversion), so runs that touch the same (eps, mu) share one mapper.
inline const ReturnMapper& mapper_for(const RunConfig& cfg, double eps, double mu) {
    static std::map<std::string, std::unique_ptr<ReturnMapper>> cache;
    static std::mutex gate;
    std::ostringstream key;
    key << std::setprecision(17) << cfg.omega0 << '|' << cfg.c10 << '|' << cfg.c20 << '|' << eps
        << '|' << mu << '|' << cfg.nu_hat_scale << '|' << cfg.delta << '|' << cfg.max_degree << '|'
        << cfg.N0 << '|' << cfg.n;
    std::lock_guard<std::mutex> lock(gate);
    auto it = cache.find(key.str());
    if (it == cache.end()) {
        ScaledModel sm = scaled_model_for_eps(cfg, eps);
        HamiltonianModel m = three_parameter_model(sm, cfg.nu_hat_scale * sm.eps * sm.eps, mu, cfg.N0);
        auto rm = std::make_unique<ReturnMapper>(m, cfg.delta, cfg.max_degree);
        rm->t_budget = cfg.step_budget;
        it = cache.emplace(key.str(), std::move(rm)).first;
    }
    return *it->second;
}

// ---- small worker pool --------------------------------------------------------------

template <class Fn>
inline void parallel_for(std::size_t count, int jobs, Fn fn) {
    const int workers = std::max(1, std::min<int>(jobs, (int)count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_gate;
    std::exception_ptr first_error;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_gate);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- output plumbing -----------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);  // binary: byte-identical reruns
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

inline std::string slug(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    std::string s = os.str();
    for (char& ch : s)
        if (ch == '.' || ch == '-' || ch == '+') ch = '_';
    return s;
}

// ---- normalize ------------------------------------------------------------------------

inline Rational parse_rational(const std::string& text) {
    long long n = 0, d = 0;
    char slash = 0;
    std::istringstream is(text);
    if (!(is >> n >> slash >> d) || slash != '/' || d == 0)
        throw ConfigError("rational coefficient \"" + text + "\" is not of the form p/q");
    return Rational(n, d);
}

inline std::string rational_bundle_text(const RunConfig& cfg) {
    auto coeff = [&](const std::string& key, const std::string& fallback) {
        auto it = cfg.rational_coefficients.find(key);
        return parse_rational(it != cfg.rational_coefficients.end() ? it->second : fallback);
    };
    const int D = std::max(cfg.n, 4);
    const Rational omega0 = coeff("omega0", "1/1");
    QSeries H(D);
    H.set(mono(0, 0, 2, 0), Rational(1, 2));
    H.set(mono(0, 2, 0, 0), omega0 / 2);
    H.set(mono(0, 0, 0, 2), omega0 / 2);
    H.set(mono(3, 0, 0, 0), coeff("c20", "1/1"));
    H.set(mono(4, 0, 0, 0), coeff("c30", "0/1"));
    H.set(mono(1, 2, 0, 0), coeff("a12", "0/1"));
    H.set(mono(1, 0, 0, 2), coeff("a12", "0/1"));
    QSeries H2q = H.homogeneous_part(2).truncated(2);

    std::ostringstream os;
    os << "exact normal-form bundle, degree " << cfg.n << "\n";
    QSeries Hc = H;
    for (int l = 3; l <= cfg.n; ++l) {
        auto [N_l, S_l] = homological_decompose(Hc.homogeneous_part(l).truncated(l), H2q);
        os << "-- grade " << l << " normal part --\n" << to_text(N_l);
        os << "-- grade " << l << " generator --\n" << to_text(S_l);
    }
    return os.str();
}

inline json cmd_normalize(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    json manifest;
    manifest["command"] = "normalize";
    std::vector<std::string> files;

    if (cfg.rational) {
        const std::string text = rational_bundle_text(cfg);
        write_text_file(fs::path(cfg.out_dir) / "normal_form_exact.txt", text);
        files.push_back("normal_form_exact.txt");
        manifest["mode"] = "rational";
        manifest["files"] = files;
        return manifest;
    }

    if (cfg.c20 == 0.0) throw InvariantError("degenerate hypothesis (c20 = 0): unfolding rejected");

    const int D = std::max(cfg.n + 1, 4);
    RSeries H = build_family_hamiltonian(cfg, cfg.lambda, D);
    auto Q = QuadraticPart::resonance_02iw(cfg.omega0, D);
    NormalFormResult nf = normal_form_pipeline(H, cfg.n, Q);

    write_text_file(fs::path(cfg.out_dir) / "normal_form.txt", to_text(Q.H2 + nf.N));
    files.push_back("normal_form.txt");
    {
        std::ostringstream os;
        os << nf.S_list.size() << " generators\n";
        for (const auto& g : nf.S_list) os << to_text(g);
        write_text_file(fs::path(cfg.out_dir) / "generators.txt", os.str());
        files.push_back("generators.txt");
    }
    write_text_file(fs::path(cfg.out_dir) / "residual.txt", to_text(nf.residual));
    files.push_back("residual.txt");

    ScaledModel sm;
    try {
        sm = scale_and_reparametrize(nf, cfg.lambda, cfg.c3_target);
    } catch (const std::runtime_error& e) {
        throw InvariantError(e.what());
    }

    manifest["mode"] = "float";
    manifest["remainder_degree"] = nf.remainder_degree;
    manifest["residual_norm"] = nf.residual_norm;
    manifest["rotational_symmetry"] = rotational_symmetrize_check(nf.N, Q);
    manifest["scaled"] = {{"eps", sm.eps}, {"omega", sm.omega}, {"c2", sm.c2},
                          {"c3", sm.c3},   {"rho0", sm.rho0}};
    manifest["files"] = files;
    return manifest;
}

// ---- portrait ---------------------------------------------------------------------------

// Level sets of the planar skeleton: p1^2 = q1^2 - 2*c3*q1^3 + alpha.
inline std::string portrait_classification(double alpha, double c3) {
    // discriminant of -2*c3*q^3 + q^2 + alpha
    const double disc = -4.0 * alpha - 108.0 * c3 * c3 * alpha * alpha;
    if (disc > 0.0) return "closed-and-open";
    if (disc < 0.0) return "open";
    return "degenerate";
}

inline json cmd_portrait(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const double c3 = cfg.c3_target;

    std::ostringstream csv;
    csv << "alpha,q1,p1\n" << std::setprecision(17);
    json classes = json::array();
    const int nq = 601;
    const double q_lo = -0.25, q_hi = 0.45;
    for (double alpha : cfg.alpha_grid) {
        for (int i = 0; i < nq; ++i) {
            const double q = q_lo + (q_hi - q_lo) * i / (nq - 1);
            const double rad = q * q - 2.0 * c3 * q * q * q + alpha;
            if (rad < 0.0) continue;
            const double p = std::sqrt(rad);
            csv << alpha << ',' << q << ',' << p << '\n';
            csv << alpha << ',' << q << ',' << -p << '\n';
        }
        classes.push_back({{"alpha", alpha}, {"classification", portrait_classification(alpha, c3)}});
    }
    write_text_file(fs::path(cfg.out_dir) / "portrait.csv", csv.str());

    std::ostringstream hom;
    hom << "t,q1,p1\n" << std::setprecision(17);
    const int nt = 401;
    for (int i = 0; i < nt; ++i) {
        const double t = -10.0 + 20.0 * i / (nt - 1);
        const auto qp = analytic_homoclinic(t, c3);
        hom << t << ',' << qp[0] << ',' << qp[1] << '\n';
    }
    write_text_file(fs::path(cfg.out_dir) / "homoclinic.csv", hom.str());

    json manifest;
    manifest["command"] = "portrait";
    manifest["c3"] = c3;
    manifest["levels"] = classes;
    manifest["files"] = {"portrait.csv", "homoclinic.csv"};
    return manifest;
}

// ---- return-map ----------------------------------------------------------------------

inline std::vector<double> band_alphas(const RunConfig& cfg, double eps, int k) {
    const double band = cfg.delta * cfg.delta * eps * eps;
    std::vector<double> out;
    for (int i = 0; i < k; ++i)
        out.push_back((0.03 + (0.08 - 0.03) * (i + 0.5) / k) * band);
    return out;
}

inline json cmd_return_map(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    struct Task {
        double eps, mu;
    };
    std::vector<Task> tasks;
    for (double e : cfg.eps_list)
        for (double m : cfg.mu_list) tasks.push_back({e, m});

    std::mutex gate;
    json entries = json::array();
    parallel_for(tasks.size(), cfg.jobs, [&](std::size_t ti) {
        const auto [eps, mu] = tasks[ti];
        const ReturnMapper& rm = mapper_for(cfg, eps, mu);
        const double band = cfg.delta * cfg.delta * rm.model.eps * rm.model.eps;

        // Restricted returns on the trapping band I2 in [c1,c2]*delta^2*eps^2,
        // taken at a perturbation label alpha well below the band.
        const double alpha_label = 0.2 * 0.25 * 0.03 * band;
        std::vector<ReturnRecord> recs;
        const auto actions = band_alphas(cfg, rm.model.eps, 3);
        const int n_ang = std::max(2, cfg.samples / 3);
        for (double a : actions)
            for (int k = 0; k < n_ang; ++k) {
                const double phi = 2.0 * M_PI * k / n_ang;
                const double r = std::sqrt(a);
                recs.push_back(
                    rm.restricted_return_record(alpha_label, r * std::cos(phi), -r * std::sin(phi)));
            }
        const std::string csv_name =
            "return_map_eps" + slug(rm.model.eps) + "_mu" + slug(mu) + ".csv";
        {
            std::ostringstream os;
            write_return_csv(os, recs);
            write_text_file(fs::path(cfg.out_dir) / csv_name, os.str());
        }

        // twist profile against the conservative reference
        const ReturnMapper& rm0 = mapper_for(cfg, eps, 0.0);
        TwistOptions topt;
        topt.n_rho = 4;
        topt.n_q = 3;
        TwistProfile tp = to_twist_coordinates(rm, rm0, 0.2 * 0.25 * topt.c1 * band, topt);
        KamReport kr = check_kam_hypotheses(tp);
        json prof;
        prof["eps"] = tp.eps;
        prof["mu"] = tp.mu;
        prof["nu_bar"] = tp.nu_bar;
        prof["rho_grid"] = tp.rho_grid;
        prof["alpha_values"] = tp.alpha_values;
        prof["twist_negative"] = kr.twist_negative;
        prof["twist_min"] = kr.twist_min;
        prof["twist_max"] = kr.twist_max;
        prof["sup_F"] = kr.sup_F;
        prof["sup_G"] = kr.sup_G;
        prof["summary"] = kr.summary;
        const std::string prof_name =
            "twist_profile_eps" + slug(rm.model.eps) + "_mu" + slug(mu) + ".json";
        write_text_file(fs::path(cfg.out_dir) / prof_name, prof.dump(2) + "\n");

        std::lock_guard<std::mutex> lock(gate);
        entries.push_back(
            {{"eps", rm.model.eps}, {"mu", mu}, {"records", csv_name}, {"twist_profile", prof_name}});
    });

    json manifest;
    manifest["command"] = "return-map";
    manifest["runs"] = entries;
    return manifest;
}

// ---- hunt ------------------------------------------------------------------------------

inline json cmd_hunt(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    struct Task {
        double eps, mu, alpha;
        int index;
    };
    std::vector<Task> tasks;
    int idx = 0;
    for (double e : cfg.eps_list)
        for (double m : cfg.mu_list)
            for (double f : cfg.alpha_fractions) {
                HuntOptions opt;
                const double alpha_max = 0.25 * opt.c1 * cfg.delta * cfg.delta * e * e;
                tasks.push_back({e, m, f * alpha_max, idx++});
            }

    std::mutex gate;
    json entries = json::array();
    parallel_for(tasks.size(), cfg.jobs, [&](std::size_t ti) {
        const Task t = tasks[ti];
        const ReturnMapper& rm = mapper_for(cfg, t.eps, t.mu);
        HuntOptions opt;
        HuntResult hr = hunt_homoclinic(rm, t.alpha, cfg.max_loops, opt);

        const std::string tag = "hunt_" + std::to_string(t.index);
        write_text_file(fs::path(cfg.out_dir) / (tag + ".json"), hunt_manifest_json(hr) + "\n");
        for (std::size_t k = 0; k < hr.iterates.size(); ++k) {
            std::ostringstream os;
            write_curve_csv(os, hr.iterates[k]);
            write_text_file(fs::path(cfg.out_dir) / (tag + "_loop" + std::to_string(k) + ".csv"),
                            os.str());
        }
        std::lock_guard<std::mutex> lock(gate);
        entries.push_back({{"eps", hr.epsilon},
                           {"mu", hr.mu},
                           {"alpha", hr.alpha},
                           {"found", hr.found},
                           {"loop_count", hr.loop_count},
                           {"manifest", tag + ".json"}});
    });

    json manifest;
    manifest["command"] = "hunt";
    manifest["runs"] = entries;
    return manifest;
}

// ---- check -----------------------------------------------------------------------------

inline json cmd_check(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    json checks = json::array();
    bool all_ok = true;
    auto record = [&](const std::string& name, bool ok, const std::string& detail) {
        checks.push_back({{"name", name}, {"pass", ok}, {"detail", detail}});
        all_ok = all_ok && ok;
    };

    const double eps0 = cfg.eps_list.front();

    // 1. normal-form symmetry on the configured family
    {
        const int D = std::max(cfg.n + 1, 4);
        RSeries H = build_family_hamiltonian(cfg, cfg.lambda, D);
        auto Q = QuadraticPart::resonance_02iw(cfg.omega0, D);
        NormalFormResult nf = normal_form_pipeline(H, cfg.n, Q);
        const bool ok = rotational_symmetrize_check(nf.N, Q);
        record("normal-form-rotational-symmetry", ok,
               "residual_norm = " + std::to_string(nf.residual_norm));
    }

    const ReturnMapper& rm = mapper_for(cfg, eps0, 0.0);
    const double eps = rm.model.eps;
    const double band = cfg.delta * cfg.delta * eps * eps;

    // 2. local chart: linear profile of K must be (-1, omega/(2 eps^2))
    {
        const double k1 = rm.chart.K.coeff(mono(1, 0, 0, 0));
        const double k2 = rm.chart.K.coeff(mono(0, 1, 0, 0));
        const double want2 = rm.model.omega / (2.0 * eps * eps);
        const bool ok = std::abs(k1 + 1.0) <= 1e-8 && std::abs(k2 - want2) <= 1e-6 * want2;
        record("chart-linear-profile", ok,
               "K_w1 = " + std::to_string(k1) + ", K_w2 = " + std::to_string(k2));
    }

    // 3. conservation of I2 along the conservative restricted return
    const double alpha_label = 0.15 * 0.25 * 0.03 * band;
    {
        double worst = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double a = (0.04 + 0.015 * k) * band;
            const double phi = 0.7 * k;
            const auto rec = rm.restricted_return_record(alpha_label, std::sqrt(a) * std::cos(phi),
                                                         -std::sqrt(a) * std::sin(phi));
            const double i2_start = HamiltonianModel::I2(rec.start.x);
            const double i2_img = HamiltonianModel::I2(rm.as_scaled(rec.image));
            worst = std::max(worst, std::abs(i2_img - i2_start));
        }
        record("conservative-action-drift", worst <= 1e-10,
               "max |I2 image - I2 start| = " + std::to_string(worst));
    }

    // 4. restricted return preserves area (Jacobian determinant 1)
    {
        double worst = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double a = (0.045 + 0.02 * k) * band;
            const double det = rm.restricted_return_det(alpha_label, std::sqrt(a) * std::cos(0.3 + k),
                                                        -std::sqrt(a) * std::sin(0.3 + k));
            worst = std::max(worst, std::abs(det - 1.0));
        }
        record("area-preservation", worst <= 1e-6, "max |det - 1| = " + std::to_string(worst));
    }

    // 5. twist sign on the trapping band
    {
        TwistOptions topt;
        topt.n_rho = 3;
        topt.n_q = 2;
        TwistProfile tp = to_twist_coordinates(rm, rm, 0.2 * 0.25 * topt.c1 * band, topt);
        KamReport kr = check_kam_hypotheses(tp);
        record("twist-negativity", kr.twist_negative, kr.summary);
    }

    // 6. one-loop homoclinic intersection in the conservative system
    {
        HuntOptions opt;
        const double alpha = 0.15 * 0.25 * opt.c1 * band;
        HuntResult hr = hunt_homoclinic(rm, alpha, cfg.max_loops, opt);
        const bool ok = hr.found && hr.loop_count == 1;
        record("one-loop-intersection", ok,
               "found = " + std::string(hr.found ? "true" : "false") +
                   ", loop_count = " + std::to_string(hr.loop_count));
    }

    // 7. skeleton homoclinic orbit is shadowed by the integrator
    {
        const double c3 = rm.model.c3;
        PhasePoint p{homoclinic_scaled_state(-4.0, c3), Chart::scaled};
        HamiltonianModel skel = rm.model;
        skel.mu = 0.0;
        skel.nu_hat = 0.0;
        double worst = 0.0;
        const int steps = 40;
        for (int k = 1; k <= steps; ++k) {
            const double t = -4.0 + 8.0 * k / steps;
            p = integrate(skel, p, 8.0 / steps);
            const Vec4 want = homoclinic_scaled_state(t, c3);
            for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(p.x[i] - want[i]));
        }
        record("homoclinic-shadowing", worst <= 1e-6,
               "max deviation on [-4,4] = " + std::to_string(worst));
    }

    json manifest;
    manifest["command"] = "check";
    manifest["pass"] = all_ok;
    manifest["checks"] = checks;
    write_text_file(fs::path(cfg.out_dir) / "check_report.json", manifest.dump(2) + "\n");
    if (!all_ok) throw InvariantError("check: at least one invariant failed");
    return manifest;
}

// ---- dispatch --------------------------------------------------------------------------

inline json run_command(const std::string& name, const RunConfig& cfg) {
    if (name == "normalize") return cmd_normalize(cfg);
    if (name == "portrait") return cmd_portrait(cfg);
    if (name == "return-map") return cmd_return_map(cfg);
    if (name == "hunt") return cmd_hunt(cfg);
    if (name == "check") return cmd_check(cfg);
    throw ConfigError("unknown command: " + name);
}

// Full driver used by main(): loads the config, logs the smallness assertions,
// runs the command, writes manifest.json.  Returns the process exit code.
inline int run_cli(const std::string& command, const std::string& config_path,
                   const std::string& out_override, int jobs, unsigned long seed,
                   std::ostream& log_stream) {
    try {
        json j = load_json_file(config_path);
        RunConfig cfg = parse_config(j);
        if (!out_override.empty()) cfg.out_dir = out_override;
        cfg.jobs = std::max(1, jobs);
        cfg.seed = seed;
        const auto log = validate_config(cfg);
        for (const auto& line : log) log_stream << "[config] " << line << "\n";

        json manifest = run_command(command, cfg);
        manifest["config"] = config_path;
        manifest["seed"] = seed;
        manifest["log"] = log;
        std::filesystem::create_directories(cfg.out_dir);
        write_text_file(std::filesystem::path(cfg.out_dir) / "manifest.json",
                        manifest.dump(2) + "\n");
        log_stream << "wrote " << (std::filesystem::path(cfg.out_dir) / "manifest.json").string()
                   << "\n";
        return 0;
    } catch (const ConfigError& e) {
        log_stream << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InvariantError& e) {
        log_stream << "invariant failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        log_stream << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace oiw::cli

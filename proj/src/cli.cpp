#include "tensorspike/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "tensorspike/amp.hpp"
#include "tensorspike/free_energy.hpp"
#include "tensorspike/oracle.hpp"
#include "tensorspike/parallel.hpp"
#include "tensorspike/phase.hpp"
#include "tensorspike/state_evolution.hpp"

namespace tensorspike {

namespace {

using nlohmann::json;

Prior parse_prior(const std::string& text) {
    auto colon = text.find(':');
    std::string kind = text.substr(0, colon);
    std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (kind == "gaussian") return Prior::gaussian(arg.empty() ? 0.0 : std::stod(arg));
    if (kind == "rademacher") return Prior::rademacher();
    if (kind == "bernoulli") return Prior::bernoulli(arg.empty() ? 0.5 : std::stod(arg));
    if (kind == "clusters") return Prior::clusters(arg.empty() ? 2 : std::stoi(arg));
    throw ShapeError("unknown prior '" + text +
                     "' (gaussian:mu | rademacher | bernoulli:rho | clusters:r)");
}

Prior prior_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") return Prior::gaussian(j.value("mu", 0.0));
    if (kind == "rademacher") return Prior::rademacher();
    if (kind == "bernoulli") return Prior::bernoulli(j.value("rho", 0.5));
    if (kind == "clusters") return Prior::clusters(j.value("r", 2));
    throw ShapeError("unknown prior kind '" + kind + "' in config");
}

json prior_to_json(const Prior& prior) {
    switch (prior.kind()) {
        case PriorKind::Gaussian: return {{"kind", "gaussian"}, {"mu", prior.mu()}};
        case PriorKind::Rademacher: return {{"kind", "rademacher"}};
        case PriorKind::Bernoulli: return {{"kind", "bernoulli"}, {"rho", prior.rho()}};
        case PriorKind::Clusters: return {{"kind", "clusters"}, {"r", prior.rank()}};
        case PriorKind::DiscreteScalar: return {{"kind", "discrete"}};
    }
    return {};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

struct CsvWriter {
    std::ofstream out;
    CsvWriter(const std::string& path, const std::string& schema, const json& config)
        : out(path, std::ios::trunc) {
        if (!out) throw FormatError("cannot open " + path + " for writing");
        out << "# schema: " << schema << "\n";
        out << "# config: " << config.dump() << "\n";
        out.precision(17);
    }
};

void write_json_file(const std::string& path, const json& payload) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << payload.dump(2) << "\n";
}

MultiVector read_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!row.empty()) rows.push_back(row);
    }
    if (rows.empty()) throw FormatError(path + ": no data rows");
    MultiVector mv(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != mv.r()) throw FormatError(path + ": ragged rows");
        for (std::size_t c = 0; c < mv.r(); ++c) mv(i, c) = rows[i][c];
    }
    return mv;
}

void write_truth_csv(const std::string& path, const MultiVector& mv, const json& config) {
    CsvWriter w(path, "tensorspike.truth.v1", config);
    for (std::size_t i = 0; i < mv.n(); ++i) {
        for (std::size_t c = 0; c < mv.r(); ++c)
            w.out << (c ? "," : "") << mv(i, c);
        w.out << "\n";
    }
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> out;
    if (count == 1) return {lo};
    for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * i / (count - 1.0));
    return out;
}

std::vector<double> parse_grid(const std::string& text) {
    // "lo:hi:count"
    double lo, hi;
    int count;
    char c1, c2;
    std::stringstream ss(text);
    if (!(ss >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':' || count < 1)
        throw ShapeError("grid must be lo:hi:count, got '" + text + "'");
    return linspace(lo, hi, count);
}

// ---- subcommand payload ------------------------------------------------

struct Options {
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
    std::string format = "csv";
    std::string prior_text = "rademacher";
    Prior prior = Prior::rademacher();
    double delta = 1.0;
    int p = 3;
    std::size_t n = 0;
    std::string integrator = "";
    Integrator integ = Integrator::gauss_hermite();
    json config;  // resolved, embedded in outputs
};

Integrator default_integrator(const Prior& prior) {
    return prior.rank() == 1 ? Integrator::gauss_hermite(127)
                             : Integrator::monte_carlo(100000, 1);
}

int cmd_gen(Options& o, const std::string& truth_out) {
    ModelSpec spec{o.n, o.p, o.prior, Channel::awgn(o.delta)};
    Instance inst = generate_instance(spec, o.seed);
    inst.y.save(o.out);
    if (!truth_out.empty()) write_truth_csv(truth_out, inst.x0, o.config);
    return 0;
}

int cmd_amp(Options& o, const std::string& in, const std::string& init_mode,
            int max_iter, double tol, double damping, const std::string& truth_path) {
    SymmetricTensor y = SymmetricTensor::load(in);
    o.n = y.n();
    o.p = static_cast<int>(y.p());
    MultiVector truth;
    bool have_truth = !truth_path.empty();
    if (have_truth) {
        truth = read_truth_csv(truth_path);
        if (truth.n() != y.n()) throw ShapeError("truth size does not match tensor");
    }
    Channel channel = Channel::awgn(o.delta);
    ScoredTensor sc = score_tensor(std::move(y), channel);

    ModelSpec spec{o.n, o.p, o.prior, channel};
    AmpInit mode;
    if (init_mode == "random")
        mode = AmpInit::Random;
    else if (init_mode == "informative")
        mode = AmpInit::Informative;
    else
        throw ShapeError("init must be random or informative");
    if (mode == AmpInit::Informative && !have_truth)
        throw ShapeError("informative initialization needs --truth");

    AmpState st = amp_init(mode, spec, o.seed, have_truth ? &truth : nullptr);
    AmpOptions opts;
    opts.max_iter = max_iter;
    opts.tol = tol;
    opts.damping = damping;
    AmpResult res = amp_run_scored(sc.s, sc.delta, o.prior, std::move(st), opts,
                                   have_truth ? &truth : nullptr);

    json out;
    out["schema"] = "tensorspike.amp.v1";
    out["config"] = o.config;
    out["spec"] = {{"n", o.n}, {"p", o.p}, {"r", o.prior.rank()},
                   {"prior", prior_to_json(o.prior)}, {"delta", o.delta}};
    out["seed"] = o.seed;
    out["iterations"] = res.iterations;
    out["converged"] = res.converged;
    if (have_truth) {
        out["final_overlap"] = matrix_to_json(res.final_overlap);
        out["mse"] = res.mse;
        out["mse_trace"] = res.mse_trace;
        json traj = json::array();
        for (const auto& m : res.overlap_trajectory) traj.push_back(matrix_to_json(m));
        out["overlap_trajectory"] = traj;
    }
    write_json_file(o.out, out);
    return 0;
}

int cmd_se(Options& o, const std::string& init_mode, int max_iter, double tol) {
    SeInit init = init_mode == "informative" ? SeInit::Informative : SeInit::Eps;
    PriorMoments mom = o.prior.moments();
    Eigen::MatrixXd m = init == SeInit::Informative
                            ? mom.sigma_x
                            : (mom.mean * mom.mean.transpose() + 1e-8 * mom.sigma_x).eval();
    CsvWriter w(o.out, "tensorspike.se.v1", o.config);
    w.out << "iter";
    const int r = o.prior.rank();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) w.out << ",m_" << i << j;
    w.out << ",mse\n";
    auto emit = [&](int t, const Eigen::MatrixXd& mm) {
        w.out << t;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) w.out << "," << mm(i, j);
        w.out << "," << mse_from_overlap(mom.sigma_x, mm) << "\n";
    };
    emit(0, m);
    double step_err = 0;
    for (int t = 1; t <= max_iter; ++t) {
        Eigen::MatrixXd next = se_step(m, o.delta, o.p, o.prior, o.integ, &step_err);
        double diff = (next - m).cwiseAbs().maxCoeff();
        m = next;
        emit(t, m);
        double tol_eff = o.integ.kind == Integrator::Kind::MonteCarlo
                             ? std::max(tol, 3 * step_err)
                             : tol;
        if (diff < tol_eff) break;
    }
    return 0;
}

int cmd_free_energy(Options& o, int m_grid) {
    FreeEnergyCurve c = maximize_phi_rs(o.delta, o.p, o.prior, o.integ, m_grid);
    CsvWriter w(o.out, "tensorspike.free_energy.v1", o.config);
    w.out << "m,phi\n";
    for (auto [m, phi] : c.grid) w.out << m << "," << phi << "\n";
    return 0;
}

int cmd_info_curve(Options& o, double dmin, double dmax, int points) {
    CsvWriter w(o.out, "tensorspike.info_curve.v1", o.config);
    w.out << "delta,mi,mmse,tmmse,m_star\n";
    for (double d : linspace(dmin, dmax, points)) {
        FreeEnergyCurve c = maximize_phi_rs(d, o.p, o.prior, o.integ);
        PriorMoments mom = o.prior.moments();
        double s = 0;
        for (Eigen::Index i = 0; i < mom.sigma_x.rows(); ++i)
            for (Eigen::Index j = 0; j < mom.sigma_x.cols(); ++j)
                s += std::pow(mom.sigma_x(i, j), o.p);
        double mi = s / (2.0 * o.p * d) - c.phi_star;
        double mm = (mom.sigma_x - c.m_star_matrix).trace();
        double tm = o.prior.rank() == 1
                        ? std::pow(mom.sigma_x(0, 0), o.p) - std::pow(c.m_star, o.p)
                        : std::numeric_limits<double>::quiet_NaN();
        w.out << d << "," << mi << "," << mm << "," << tm << "," << c.m_star << "\n";
    }
    return 0;
}

int cmd_thresholds(Options& o, double tol) {
    ThresholdSet ts = compute_thresholds(o.p, o.prior, o.integ, tol);
    json out;
    out["schema"] = "tensorspike.thresholds.v1";
    out["config"] = o.config;
    out["delta_c"] = ts.delta_c;
    out["delta_alg"] = ts.delta_alg;
    out["delta_dyn"] = ts.delta_dyn;
    out["delta_it"] = ts.delta_it;
    out["method"] = ts.method;
    out["tolerance"] = ts.tolerance;
    auto trace = [](const BisectionTrace& t) {
        json j;
        j["steps"] = t.steps;
        if (!t.brackets.empty())
            j["final_bracket"] = {t.brackets.back()[0], t.brackets.back()[1]};
        return j;
    };
    out["trace"] = {{"delta_c", trace(ts.trace_c)},
                    {"delta_alg", trace(ts.trace_alg)},
                    {"delta_dyn", trace(ts.trace_dyn)},
                    {"delta_it", trace(ts.trace_it)}};
    write_json_file(o.out, out);
    return 0;
}

int cmd_phase_diagram(Options& o, const std::string& family, const std::string& grid,
                      const std::string& delta_grid, double tol) {
    std::vector<double> params = parse_grid(grid);
    std::vector<double> deltas = delta_grid.empty() ? std::vector<double>{}
                                                    : parse_grid(delta_grid);
    auto rows = sweep_phase_diagram(family, o.p, params, deltas, o.integ, tol);
    CsvWriter w(o.out, "tensorspike.phase_diagram.v1", o.config);
    w.out << "param,delta,label,delta_c,delta_alg,delta_dyn,delta_it\n";
    for (const auto& row : rows) {
        w.out << row.param << "," << row.delta << "," << row.label << "," << row.delta_c
              << "," << row.delta_alg << "," << row.delta_dyn << "," << row.delta_it
              << "\n";
    }
    return 0;
}

int cmd_table1(Options& o) {
    auto rows = table1();
    CsvWriter w(o.out, "tensorspike.table1.v1", o.config);
    w.out << "prior,p,quantity,computed,paper,rel_dev\n";
    for (const auto& row : rows)
        w.out << row.prior << "," << row.p << "," << row.quantity << "," << row.computed
              << "," << row.paper << "," << row.rel_dev << "\n";
    return 0;
}

int cmd_oracle_nishimori(Options& o, int trials) {
    NishimoriReport rep = nishimori_check(o.p, o.prior, o.delta, o.n, trials, o.seed);
    json out;
    out["schema"] = "tensorspike.oracle.nishimori.v1";
    out["config"] = o.config;
    out["max_discrepancy"] = rep.max_discrepancy;
    out["mmse_mc"] = rep.mmse_mc;
    out["identity_rhs"] = rep.identity_rhs;
    out["identity_stderr"] = rep.identity_stderr;
    json inst = json::array();
    for (const auto& i : rep.instances)
        inst.push_back({{"two_copy", i.two_copy},
                        {"planted_side", i.planted_side},
                        {"discrepancy", i.discrepancy}});
    out["instances"] = inst;
    write_json_file(o.out, out);
    return 0;
}

int cmd_oracle_free_energy(Options& o, int trials) {
    ExactFreeEnergy fe = exact_free_energy(o.n, o.p, o.prior, o.delta, trials, o.seed);
    json out;
    out["schema"] = "tensorspike.oracle.free_energy.v1";
    out["config"] = o.config;
    out["f_n"] = fe.f_n;
    out["stderr"] = fe.stderr;
    out["trials"] = fe.trials;
    write_json_file(o.out, out);
    return 0;
}

// unstable branch between the two stable scalar SE branches (r=1)
double unstable_branch(double m_low, double m_high, double delta, int p,
                       const Prior& prior, const Integrator& integ) {
    if (m_high - m_low < 1e-9) return std::numeric_limits<double>::quiet_NaN();
    auto g = [&](double m) {
        return se_step(Eigen::MatrixXd::Constant(1, 1, m), delta, p, prior, integ)(0, 0) -
               m;
    };
    double lo = m_low + 1e-9, hi = m_high - 1e-9;
    double glo = g(lo), ghi = g(hi);
    if (glo >= 0 || ghi <= 0) return std::numeric_limits<double>::quiet_NaN();
    for (int k = 0; k < 200 && hi - lo > 1e-12; ++k) {
        double mid = 0.5 * (lo + hi);
        if (g(mid) < 0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

int cmd_fig1(Options& o, const std::string& panel, int points) {
    if (panel == "left") {
        const double mu = 0.2;
        Prior prior = Prior::gaussian(mu);
        const int p = 3;
        PriorMoments mom = prior.moments();
        CsvWriter w(o.out, "tensorspike.fig1.left.v1", o.config);
        w.out << "delta,amp_overlap_uninf,amp_overlap_inf,se_uninf,se_inf,se_unstable\n";
        for (double d : linspace(0.02, 0.3, points)) {
            auto f = [&](double m) { return se_gaussian_step(std::max(m, 0.0), d, p, mu); };
            double se_lo = accelerated_fixed_point(f, mu * mu + 1e-8, 0.0,
                                                   mom.sigma_x(0, 0) * (1 + 1e-6));
            double se_hi = accelerated_fixed_point(f, mom.sigma_x(0, 0), 0.0,
                                                   mom.sigma_x(0, 0) * (1 + 1e-6));
            double se_un = unstable_branch(se_lo, se_hi, d, p, prior, o.integ);

            ModelSpec spec{o.n, p, prior, Channel::awgn(d)};
            Instance inst = generate_instance(spec, o.seed);
            ScoredTensor sc = score_tensor(std::move(inst.y), spec.channel);
            AmpOptions opts;
            AmpResult uninf = amp_run_scored(
                sc.s, sc.delta, prior,
                amp_init(AmpInit::Random, spec, o.seed, &inst.x0), opts, &inst.x0);
            AmpResult inf = amp_run_scored(
                sc.s, sc.delta, prior,
                amp_init(AmpInit::Informative, spec, o.seed, &inst.x0), opts, &inst.x0);
            w.out << d << "," << uninf.final_overlap(0, 0) << "," << inf.final_overlap(0, 0)
                  << "," << se_lo << "," << se_hi << "," << se_un << "\n";
        }
        return 0;
    }
    if (panel == "central") {
        const int p = o.p;
        TriCriticalPoint tri = tri_critical(p, "gaussian");
        CsvWriter w(o.out, "tensorspike.fig1.central.v1", o.config);
        w.out << "mu,delta_alg,delta_it,delta_dyn,mu_tri,delta_tri\n";
        for (double mu : linspace(0.01, tri.param * 1.15, points)) {
            double da = NAN, dd = NAN;
            if (mu <= tri.param) {
                GaussianThresholds gt = gaussian_closed_thresholds(mu, p);
                da = gt.delta_alg;
                dd = gt.delta_dyn;
            }
            Prior prior = Prior::gaussian(mu);
            auto pred = [&](double d) {
                FreeEnergyCurve c = maximize_phi_rs(d, p, prior, o.integ);
                return c.m_star > mu * mu + 1e-6;
            };
            double lo = 1e-6, hi = 1.0;
            while (pred(hi)) hi *= 4;
            double dit = NAN;
            {
                double a = lo, b = hi;
                while (b - a > 1e-6 * b) {
                    double mid = 0.5 * (a + b);
                    (pred(mid) ? a : b) = mid;
                }
                dit = 0.5 * (a + b);
            }
            w.out << mu << "," << da << "," << dit << "," << dd << "," << tri.param << ","
                  << tri.delta << "\n";
        }
        return 0;
    }
    if (panel == "right") {
        const int p = o.p;
        TriCriticalPoint tri = tri_critical(p, "bernoulli", true);
        CsvWriter w(o.out, "tensorspike.fig1.right.v1", o.config);
        w.out << "rho,delta_alg,delta_it,delta_dyn,delta_alg_rescaled,delta_it_rescaled,"
                 "delta_dyn_rescaled,rho_tri,delta_tri_rescaled\n";
        for (double rho : linspace(0.01, tri.param * 1.15, points)) {
            Prior prior = Prior::bernoulli(rho);
            ThresholdSet ts = compute_thresholds(p, prior, o.integ, 1e-5);
            double r4 = std::pow(rho, 4);
            w.out << rho << "," << ts.delta_alg << "," << ts.delta_it << "," << ts.delta_dyn
                  << "," << ts.delta_alg / r4 << "," << ts.delta_it / r4 << ","
                  << ts.delta_dyn / r4 << "," << tri.param << ","
                  << tri.delta / std::pow(tri.param, 4) << "\n";
        }
        return 0;
    }
    throw ShapeError("panel must be left, central or right");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    // --config file provides defaults; explicit flags take precedence
    json cfg = json::object();
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) {
                std::cerr << "cannot open config " << argv[i + 1] << "\n";
                return 2;
            }
            try {
                in >> cfg;
            } catch (const std::exception& e) {
                std::cerr << "bad config: " << e.what() << "\n";
                return 2;
            }
        }
    }
    auto jget = [&cfg](const std::string& key, auto fallback) {
        using T = decltype(fallback);
        return cfg.value(key, T(fallback));
    };

    Options o;
    o.seed = jget("seed", std::uint64_t{1});
    o.threads = jget("threads", 0);
    o.format = jget("format", std::string("csv"));
    if (cfg.contains("prior")) o.prior_text = "";  // taken from config below
    o.delta = cfg.contains("channel") ? cfg["channel"].value("delta", 1.0)
                                      : jget("delta", 1.0);
    o.p = jget("p", 3);
    o.n = jget("n", std::size_t{0});

    CLI::App app{"Bayes-optimal inference for the spiked tensor model"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config supplying defaults");

    std::string prior_text = "rademacher";
    std::string integrator_text = jget("integrator", std::string(""));

    auto add_common = [&](CLI::App* sub, bool needs_prior = true) {
        sub->add_option("--seed", o.seed, "master seed")->capture_default_str();
        sub->add_option("--threads", o.threads, "worker cap (0 = all cores)");
        sub->add_option("--out", o.out, "output path")->required();
        sub->add_option("--format", o.format, "csv|json");
        sub->add_option("--config", config_path, "JSON config supplying defaults");
        if (needs_prior)
            sub->add_option("--prior", prior_text,
                            "gaussian:mu | rademacher | bernoulli:rho | clusters:r");
        sub->add_option("--integrator", integrator_text, "gh:nodes | mc:samples[:seed]");
    };

    // gen
    auto* gen = app.add_subcommand("gen", "generate a planted instance");
    std::string truth_out;
    add_common(gen);
    gen->add_option("--n", o.n, "dimension")->required();
    gen->add_option("--p", o.p, "tensor order");
    gen->add_option("--delta", o.delta, "AWGN noise variance");
    gen->add_option("--truth-out", truth_out, "write the planted signal as CSV");

    // amp
    auto* ampc = app.add_subcommand("amp", "run AMP on an observed tensor");
    std::string amp_in, amp_init_mode = "random", amp_truth;
    int amp_max_iter = 1000;
    double amp_tol = 1e-8, amp_damping = 0.0;
    add_common(ampc);
    ampc->add_option("--in", amp_in, "input .tns tensor")->required();
    ampc->add_option("--delta", o.delta, "AWGN noise variance");
    ampc->add_option("--init", amp_init_mode, "random|informative");
    ampc->add_option("--max-iter", amp_max_iter, "iteration cap");
    ampc->add_option("--tol", amp_tol, "convergence tolerance on (1/N)||dx||^2");
    ampc->add_option("--damping", amp_damping, "damping in [0,1)");
    ampc->add_option("--truth", amp_truth, "planted signal CSV (enables overlap/MSE)");

    // se
    auto* sec = app.add_subcommand("se", "state evolution trajectory");
    std::string se_init = "eps";
    int se_max_iter = 10000;
    double se_tol = 1e-10;
    add_common(sec);
    sec->add_option("--p", o.p, "tensor order");
    sec->add_option("--delta", o.delta, "noise level");
    sec->add_option("--init", se_init, "eps|informative");
    sec->add_option("--max-iter", se_max_iter, "iteration cap");
    sec->add_option("--tol", se_tol, "max-abs entry tolerance");

    // free-energy
    auto* fec = app.add_subcommand("free-energy", "phi_RS curve over the overlap");
    int m_grid = 1000;
    add_common(fec);
    fec->add_option("--p", o.p, "tensor order");
    fec->add_option("--delta", o.delta, "noise level");
    fec->add_option("--m-grid", m_grid, "grid points");

    // info-curve
    auto* ic = app.add_subcommand("info-curve", "mutual information / MMSE vs delta");
    double ic_dmin = 0.01, ic_dmax = 1.0;
    int ic_points = 50;
    add_common(ic);
    ic->add_option("--p", o.p, "tensor order");
    ic->add_option("--delta-min", ic_dmin, "grid start")->required();
    ic->add_option("--delta-max", ic_dmax, "grid end")->required();
    ic->add_option("--points", ic_points, "grid size");

    // thresholds
    auto* th = app.add_subcommand("thresholds", "compute Delta_c/Alg/Dyn/IT");
    double th_tol = 1e-6;
    add_common(th);
    th->add_option("--p", o.p, "tensor order");
    th->add_option("--tol", th_tol, "relative bisection tolerance");

    // phase-diagram
    auto* pd = app.add_subcommand("phase-diagram", "threshold sweep over a prior family");
    std::string pd_family = "gaussian", pd_grid, pd_delta_grid;
    double pd_tol = 1e-5;
    add_common(pd, false);
    pd->add_option("--family", pd_family, "gaussian|bernoulli")->required();
    pd->add_option("--p", o.p, "tensor order");
    pd->add_option("--grid", pd_grid, "parameter grid lo:hi:count")->required();
    pd->add_option("--delta-grid", pd_delta_grid, "classification grid lo:hi:count");
    pd->add_option("--tol", pd_tol, "relative bisection tolerance");

    // table1
    auto* t1 = app.add_subcommand("table1", "recompute the threshold table");
    add_common(t1, false);

    // oracle
    auto* orc = app.add_subcommand("oracle", "exact small-N reference computations");
    orc->require_subcommand(1);
    auto* orc_nish = orc->add_subcommand("nishimori", "per-instance Nishimori identity");
    auto* orc_fe = orc->add_subcommand("free-energy", "exact finite-N free energy");
    int orc_trials = 20;
    add_common(orc_nish);
    orc_nish->add_option("--n", o.n, "system size")->required();
    orc_nish->add_option("--p", o.p, "tensor order");
    orc_nish->add_option("--delta", o.delta, "noise level");
    orc_nish->add_option("--trials", orc_trials, "instances");
    add_common(orc_fe);
    orc_fe->add_option("--n", o.n, "system size")->required();
    orc_fe->add_option("--p", o.p, "tensor order");
    orc_fe->add_option("--delta", o.delta, "noise level");
    orc_fe->add_option("--trials", orc_trials, "Monte Carlo trials");

    // fig1
    auto* f1 = app.add_subcommand("fig1", "reproduce figure-panel data");
    std::string f1_panel = "left";
    int f1_points = 10;
    add_common(f1, false);
    f1->add_option("--panel", f1_panel, "left|central|right")->required();
    f1->add_option("--n", o.n, "AMP system size (left panel)");
    f1->add_option("--p", o.p, "tensor order");
    f1->add_option("--points", f1_points, "grid points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        bool prior_flag = false, integ_flag = false;
        for (auto* sub : app.get_subcommands()) {
            auto has = [](CLI::App* s, const char* name) {
                auto* opt = s->get_option_no_throw(name);
                return opt && opt->count() > 0;
            };
            prior_flag |= has(sub, "--prior");
            integ_flag |= has(sub, "--integrator");
            for (auto* nested : sub->get_subcommands()) {
                prior_flag |= has(nested, "--prior");
                integ_flag |= has(nested, "--integrator");
            }
        }
        if (cfg.contains("prior") && !prior_flag)
            o.prior = prior_from_json(cfg["prior"]);
        else
            o.prior = parse_prior(prior_text);
        o.integ = integrator_text.empty() ? default_integrator(o.prior)
                                          : Integrator::parse(integrator_text);
        // an explicit mc:N:seed keeps its own stream seed
        if (std::count(integrator_text.begin(), integrator_text.end(), ':') < 2)
            o.integ.seed = o.seed;
        (void)integ_flag;
        set_max_threads(o.threads);

        o.config = {{"seed", o.seed},
                    {"threads", o.threads},
                    {"prior", prior_to_json(o.prior)},
                    {"integrator", o.integ.describe()},
                    {"p", o.p}};

        if (gen->parsed()) {
            o.config["command"] = "gen";
            o.config["n"] = o.n;
            o.config["channel"] = {{"kind", "awgn"}, {"delta", o.delta}};
            return cmd_gen(o, truth_out);
        }
        if (ampc->parsed()) {
            o.config["command"] = "amp";
            o.config["channel"] = {{"kind", "awgn"}, {"delta", o.delta}};
            o.config["init"] = amp_init_mode;
            o.config["max_iter"] = amp_max_iter;
            o.config["tol"] = amp_tol;
            o.config["damping"] = amp_damping;
            return cmd_amp(o, amp_in, amp_init_mode, amp_max_iter, amp_tol, amp_damping,
                           amp_truth);
        }
        if (sec->parsed()) {
            o.config["command"] = "se";
            o.config["delta"] = o.delta;
            o.config["init"] = se_init;
            return cmd_se(o, se_init, se_max_iter, se_tol);
        }
        if (fec->parsed()) {
            o.config["command"] = "free-energy";
            o.config["delta"] = o.delta;
            o.config["m_grid"] = m_grid;
            return cmd_free_energy(o, m_grid);
        }
        if (ic->parsed()) {
            o.config["command"] = "info-curve";
            o.config["delta_min"] = ic_dmin;
            o.config["delta_max"] = ic_dmax;
            o.config["points"] = ic_points;
            return cmd_info_curve(o, ic_dmin, ic_dmax, ic_points);
        }
        if (th->parsed()) {
            o.config["command"] = "thresholds";
            o.config["tol"] = th_tol;
            return cmd_thresholds(o, th_tol);
        }
        if (pd->parsed()) {
            o.config["command"] = "phase-diagram";
            o.config["family"] = pd_family;
            o.config["grid"] = pd_grid;
            o.config["tol"] = pd_tol;
            return cmd_phase_diagram(o, pd_family, pd_grid, pd_delta_grid, pd_tol);
        }
        if (t1->parsed()) {
            o.config["command"] = "table1";
            return cmd_table1(o);
        }
        if (orc->parsed()) {
            o.config["n"] = o.n;
            o.config["delta"] = o.delta;
            o.config["trials"] = orc_trials;
            if (orc_nish->parsed()) {
                o.config["command"] = "oracle nishimori";
                return cmd_oracle_nishimori(o, orc_trials);
            }
            o.config["command"] = "oracle free-energy";
            return cmd_oracle_free_energy(o, orc_trials);
        }
        if (f1->parsed()) {
            o.config["command"] = "fig1";
            o.config["panel"] = f1_panel;
            if (o.n == 0) o.n = 1000;
            o.config["n"] = o.n;
            o.config["points"] = f1_points;
            return cmd_fig1(o, f1_panel, f1_points);
        }
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IndexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace tensorspike

#include "tensorspike/phase.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace tensorspike {

std::string to_string(PhaseLabel label) {
    switch (label) {
        case PhaseLabel::Easy: return "easy";
        case PhaseLabel::Hard: return "hard";
        case PhaseLabel::ImpossibleToImprove: return "impossible-to-improve";
    }
    return "?";
}

namespace {

constexpr double kIndicatorTol = 1e-6;  // calibrates "strictly greater"
constexpr double kDeltaFloor = 1e-8;

Integrator cluster_integrator(const Integrator& integ, int r) {
    if (integ.kind != Integrator::Kind::GaussHermite) return integ;
    int cap = r <= 2 ? 40 : (r == 3 ? 24 : 16);
    Integrator out = integ;
    out.nodes = std::min(out.nodes, cap);
    return out;
}

// Traces of the relevant overlaps at one delta. For clusters everything runs
// on the b-ansatz line; the uninformative branch is resolved through the
// measured growth rate at b=0 (iterating from 1e-8 stalls near criticality).
struct BranchTraces {
    double m_eps = 0;
    double m_inf = 0;
    double m_star = 0;
    double m_random = 0;  // Tr(mean mean^T)
};

// SE-only branch traces (no potential maximization).
BranchTraces branches_se(double delta, int p, const Prior& prior,
                         const Integrator& integ0) {
    PriorMoments mom = prior.moments();
    BranchTraces out;
    out.m_random = (mom.mean * mom.mean.transpose()).trace();
    if (prior.kind() == PriorKind::Clusters) {
        const int r = prior.rank();
        Integrator integ = cluster_integrator(integ0, r);
        auto tr = [&](double b) { return b + (1.0 - b) / r; };
        auto f = [&](double b) {
            return cluster_se_step(std::clamp(b, 0.0, 1.0), delta, p, r, integ);
        };
        double g = cluster_growth_rate(delta, p, r, integ);
        double b_eps = g > 1.0 ? accelerated_fixed_point(f, 1e-3, 0.0, 1.0) : 0.0;
        out.m_eps = tr(b_eps);
        out.m_inf = tr(accelerated_fixed_point(f, 1.0, 0.0, 1.0));
        out.m_star = 0;
        return out;
    }
    double sig = mom.sigma_x(0, 0);
    double hi = sig * (1.0 + 1e-6);
    auto f = [&](double m) {
        return se_step(Eigen::MatrixXd::Constant(1, 1, std::max(m, 0.0)), delta, p,
                       prior, integ0)(0, 0);
    };
    double eps0 = mom.mean(0) * mom.mean(0) + 1e-8 * sig;
    out.m_eps = accelerated_fixed_point(f, eps0, 0.0, hi);
    out.m_inf = accelerated_fixed_point(f, sig, 0.0, hi);
    out.m_star = 0;
    return out;
}

BranchTraces branches(double delta, int p, const Prior& prior, const Integrator& integ0) {
    BranchTraces out = branches_se(delta, p, prior, integ0);
    if (prior.kind() == PriorKind::Clusters) {
        const int r = prior.rank();
        Integrator integ = cluster_integrator(integ0, r);
        FreeEnergyCurve c = maximize_phi_rs(delta, p, prior, integ, 400);
        out.m_star = c.m_star + (1.0 - c.m_star) / r;
        return out;
    }
    FreeEnergyCurve c = maximize_phi_rs(delta, p, prior, integ0);
    out.m_star = c.m_star_matrix.trace();
    return out;
}

template <typename Pred>
double bisect(double lo, double hi, double rel_tol, Pred&& pred_true_low,
              BisectionTrace* trace) {
    bool plo = pred_true_low(lo);
    bool phi = pred_true_low(hi);
    if (!plo || phi)
        throw BracketError("bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "] does not straddle the transition");
    while (hi - lo > rel_tol * hi) {
        double mid = 0.5 * (lo + hi);
        if (pred_true_low(mid))
            lo = mid;
        else
            hi = mid;
        if (trace) {
            trace->brackets.push_back({lo, hi});
            ++trace->steps;
        }
    }
    return 0.5 * (lo + hi);
}

// expand [lo,hi] geometrically until pred(lo) && !pred(hi)
template <typename Pred>
std::pair<double, double> expand_bracket(double lo, double hi, Pred&& pred) {
    for (int k = 0; k < 60 && !pred(lo); ++k) lo *= 0.25;
    for (int k = 0; k < 60 && pred(hi); ++k) hi *= 4.0;
    return {lo, hi};
}

}  // namespace

PhaseLabel classify(double delta, int p, const Prior& prior, const Integrator& integ) {
    BranchTraces b = branches(delta, p, prior, integ);
    if (b.m_star <= b.m_random + kIndicatorTol) return PhaseLabel::ImpossibleToImprove;
    if (b.m_star > b.m_eps + kIndicatorTol) return PhaseLabel::Hard;
    return PhaseLabel::Easy;
}

// The transition of m*(delta) away from the uninformative branch. For
// zero-mean priors this is where m* leaves E[x]^2; in general it is the upper
// edge of the hard window (where the high branch stops winning the
// potential), which is the same point whenever both exist.
double find_delta_it(int p, const Prior& prior, const Integrator& integ,
                     std::pair<double, double> bracket, double rel_tol,
                     BisectionTrace* trace) {
    auto pred = [&](double d) {
        BranchTraces b = branches(d, p, prior, integ);
        return b.m_star > b.m_eps + kIndicatorTol ||
               b.m_star > b.m_random + kIndicatorTol;
    };
    if (prior.zero_mean() || prior.kind() == PriorKind::Clusters) {
        // m_eps collapses to the random-guess point above the transition,
        // so the plain spec indicator is crisp
        auto pred_zero = [&](double d) {
            BranchTraces b = branches(d, p, prior, integ);
            return b.m_star > b.m_random + kIndicatorTol;
        };
        return bisect(bracket.first, bracket.second, rel_tol, pred_zero, trace);
    }
    return bisect(bracket.first, bracket.second, rel_tol, pred, trace);
}

double find_delta_c(int p, const Prior& prior, const Integrator& integ,
                    std::pair<double, double> bracket, double rel_tol,
                    BisectionTrace* trace) {
    if (prior.kind() == PriorKind::Clusters) {
        const int r = prior.rank();
        Integrator ci = cluster_integrator(integ, r);
        auto pred = [&](double d) { return cluster_growth_rate(d, p, r, ci) > 1.0; };
        return bisect(bracket.first, bracket.second, rel_tol, pred, trace);
    }
    auto pred = [&](double d) {
        BranchTraces b = branches(d, p, prior, integ);
        return b.m_eps > b.m_random + kIndicatorTol;
    };
    if (!pred(std::max(bracket.first, kDeltaFloor))) return 0.0;
    return bisect(bracket.first, bracket.second, rel_tol, pred, trace);
}

double find_delta_alg(int p, const Prior& prior, const Integrator& integ,
                      std::pair<double, double> bracket, double rel_tol,
                      BisectionTrace* trace) {
    auto hard = [&](double d) {
        BranchTraces b = branches(d, p, prior, integ);
        return b.m_star > b.m_eps + kIndicatorTol;
    };
    if (hard(std::max(bracket.first, kDeltaFloor))) return 0.0;
    auto pred = [&](double d) { return !hard(d); };  // easy on the low side
    return bisect(bracket.first, bracket.second, rel_tol, pred, trace);
}

double find_delta_dyn(int p, const Prior& prior, const Integrator& integ,
                      std::pair<double, double> bracket, double rel_tol,
                      BisectionTrace* trace) {
    auto pred = [&](double d) {
        BranchTraces b = branches(d, p, prior, integ);
        return b.m_inf > b.m_eps + kIndicatorTol;
    };
    return bisect(bracket.first, bracket.second, rel_tol, pred, trace);
}

ThresholdSet compute_thresholds(int p, const Prior& prior, const Integrator& integ,
                                double rel_tol) {
    ThresholdSet ts;
    ts.tolerance = rel_tol;

    auto traces_at = [&](double d) { return branches(d, p, prior, integ); };
    auto hard = [&](double d) {
        BranchTraces b = traces_at(d);
        return b.m_star > b.m_eps + kIndicatorTol;
    };
    auto bistable = [&](double d) {
        BranchTraces b = branches_se(d, p, prior, integ);
        return b.m_inf > b.m_eps + kIndicatorTol;
    };

    // delta_c: instability of the uninformative branch
    if (prior.kind() == PriorKind::Clusters) {
        const int r = prior.rank();
        Integrator ci = cluster_integrator(integ, r);
        auto pred = [&](double d) { return cluster_growth_rate(d, p, r, ci) > 1.0; };
        auto [lo, hi] = expand_bracket(1e-6, 10.0, pred);
        ts.delta_c = bisect(lo, hi, rel_tol, pred, &ts.trace_c);
    } else {
        auto pred = [&](double d) {
            BranchTraces b = traces_at(d);
            return b.m_eps > b.m_random + kIndicatorTol;
        };
        if (!pred(kDeltaFloor)) {
            ts.delta_c = 0.0;
        } else {
            auto [lo, hi] = expand_bracket(1e-6, 10.0, pred);
            ts.delta_c = bisect(lo, hi, rel_tol, pred, &ts.trace_c);
        }
    }

    // locate the bistable window (lower spinodal, delta_dyn)
    bool have_window = false;
    double win_lo = 0, win_in = 0;  // a bracket point below and one inside
    if (prior.zero_mean() && hard(kDeltaFloor)) {
        // the window starts at 0; delta_alg is reported as 0 at the floor
        have_window = true;
        win_lo = kDeltaFloor;
        win_in = kDeltaFloor * 2;
    } else if (prior.kind() == PriorKind::Clusters) {
        double probe = ts.delta_c * 1.02;
        if (bistable(probe)) {
            have_window = true;
            win_in = probe;
        } else if (first_order_discriminant(p, prior.rank()).value < 0 && p >= 4) {
            // two-cluster family: a separate discontinuity can open below
            // delta_c for large p
            for (double d = ts.delta_c * 0.97; d > ts.delta_c * 1e-3; d *= 0.97) {
                if (bistable(d)) {
                    have_window = true;
                    win_in = d;
                    break;
                }
            }
        }
        if (have_window) {
            win_lo = win_in;
            while (win_lo > 1e-12 && bistable(win_lo)) win_lo *= 0.9;
        }
    } else {
        double prev = kDeltaFloor;
        for (double d = 1e-6; d < 100.0; d *= 1.05) {
            if (bistable(d)) {
                have_window = true;
                win_lo = prev;
                win_in = d;
                break;
            }
            prev = d;
        }
        if (have_window && win_lo <= kDeltaFloor) {
            // the window opened below the scan start: walk down to bracket it
            win_lo = win_in;
            while (win_lo > 1e-300 && bistable(win_lo)) win_lo *= 0.25;
        }
    }

    if (!have_window) {
        // a single continuous branch: every transition sits at delta_c
        ts.delta_alg = ts.delta_c;
        ts.delta_it = ts.delta_c;
        ts.delta_dyn = ts.delta_c;
        return ts;
    }

    // delta_dyn: upper edge of bistability
    {
        double hi = std::max(4 * win_in, 1.0);
        for (int k = 0; k < 60 && bistable(hi); ++k) hi *= 4.0;
        ts.delta_dyn = bisect(win_in, hi, rel_tol, bistable, &ts.trace_dyn);
    }

    // delta_alg: lower spinodal when a hard phase exists
    double probe = 0;  // a point just inside the hard window, if any
    if (win_lo <= kDeltaFloor) {
        ts.delta_alg = 0.0;
        probe = win_in;
    } else {
        auto pred = [&](double d) { return !bistable(d); };
        double edge = bisect(win_lo, win_in, rel_tol, pred, &ts.trace_alg);
        probe = edge * (1.0 + 3 * rel_tol);
        if (!bistable(probe)) probe = win_in;
        ts.delta_alg = edge;
    }
    bool hard_inside = hard(probe) || hard(std::sqrt(probe * ts.delta_dyn));
    if (!hard_inside) ts.delta_alg = ts.delta_c;  // bistable but never hard

    // delta_it: upper edge of the hard window
    if (hard_inside) {
        double lo = hard(probe) ? probe : std::sqrt(probe * ts.delta_dyn);
        double hi = ts.delta_dyn * (1.0 + 10 * rel_tol);
        if (hard(hi))
            ts.delta_it = hi;  // the potential crossing rides the spinodal
        else
            ts.delta_it = bisect(lo, hi, rel_tol,
                                 [&](double d) { return hard(d); }, &ts.trace_it);
    } else {
        ts.delta_it = ts.delta_c;
    }
    return ts;
}

// Spinodals of M' = (delta mu^2 + M^{p-1}(1+mu^2)) / (delta + M^{p-1}).
// With x = M^{p-1}/delta the fixed-point curve is M(x) = mu^2 + x/(1+x),
// delta(x) = M(x)^{p-1}/x, and d delta/dx = 0 at the roots of
//   (1+mu^2) x^2 - (p-2-2mu^2) x + mu^2 = 0.
// At mu = 0 this reduces to the x^{p-2}/(1+x)^{p-1} form.
GaussianThresholds gaussian_closed_thresholds(double mu, int p) {
    double disc = (p - 2.0) * (p - 2.0) - 4.0 * mu * mu * (p - 1.0);
    if (disc < -1e-12 * p * p)
        throw NumericError("no spinodal: mu lies above the tri-critical point");
    disc = std::max(disc, 0.0);
    GaussianThresholds out;
    double den = 2.0 * (1.0 + mu * mu);
    out.x_alg = (p - 2.0 - 2.0 * mu * mu - std::sqrt(disc)) / den;
    out.x_dyn = (p - 2.0 - 2.0 * mu * mu + std::sqrt(disc)) / den;
    auto delta_of = [&](double x) {
        if (x <= 0) return p == 2 ? 1.0 : 0.0;
        return std::pow(mu * mu + x / (1.0 + x), p - 1.0) / x;
    };
    out.delta_alg = delta_of(out.x_alg);
    out.delta_dyn = delta_of(out.x_dyn);
    return out;
}

namespace {

// Cusp of the scalar SE map: solves f(m)=m, f'(m)=1, f''(m)=0 in
// (m, delta, theta) by damped Newton with finite-difference derivatives.
struct CuspResult {
    double m = 0, delta = 0, theta = 0;
    bool converged = false;
};

CuspResult find_cusp(const std::function<double(double, double, double)>& f, double m0,
                     double d0, double t0) {
    auto residual = [&](double m, double d, double th, Eigen::Vector3d& out) {
        double hm = 1e-4 * std::max(1.0, std::fabs(m));
        double f0 = f(m, d, th);
        double fp = f(m + hm, d, th), fm = f(m - hm, d, th);
        out[0] = f0 - m;
        out[1] = (fp - fm) / (2 * hm) - 1.0;
        out[2] = (fp - 2 * f0 + fm) / (hm * hm);
    };
    Eigen::Vector3d v(m0, d0, t0), r0, r1;
    for (int it = 0; it < 80; ++it) {
        residual(v[0], v[1], v[2], r0);
        double norm = r0.cwiseAbs().maxCoeff();
        if (norm < 1e-11) return {v[0], v[1], v[2], true};
        Eigen::Matrix3d jac;
        for (int c = 0; c < 3; ++c) {
            double h = 1e-6 * std::max(1.0, std::fabs(v[c]));
            Eigen::Vector3d vp = v;
            vp[c] += h;
            residual(vp[0], vp[1], vp[2], r1);
            jac.col(c) = (r1 - r0) / h;
        }
        Eigen::Vector3d step = jac.fullPivLu().solve(r0);
        double scale = 1.0;
        // keep delta and theta positive
        for (int c = 1; c < 3; ++c)
            if (step[c] > 0 && v[c] - scale * step[c] <= 0)
                scale = std::min(scale, 0.5 * v[c] / step[c]);
        v -= scale * step;
        if (v[0] < 0) v[0] = 1e-6;
    }
    return {v[0], v[1], v[2], false};
}

double bernoulli_se_scalar(double m, double delta, int p, double rho,
                           const Integrator& integ) {
    Prior prior = Prior::bernoulli(rho);
    Eigen::MatrixXd mm = Eigen::MatrixXd::Constant(1, 1, std::max(m, 0.0));
    return se_step(mm, delta, p, prior, integ)(0, 0);
}

}  // namespace

TriCriticalPoint tri_critical(int p, const std::string& family, bool numeric) {
    if (p < 3) throw ShapeError("tri-critical point needs p >= 3");
    if (family == "gaussian" && !numeric) {
        // cusp of the spinodal pair: double root x = (p-2)/p, overlap
        // m = (p-2) p / (4 (p-1)), delta = m^{p-1}/x
        TriCriticalPoint out;
        out.kind = "gaussian_closed_form";
        out.param = (p - 2.0) / (2.0 * std::sqrt(p - 1.0));
        double x = (p - 2.0) / p;
        double m = (p - 2.0) * p / (4.0 * (p - 1.0));
        out.delta = std::pow(m, p - 1.0) / x;
        return out;
    }

    std::function<double(double, double, double)> f;
    double theta0, m0, d0;
    Integrator integ = Integrator::gauss_hermite(127);
    if (family == "gaussian") {
        f = [p](double m, double d, double mu) {
            return se_gaussian_step(std::max(m, 0.0), d, p, mu);
        };
        TriCriticalPoint closed = tri_critical(p, "gaussian", false);
        theta0 = closed.param * 0.97;
        d0 = closed.delta * 0.98;
        m0 = (p - 2.0) * p / (4.0 * (p - 1.0));
    } else if (family == "bernoulli") {
        f = [p, &integ](double m, double d, double rho) {
            return bernoulli_se_scalar(m, d, p, rho, integ);
        };
        // coarse scan per the hard-window criterion, then cusp refinement
        double rho_seed = 0.16, delta_seed = 0, m_seed = 0;
        for (double rho = 0.16; rho < 0.26; rho += 0.002) {
            Prior prior = Prior::bernoulli(rho);
            ThresholdSet ts = compute_thresholds(p, prior, integ, 1e-5);
            double gap = ts.delta_it > 0 ? (ts.delta_it - ts.delta_alg) / ts.delta_it : 0;
            rho_seed = rho;
            delta_seed = 0.5 * (ts.delta_alg + ts.delta_dyn);
            if (gap < 1e-3) break;
        }
        // seed m at the flattest point of the map
        double best = INFINITY;
        for (int i = 1; i < 200; ++i) {
            double m = rho_seed * i / 200.0;
            double h = 1e-5;
            double der =
                (f(m + h, delta_seed, rho_seed) - f(m - h, delta_seed, rho_seed)) / (2 * h);
            if (std::fabs(der - 1.0) < best) {
                best = std::fabs(der - 1.0);
                m_seed = m;
            }
        }
        theta0 = rho_seed;
        d0 = delta_seed;
        m0 = m_seed;
    } else {
        throw ShapeError("tri-critical families: gaussian, bernoulli");
    }

    CuspResult cusp = find_cusp(f, m0, d0, theta0);
    if (!cusp.converged)
        throw NumericError("tri-critical cusp search did not converge");
    TriCriticalPoint out;
    out.kind = "numeric";
    out.param = cusp.theta;
    out.delta = cusp.delta;
    return out;
}

FirstOrderReport first_order_discriminant(int p, int r) {
    if (r < 2) throw ShapeError("discriminant needs r >= 2");
    FirstOrderReport rep;
    rep.value = p * r - 2 * p - r;
    rep.label = rep.value > 0 ? "first_order" : (rep.value < 0 ? "second_order" : "marginal");
    return rep;
}

std::vector<SweepRow> sweep_phase_diagram(const std::string& family, int p,
                                          const std::vector<double>& params,
                                          const std::vector<double>& deltas,
                                          const Integrator& integ, double rel_tol) {
    if (params.empty()) throw ShapeError("parameter grid is empty");
    auto make_prior = [&](double v) {
        if (family == "gaussian") return Prior::gaussian(v);
        if (family == "bernoulli") return Prior::bernoulli(v);
        throw ShapeError("sweep families: gaussian, bernoulli");
    };
    std::vector<SweepRow> rows;
    for (double v : params) {
        Prior prior = make_prior(v);
        ThresholdSet ts = compute_thresholds(p, prior, integ, rel_tol);
        SweepRow base;
        base.param = v;
        base.delta_c = ts.delta_c;
        base.delta_alg = ts.delta_alg;
        base.delta_dyn = ts.delta_dyn;
        base.delta_it = ts.delta_it;
        if (deltas.empty()) {
            base.delta = std::numeric_limits<double>::quiet_NaN();
            rows.push_back(base);
            continue;
        }
        for (double d : deltas) {
            SweepRow row = base;
            row.delta = d;
            row.label = to_string(classify(d, p, prior, integ));
            rows.push_back(row);
        }
    }
    return rows;
}

namespace {

void push_row(std::vector<Table1Row>& rows, const std::string& prior, int p,
              const std::string& quantity, double computed, double paper) {
    Table1Row row;
    row.prior = prior;
    row.p = p;
    row.quantity = quantity;
    row.computed = computed;
    row.paper = paper;
    row.rel_dev = std::isnan(paper) ? NAN : std::fabs(computed - paper) / std::fabs(paper);
    rows.push_back(row);
}

}  // namespace

std::vector<Table1Row> table1() {
    const std::vector<int> ps = {2, 3, 4, 5, 10};
    const Integrator gh = Integrator::gauss_hermite(127);
    std::vector<Table1Row> rows;

    const std::vector<double> gauss_it = {2 * std::log(2.0), 0.754, 0.701, 0.685, 0.677};
    const std::vector<double> gauss_alg = {1, 0, 0, 0, 0};
    const std::vector<double> rad_it = {1.0, 0.2828, 0.1902, 0.1473, 0.07216};
    const std::vector<double> rad_alg = {1, 0, 0, 0, 0};
    const std::vector<double> bern_it = {NAN, 0.577, 0.398, 0.311, 0.154};
    const std::vector<double> bern_alg = {NAN, 3.738, 6.017, 8.251, 19.30};
    const std::vector<double> clus_ratio = {1, 1, 1.18, 1.62, 6.59};
    const std::vector<double> clus_alg = {1, 1, 1, 1, 1};

    for (std::size_t i = 0; i < ps.size(); ++i) {
        int p = ps[i];
        {
            Prior prior = Prior::gaussian(0.0);
            ThresholdSet ts = compute_thresholds(p, prior, gh);
            push_row(rows, "gaussian", p, "delta_it*p*log(p)",
                     ts.delta_it * p * std::log(static_cast<double>(p)), gauss_it[i]);
            push_row(rows, "gaussian", p, "delta_alg", ts.delta_alg, gauss_alg[i]);
        }
        {
            Prior prior = Prior::rademacher();
            ThresholdSet ts = compute_thresholds(p, prior, gh);
            push_row(rows, "rademacher", p, "delta_it", ts.delta_it, rad_it[i]);
            push_row(rows, "rademacher", p, "delta_alg", ts.delta_alg, rad_alg[i]);
        }
        {
            const double rho = 0.1;
            Prior prior = Prior::bernoulli(rho);
            ThresholdSet ts = compute_thresholds(p, prior, gh);
            push_row(rows, "bernoulli(0.1)", p, "delta_it*rho^-p",
                     ts.delta_it * std::pow(rho, -p), bern_it[i]);
            push_row(rows, "bernoulli(0.1)", p, "delta_alg*rho^(2-2p)",
                     ts.delta_alg * std::pow(rho, 2 - 2 * p), bern_alg[i]);
        }
        {
            const int r = 3;
            Prior prior = Prior::clusters(r);
            ThresholdSet ts = compute_thresholds(p, prior, gh);
            push_row(rows, "clusters(3)", p, "delta_it/delta_alg",
                     ts.delta_it / ts.delta_alg, clus_ratio[i]);
            push_row(rows, "clusters(3)", p, "delta_alg*r^(2p-2)/(p-1)",
                     ts.delta_alg * std::pow(static_cast<double>(r), 2 * p - 2) / (p - 1),
                     clus_alg[i]);
        }
    }
    return rows;
}

}  // namespace tensorspike

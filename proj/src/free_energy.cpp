#include "tensorspike/free_energy.hpp"

#include <algorithm>
#include <cmath>

#include "tensorspike/errors.hpp"
#include "tensorspike/rng.hpp"
#include "tensorspike/state_evolution.hpp"

namespace tensorspike {

namespace {

double hadamard_pow_sum(const Eigen::MatrixXd& m, int p) {
    double acc = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) acc += std::pow(m(i, j), p);
    return acc;
}

// E[log Z_X] for the unit-variance Gaussian prior: B+mu ~ N(mu(1+mhat), mhat^2+mhat)
double gaussian_elogzx(double mhat, double mu) {
    double s = 1.0 + mhat;
    double mean_sq = mu * mu * s * s + mhat * mhat + mhat;
    return -0.5 * std::log(s) + mean_sq / (2.0 * s) - 0.5 * mu * mu;
}

double expect_log_zx_scalar(double mhat, const Prior& prior, const Integrator& integ,
                            double* stderr_out) {
    const double shalf = std::sqrt(std::max(mhat, 0.0));
    auto integrand = [&](double x0, double z) {
        return prior.log_zx1(mhat, mhat * x0 + shalf * z);
    };
    if (integ.kind == Integrator::Kind::GaussHermite) {
        if (stderr_out) *stderr_out = 0;
        const auto& pts = gauss_hermite_points(integ.nodes);
        double acc = 0;
        if (prior.kind() == PriorKind::Gaussian) {
            for (const auto& [zx, wx] : pts) {
                double inner = 0;
                for (const auto& [z, w] : pts) inner += w * integrand(prior.mu() + zx, z);
                acc += wx * inner;
            }
        } else {
            for (const auto& [x0, w0] : prior.atoms()) {
                double inner = 0;
                for (const auto& [z, w] : pts) inner += w * integrand(x0, z);
                acc += w0 * inner;
            }
        }
        return acc;
    }
    double sum = 0, sumsq = 0;
    for (std::size_t s = 0; s < integ.samples; ++s) {
        double z = rng::normal(integ.seed, rng::kIntegrator, 2 * s);
        double g;
        if (prior.kind() == PriorKind::Gaussian) {
            double x0 = prior.mu() + rng::normal(integ.seed, rng::kIntegrator, 2 * s + 1);
            g = integrand(x0, z);
        } else {
            g = 0;
            for (const auto& [x0, w0] : prior.atoms()) g += w0 * integrand(x0, z);
        }
        sum += g;
        sumsq += g * g;
    }
    double mean = sum / integ.samples;
    if (stderr_out) {
        double var = std::max(0.0, sumsq / integ.samples - mean * mean);
        *stderr_out = std::sqrt(var / integ.samples);
    }
    return mean;
}

Eigen::MatrixXd cluster_ansatz_matrix(double b, int r) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(r, r, (1.0 - b) / (r * (double)r));
    m.diagonal().array() += b / r;
    return m;
}

Eigen::MatrixXd sqrt_psd_local(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Fn>
void gh_tensor_local(int nodes, int dim, Fn&& fn) {
    const auto& pts = gauss_hermite_points(nodes);
    double total = std::pow(static_cast<double>(nodes), dim);
    if (total > 4.0e6)
        throw CapacityError("gauss-hermite tensor grid too large; use mc or fewer nodes");
    std::vector<int> digit(dim, 0);
    Eigen::VectorXd z(dim);
    while (true) {
        double w = 1.0;
        for (int d = 0; d < dim; ++d) {
            z[d] = pts[digit[d]].first;
            w *= pts[digit[d]].second;
        }
        fn(z, w);
        int d = 0;
        while (d < dim && ++digit[d] == nodes) digit[d++] = 0;
        if (d == dim) break;
    }
}

double expect_log_zx_matrix(const Eigen::MatrixXd& mhat, const Prior& prior,
                            const Integrator& integ, double* stderr_out) {
    const int r = prior.rank();
    const Eigen::MatrixXd shalf = sqrt_psd_local(mhat);
    auto atom_average = [&](const Eigen::VectorXd& noise) {
        double acc = 0;
        for (int k = 0; k < r; ++k) acc += prior.log_zx(mhat, mhat.col(k) + noise) / r;
        return acc;
    };
    if (integ.kind == Integrator::Kind::GaussHermite) {
        if (stderr_out) *stderr_out = 0;
        double acc = 0;
        gh_tensor_local(integ.nodes, r, [&](const Eigen::VectorXd& z, double w) {
            acc += w * atom_average(shalf * z);
        });
        return acc;
    }
    double sum = 0, sumsq = 0;
    Eigen::VectorXd z(r);
    for (std::size_t s = 0; s < integ.samples; ++s) {
        for (int d = 0; d < r; ++d)
            z[d] = rng::normal(integ.seed, rng::kIntegrator, s * r + d);
        double g = atom_average(shalf * z);
        sum += g;
        sumsq += g * g;
    }
    double mean = sum / integ.samples;
    if (stderr_out) {
        double var = std::max(0.0, sumsq / integ.samples - mean * mean);
        *stderr_out = std::sqrt(var / integ.samples);
    }
    return mean;
}

Eigen::MatrixXd hadamard_pow_local(const Eigen::MatrixXd& m, int k) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(m.rows(), m.cols());
    for (int j = 0; j < k; ++j) out = out.cwiseProduct(m);
    return out;
}

}  // namespace

double phi_rs_generic(const Eigen::MatrixXd& m, double delta, int p, const Prior& prior,
                      const Integrator& integ, double* stderr_out) {
    if (!(delta > 0)) throw NumericError("phi_rs needs delta > 0");
    const int r = prior.rank();
    if (m.rows() != r || m.cols() != r)
        throw ShapeError("overlap matrix does not match prior rank");
    Eigen::MatrixXd ms = 0.5 * (m + m.transpose());
    Eigen::MatrixXd mhat = hadamard_pow_local(ms, p - 1) / delta;
    double elog;
    if (r == 1)
        elog = expect_log_zx_scalar(mhat(0, 0), prior, integ, stderr_out);
    else
        elog = expect_log_zx_matrix(mhat, prior, integ, stderr_out);
    double penalty = (p - 1.0) / (2.0 * p * delta) * hadamard_pow_sum(ms, p);
    double out = elog - penalty;
    if (!std::isfinite(out)) throw NumericError("phi_rs produced a non-finite value");
    return out;
}

double phi_rs(const Eigen::MatrixXd& m, double delta, int p, const Prior& prior,
              const Integrator& integ, double* stderr_out) {
    if (prior.kind() == PriorKind::Gaussian) {
        if (!(delta > 0)) throw NumericError("phi_rs needs delta > 0");
        if (stderr_out) *stderr_out = 0;
        double mm = std::max(m(0, 0), 0.0);
        double mhat = std::pow(mm, p - 1) / delta;
        return gaussian_elogzx(mhat, prior.mu()) -
               (p - 1.0) / (2.0 * p * delta) * std::pow(mm, p);
    }
    return phi_rs_generic(m, delta, p, prior, integ, stderr_out);
}

double phi_rs_scalar(double m, double delta, int p, const Prior& prior,
                     const Integrator& integ) {
    return phi_rs(Eigen::MatrixXd::Constant(1, 1, m), delta, p, prior, integ);
}

double phi_rs_cluster_line(double b, double delta, int p, const Prior& prior,
                           const Integrator& integ) {
    if (prior.kind() != PriorKind::Clusters)
        throw ShapeError("ansatz-line potential is for the clusters prior");
    return phi_rs(cluster_ansatz_matrix(b, prior.rank()), delta, p, prior, integ);
}

namespace {

// Golden-section maximization on [lo, hi] to absolute tolerance tol.
template <typename Fn>
std::pair<double, double> golden_max(double lo, double hi, double tol, Fn&& f) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    double xm = 0.5 * (a + b);
    return {xm, f(xm)};
}

}  // namespace

FreeEnergyCurve maximize_phi_rs(double delta, int p, const Prior& prior,
                                const Integrator& integ, int grid_points) {
    const bool clusters = prior.kind() == PriorKind::Clusters;
    PriorMoments mom = prior.moments();
    FreeEnergyCurve curve;
    curve.delta = delta;

    double lo = 0.0;
    double hi = clusters ? 1.0 : mom.sigma_x(0, 0) * (1.0 + 1e-6);
    auto eval = [&](double m) {
        return clusters ? phi_rs_cluster_line(m, delta, p, prior, integ)
                        : phi_rs_scalar(m, delta, p, prior, integ);
    };

    curve.grid.reserve(grid_points);
    int best = 0;
    for (int i = 0; i < grid_points; ++i) {
        double m = lo + (hi - lo) * i / (grid_points - 1.0);
        double value = eval(m);
        curve.grid.emplace_back(m, value);
        if (value > curve.grid[best].second) best = i;
    }
    double best_m = curve.grid[best].first;
    double best_phi = curve.grid[best].second;
    // Ties below quadrature resolution: distinct branches break toward the
    // larger overlap; within one branch the smaller overlap wins (keeps flat
    // maxima pinned at the boundary instead of search noise).
    const double branch_sep = 1e-3 * (hi - lo);
    auto consider = [&](double m, double phi) {
        bool take = false;
        if (phi > best_phi + 1e-12)
            take = true;
        else if (std::fabs(phi - best_phi) <= 1e-12 && m > best_m + branch_sep)
            take = true;  // degenerate distinct branches: larger overlap
        else if (phi > best_phi - 3e-14 && m < best_m && best_m - m <= branch_sep)
            take = true;  // same branch at quadrature noise: pin the boundary
        if (take) {
            best_m = m;
            best_phi = phi;
        }
    };

    double bl = curve.grid[std::max(best - 1, 0)].first;
    double bh = curve.grid[std::min<int>(best + 1, grid_points - 1)].first;
    auto [gm, gphi] = golden_max(bl, bh, 1e-10, eval);
    consider(gm, gphi);

    PriorMoments m0 = prior.moments();
    for (SeInit init : {SeInit::Eps, SeInit::Informative}) {
        double m_fp;
        if (clusters) {
            double b0 = init == SeInit::Informative ? 1.0 : 1e-8;
            auto f = [&](double b) {
                return cluster_se_step(std::clamp(b, 0.0, 1.0), delta, p, prior.rank(),
                                       integ);
            };
            m_fp = std::clamp(accelerated_fixed_point(f, b0, 0.0, 1.0), lo, hi);
        } else {
            double start = init == SeInit::Informative
                               ? m0.sigma_x(0, 0)
                               : m0.mean(0) * m0.mean(0) + 1e-8 * m0.sigma_x(0, 0);
            auto f = [&](double m) {
                return se_step(Eigen::MatrixXd::Constant(1, 1, m), delta, p, prior,
                               integ)(0, 0);
            };
            m_fp = std::clamp(accelerated_fixed_point(f, start, 0.0, hi), lo, hi);
        }
        curve.candidates.push_back(m_fp);
        consider(m_fp, eval(m_fp));
    }

    curve.m_star = best_m;
    curve.phi_star = best_phi;
    curve.m_star_matrix = clusters ? cluster_ansatz_matrix(best_m, prior.rank())
                                   : Eigen::MatrixXd::Constant(1, 1, best_m);
    return curve;
}

double mutual_information(double delta, int p, const Prior& prior,
                          const Integrator& integ) {
    PriorMoments mom = prior.moments();
    double s = hadamard_pow_sum(mom.sigma_x, p);
    FreeEnergyCurve c = maximize_phi_rs(delta, p, prior, integ);
    return s / (2.0 * p * delta) - c.phi_star;
}

double mmse(double delta, int p, const Prior& prior, const Integrator& integ) {
    PriorMoments mom = prior.moments();
    FreeEnergyCurve c = maximize_phi_rs(delta, p, prior, integ);
    return (mom.sigma_x - c.m_star_matrix).trace();
}

double t_mmse(double delta, int p, const Prior& prior, const Integrator& integ) {
    if (prior.rank() != 1)
        throw ShapeError("tensor-MMSE is defined for rank-one priors only");
    PriorMoments mom = prior.moments();
    FreeEnergyCurve c = maximize_phi_rs(delta, p, prior, integ);
    return std::pow(mom.sigma_x(0, 0), p) - std::pow(c.m_star, p);
}

ImmsReport imms_consistency(const std::vector<double>& deltas, int p,
                            const Prior& prior, const Integrator& integ) {
    if (deltas.size() < 20)
        throw ShapeError("I-MMSE check needs a grid of at least 20 deltas");
    std::vector<double> lambdas;
    for (double d : deltas) {
        if (!(d > 0)) throw NumericError("deltas must be positive");
        lambdas.push_back(1.0 / d);
    }
    std::sort(lambdas.begin(), lambdas.end());

    const std::size_t k = lambdas.size();
    std::vector<double> f(k), mstar(k);
    for (std::size_t i = 0; i < k; ++i) {
        FreeEnergyCurve c = maximize_phi_rs(1.0 / lambdas[i], p, prior, integ);
        f[i] = c.phi_star;
        mstar[i] = c.m_star;
    }

    ImmsReport rep;
    rep.min_second_difference = INFINITY;
    double max_jump = 0;
    for (std::size_t i = 1; i + 1 < k; ++i) {
        ImmsPoint pt;
        pt.lambda = lambdas[i];
        pt.delta = 1.0 / lambdas[i];
        pt.f_rs = f[i];
        pt.dF_dlambda = (f[i + 1] - f[i - 1]) / (lambdas[i + 1] - lambdas[i - 1]);
        pt.identity_rhs = std::pow(mstar[i], p) / (2.0 * p);
        double scale = std::max(std::fabs(pt.identity_rhs), 1e-12);
        pt.rel_violation = std::fabs(pt.dF_dlambda - pt.identity_rhs) / scale;
        // second divided difference (>= 0 up to tolerance when F is convex)
        double d1 = (f[i] - f[i - 1]) / (lambdas[i] - lambdas[i - 1]);
        double d2 = (f[i + 1] - f[i]) / (lambdas[i + 1] - lambdas[i]);
        pt.second_difference = 2.0 * (d2 - d1) / (lambdas[i + 1] - lambdas[i - 1]);
        rep.min_second_difference = std::min(rep.min_second_difference, pt.second_difference);
        rep.max_rel_violation = std::max(rep.max_rel_violation, pt.rel_violation);
        if (std::fabs(d2 - d1) > max_jump) {
            max_jump = std::fabs(d2 - d1);
            rep.kink_delta = pt.delta;
        }
        rep.points.push_back(pt);
    }
    return rep;
}

}  // namespace tensorspike

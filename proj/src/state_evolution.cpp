#include "tensorspike/state_evolution.hpp"

#include <cmath>

#include "tensorspike/errors.hpp"
#include "tensorspike/rng.hpp"

namespace tensorspike {

namespace {

Eigen::MatrixXd hadamard_pow(const Eigen::MatrixXd& m, int k) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(m.rows(), m.cols());
    for (int j = 0; j < k; ++j) out = out.cwiseProduct(m);
    return out;
}

// Symmetric PSD square root; eigenvalues below zero (roundoff) are clipped.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

struct Accumulator {
    Eigen::MatrixXd sum, sumsq;
    std::size_t count = 0;
    explicit Accumulator(int r)
        : sum(Eigen::MatrixXd::Zero(r, r)), sumsq(Eigen::MatrixXd::Zero(r, r)) {}
    void add(const Eigen::MatrixXd& g, double w) {
        sum += w * g;
        sumsq += w * g.cwiseProduct(g);
        ++count;
    }
};

// Scalar-prior expectation: discrete priors sum atoms exactly; the Gaussian
// prior integrates x0 with the same rule as Z.
double expect_scalar(double mhat, const Prior& prior, const Integrator& integ,
                     double* stderr_out) {
    const double shalf = std::sqrt(std::max(mhat, 0.0));
    auto integrand = [&](double x0, double z) {
        double mean, var;
        prior.fin1(mhat, mhat * x0 + shalf * z, mean, var);
        return mean * x0;
    };
    if (integ.kind == Integrator::Kind::GaussHermite) {
        if (stderr_out) *stderr_out = 0;
        const auto& pts = gauss_hermite_points(integ.nodes);
        double acc = 0;
        if (prior.kind() == PriorKind::Gaussian) {
            for (const auto& [zx, wx] : pts) {
                double x0 = prior.mu() + zx;
                double inner = 0;
                for (const auto& [z, w] : pts) inner += w * integrand(x0, z);
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
    const std::size_t k = integ.samples;
    for (std::size_t s = 0; s < k; ++s) {
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
    double mean = sum / k;
    if (stderr_out) {
        double var = std::max(0.0, sumsq / k - mean * mean);
        *stderr_out = std::sqrt(var / k);
    }
    return mean;
}

// Iterate a tensor-product Gauss-Hermite grid in dim dimensions.
template <typename Fn>
void gh_tensor(int nodes, int dim, Fn&& fn) {
    const auto& pts = gauss_hermite_points(nodes);
    double total = std::pow(static_cast<double>(nodes), dim);
    if (total > 4.0e6)
        throw CapacityError("gauss-hermite tensor grid too large (" +
                            std::to_string(static_cast<std::uint64_t>(total)) +
                            " nodes); use mc or fewer nodes per dimension");
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

Eigen::MatrixXd clusters_expect(const Eigen::MatrixXd& mhat, const Prior& prior,
                                const Integrator& integ, double* stderr_out) {
    const int r = prior.rank();
    const Eigen::MatrixXd shalf = sqrt_psd(mhat);
    Eigen::VectorXd mean(r);
    Eigen::MatrixXd cov(r, r);
    auto atom_average = [&](const Eigen::VectorXd& noise, Eigen::MatrixXd& g) {
        for (int k = 0; k < r; ++k) {
            Eigen::VectorXd b = mhat.col(k) + noise;
            prior.fin(mhat, b, mean, cov);
            g.col(k) = mean / r;
        }
    };
    if (integ.kind == Integrator::Kind::GaussHermite) {
        if (stderr_out) *stderr_out = 0;
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(r, r);
        Eigen::MatrixXd g(r, r);
        gh_tensor(integ.nodes, r, [&](const Eigen::VectorXd& z, double w) {
            atom_average(shalf * z, g);
            acc += w * g;
        });
        return acc;
    }
    Accumulator acc(r);
    Eigen::VectorXd z(r);
    Eigen::MatrixXd g(r, r);
    for (std::size_t s = 0; s < integ.samples; ++s) {
        for (int d = 0; d < r; ++d)
            z[d] = rng::normal(integ.seed, rng::kIntegrator, s * r + d);
        atom_average(shalf * z, g);
        acc.add(g, 1.0);
    }
    Eigen::MatrixXd meanm = acc.sum / integ.samples;
    if (stderr_out) {
        Eigen::MatrixXd var =
            (acc.sumsq / integ.samples - meanm.cwiseProduct(meanm)).cwiseMax(0.0);
        *stderr_out = std::sqrt(var.maxCoeff() / integ.samples);
    }
    return meanm;
}

}  // namespace

double se_gaussian_step(double m, double delta, int p, double mu) {
    double mp = std::pow(m, p - 1);
    return (delta * mu * mu + mp * (1.0 + mu * mu)) / (delta + mp);
}

Eigen::MatrixXd se_step_generic(const Eigen::MatrixXd& m, double delta, int p,
                                const Prior& prior, const Integrator& integ,
                                double* stderr_out) {
    if (!(delta > 0)) throw NumericError("state evolution needs delta > 0");
    const int r = prior.rank();
    if (m.rows() != r || m.cols() != r)
        throw ShapeError("overlap matrix does not match prior rank");
    Eigen::MatrixXd ms = 0.5 * (m + m.transpose());
    Eigen::MatrixXd mhat = hadamard_pow(ms, p - 1) / delta;
    Eigen::MatrixXd out;
    if (r == 1) {
        double v = expect_scalar(mhat(0, 0), prior, integ, stderr_out);
        out = Eigen::MatrixXd::Constant(1, 1, v);
    } else {
        out = clusters_expect(mhat, prior, integ, stderr_out);
    }
    if (!out.allFinite()) throw NumericError("state evolution produced non-finite overlap");
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd se_step(const Eigen::MatrixXd& m, double delta, int p,
                        const Prior& prior, const Integrator& integ,
                        double* stderr_out) {
    if (prior.kind() == PriorKind::Gaussian) {
        if (!(delta > 0)) throw NumericError("state evolution needs delta > 0");
        if (stderr_out) *stderr_out = 0;
        double v = se_gaussian_step(std::max(m(0, 0), 0.0), delta, p, prior.mu());
        return Eigen::MatrixXd::Constant(1, 1, v);
    }
    return se_step_generic(m, delta, p, prior, integ, stderr_out);
}

SeFixedPoint se_fixed_point(double delta, int p, const Prior& prior, SeInit init,
                            const Integrator& integ, double tol, int max_iter) {
    PriorMoments mom = prior.moments();
    Eigen::MatrixXd m;
    if (init == SeInit::Informative)
        m = mom.sigma_x;
    else
        m = mom.mean * mom.mean.transpose() + 1e-8 * mom.sigma_x;

    SeFixedPoint fp;
    fp.init_used = init;
    double step_err = 0;
    for (int t = 0; t < max_iter; ++t) {
        Eigen::MatrixXd next = se_step(m, delta, p, prior, integ, &step_err);
        double diff = (next - m).cwiseAbs().maxCoeff();
        m = next;
        fp.iterations = t + 1;
        double tol_eff =
            integ.kind == Integrator::Kind::MonteCarlo ? std::max(tol, 3 * step_err) : tol;
        if (diff < tol_eff) {
            fp.converged = true;
            break;
        }
    }
    fp.m_star = m;
    fp.mc_stderr = step_err;
    fp.mse = mse_from_overlap(mom.sigma_x, m);
    return fp;
}

LinearizedGrowth linearized_growth(const Prior& prior, double delta, int p) {
    if (!prior.zero_mean())
        throw ShapeError("linearized_growth needs a zero-mean prior (M=0 is not a fixed "
                         "point otherwise)");
    const int r = prior.rank();
    LinearizedGrowth g;
    if (p >= 3) {
        g.map = Eigen::MatrixXd::Zero(r * r, r * r);
        g.spectral_radius = 0.0;
        return g;
    }
    // p = 2: M -> Sigma_X M Sigma_X / delta, i.e. (Sigma ox Sigma)/delta on vec(M)
    Eigen::MatrixXd sigma = prior.moments().sigma_x;
    Eigen::MatrixXd map(r * r, r * r);
    for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b)
            for (int c = 0; c < r; ++c)
                for (int d = 0; d < r; ++d)
                    map(a + r * b, c + r * d) = sigma(a, c) * sigma(d, b) / delta;
    Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(map, false).eigenvalues();
    g.map = map;
    g.spectral_radius = ev.cwiseAbs().maxCoeff();
    return g;
}

double mse_from_overlap(const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& m) {
    if (sigma_x.rows() != m.rows() || sigma_x.cols() != m.cols())
        throw ShapeError("overlap and Sigma_X dimensions differ");
    return (sigma_x - m).trace();
}

namespace {

// w1 - wtilde1 for one noise draw, where w = softmax(s e1 + sqrt(s) z) and
// wtilde drops the s shift. Written so the small-s cancellation is exact:
//   D = a1 R expm1(s) / ((e^s a1 + R)(a1 + R)),  a_k = e^{sqrt(s) z_k}.
double mr_integrand(double s, const Eigen::VectorXd& z, int r) {
    const double ss = std::sqrt(s);
    if (s <= 30.0) {
        double top = ss * z[0];
        for (int k = 1; k < r; ++k) top = std::max(top, ss * z[k]);
        double a1 = std::exp(ss * z[0] - top);
        double rest = 0;
        for (int k = 1; k < r; ++k) rest += std::exp(ss * z[k] - top);
        double es = std::exp(s);
        return a1 * rest * std::expm1(s) / ((es * a1 + rest) * (a1 + rest));
    }
    double l1 = ss * z[0];
    double lr = -INFINITY;
    for (int k = 1; k < r; ++k) lr = std::max(lr, ss * z[k]);
    double acc = 0;
    for (int k = 1; k < r; ++k) acc += std::exp(ss * z[k] - lr);
    lr += std::log(acc);
    auto sigmoid = [](double t) {
        if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
        double e = std::exp(t);
        return e / (1.0 + e);
    };
    return sigmoid(s + l1 - lr) - sigmoid(l1 - lr);
}

}  // namespace

double cluster_mr(double x, int r, const Integrator& integ, double* stderr_out) {
    if (r < 2) throw ShapeError("cluster overlap function needs r >= 2");
    if (x < 0) throw NumericError("cluster overlap function needs x >= 0");
    if (stderr_out) *stderr_out = 0;
    if (x == 0) return 0;
    const double s = x / r;
    const double scale = r / (r - 1.0);
    if (integ.kind == Integrator::Kind::GaussHermite) {
        double acc = 0;
        gh_tensor(integ.nodes, r,
                  [&](const Eigen::VectorXd& z, double w) { acc += w * mr_integrand(s, z, r); });
        return scale * acc;
    }
    double sum = 0, sumsq = 0;
    Eigen::VectorXd z(r);
    for (std::size_t smp = 0; smp < integ.samples; ++smp) {
        for (int d = 0; d < r; ++d)
            z[d] = rng::normal(integ.seed, rng::kIntegrator, smp * r + d);
        double g = mr_integrand(s, z, r);
        sum += g;
        sumsq += g * g;
    }
    double mean = sum / integ.samples;
    if (stderr_out) {
        double var = std::max(0.0, sumsq / integ.samples - mean * mean);
        *stderr_out = scale * std::sqrt(var / integ.samples);
    }
    return scale * mean;
}

namespace {

// (b/r + (1-b)/r^2)^(p-1) - ((1-b)/r^2)^(p-1), cancellation-free at small b
double hadamard_diag_gap(double b, int p, int r) {
    if (b >= 0.999) {
        double d = std::pow(b / r + (1.0 - b) / (r * (double)r), p - 1);
        double o = std::pow((1.0 - b) / (r * (double)r), p - 1);
        return d - o;
    }
    double o = std::pow((1.0 - b) / (r * (double)r), p - 1);
    return o * std::expm1((p - 1) * std::log1p(b * r / (1.0 - b)));
}

}  // namespace

double cluster_snr_arg(double b, double delta, int p, int r) {
    if (!(delta > 0)) throw NumericError("cluster SE needs delta > 0");
    return r * hadamard_diag_gap(b, p, r) / delta;
}

double cluster_se_step(double b, double delta, int p, int r, const Integrator& integ,
                       double* stderr_out) {
    if (b < 0 || b > 1) throw NumericError("ansatz parameter b must lie in [0,1]");
    return cluster_mr(cluster_snr_arg(b, delta, p, r), r, integ, stderr_out);
}

ClusterCurvePoint cluster_parametric_curve(double x, int p, int r,
                                           const Integrator& integ) {
    if (!(x > 0)) throw NumericError("parametric curve needs x > 0");
    auto delta_of = [&](double xx, const Integrator& ig) {
        double m = cluster_mr(xx, r, ig);
        return r * hadamard_diag_gap(m, p, r) / xx;
    };
    ClusterCurvePoint out;
    out.m = cluster_mr(x, r, integ);
    out.delta = r * hadamard_diag_gap(out.m, p, r) / x;
    const double h = 1e-3 * x;
    double der = (delta_of(x + h, integ) - delta_of(x - h, integ)) / (2 * h);
    if (integ.kind == Integrator::Kind::MonteCarlo) {
        // second derivative estimate with an independent stream; disagreeing
        // signs mean MC noise dominates
        Integrator alt = integ.with_seed(integ.seed + 0x9e37);
        double der2 = (delta_of(x + h, alt) - delta_of(x - h, alt)) / (2 * h);
        if (der * der2 <= 0) {
            out.stable = -1;
            return out;
        }
    }
    out.stable = der < 0 ? 1 : 0;
    return out;
}

double cluster_growth_rate(double delta, int p, int r, const Integrator& integ) {
    const double eps = 1e-4;
    double g1 = cluster_se_step(eps, delta, p, r, integ) / eps;
    double g2 = cluster_se_step(eps / 2, delta, p, r, integ) / (eps / 2);
    return 2.0 * g2 - g1;
}

double accelerated_fixed_point(const std::function<double(double)>& f, double x0,
                               double lo, double hi, double tol, int max_iter) {
    auto clamp = [&](double v) { return std::clamp(v, lo, hi); };
    auto sign = [](double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); };
    // residual-sign bisection once the monotone flow brackets its target
    auto bracket_solve = [&](double a, double b, double ra) {
        for (int k = 0; k < 200 && std::fabs(b - a) > tol; ++k) {
            double mid = 0.5 * (a + b);
            double rm = f(mid) - mid;
            if (std::fabs(rm) < tol) return mid;
            if (sign(rm) == sign(ra))
                a = mid;
            else
                b = mid;
        }
        return 0.5 * (a + b);
    };
    double x = clamp(x0);
    for (int it = 0; it < max_iter; ++it) {
        double x1 = clamp(f(x));
        double d1 = f(x1) - x1;
        if (std::fabs(d1) < tol) return x1;
        double d0 = x1 - x;
        double ratio = d0 != 0 ? d1 / d0 : 0.0;
        if (ratio > 0 && ratio < 1.0) {
            // Aitken jump toward the attracting fixed point
            double xs = clamp(x1 + d1 / (1.0 - ratio));
            double rs = f(xs) - xs;
            if (std::fabs(rs) < tol) return xs;
            if (sign(rs) != sign(d1)) return bracket_solve(x1, xs, d1);
            x = std::fabs(rs) < std::fabs(d1) ? xs : clamp(x1 + d1);
            continue;
        }
        if (ratio > 1.0) {
            // escaping a repelling fixed point: project the geometric growth
            // forward; overshooting the next stable point flips the residual
            double growth = std::min(1e15, (std::pow(ratio, 64.0) - 1.0) / (ratio - 1.0));
            double xs = clamp(x1 + d1 * growth);
            double rs = f(xs) - xs;
            if (std::fabs(rs) < tol) return xs;
            if (sign(rs) != sign(d1)) return bracket_solve(x1, xs, d1);
            x = xs;
            continue;
        }
        x = clamp(x1 + d1);
    }
    return x;
}

}  // namespace tensorspike

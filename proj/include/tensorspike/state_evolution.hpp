#pragma once

#include <Eigen/Dense>
#include <functional>

#include "tensorspike/integrate.hpp"
#include "tensorspike/model.hpp"

namespace tensorspike {

enum class SeInit { Eps, Informative };

struct SeFixedPoint {
    Eigen::MatrixXd m_star;
    SeInit init_used = SeInit::Eps;
    double mse = 0;
    int iterations = 0;
    bool converged = false;
    double mc_stderr = 0;  // max-entry stderr of the last step (MC only)
};

// One state-evolution update of the overlap matrix:
//   Mhat = M^{o(p-1)} / delta,  M' = E[f_in(Mhat, Mhat x0 + Mhat^{1/2} Z) x0^T].
// Catalog priors with a closed-form update (Gaussian r=1) bypass quadrature;
// se_step_generic always integrates and is the cross-check path.
Eigen::MatrixXd se_step(const Eigen::MatrixXd& m, double delta, int p,
                        const Prior& prior, const Integrator& integ,
                        double* stderr_out = nullptr);
Eigen::MatrixXd se_step_generic(const Eigen::MatrixXd& m, double delta, int p,
                                const Prior& prior, const Integrator& integ,
                                double* stderr_out = nullptr);

SeFixedPoint se_fixed_point(double delta, int p, const Prior& prior, SeInit init,
                            const Integrator& integ, double tol = 1e-10,
                            int max_iter = 10000);

// Closed-form scalar update for the unit-variance Gaussian prior of mean mu.
double se_gaussian_step(double m, double delta, int p, double mu);

struct LinearizedGrowth {
    Eigen::MatrixXd map;    // r^2 x r^2 matrix acting on vec(M); zero for p >= 3
    double spectral_radius;
};
// Expansion of the SE around M = 0 (zero-mean priors only).
LinearizedGrowth linearized_growth(const Prior& prior, double delta, int p);

// Tr[Sigma_X - M]
double mse_from_overlap(const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& m);

// --- clusters prior, b-ansatz machinery: M(b) = (b/r) I + ((1-b)/r^2) J ---

// Scalar overlap function of the effective r-category Gaussian channel with
// signal-to-noise x; M_r(0)=0, M_r(inf)=1.
double cluster_mr(double x, int r, const Integrator& integ,
                  double* stderr_out = nullptr);

// x(b) = r [ (b/r + (1-b)/r^2)^(p-1) - ((1-b)/r^2)^(p-1) ] / delta
double cluster_snr_arg(double b, double delta, int p, int r);

// b' = M_r(x(b))
double cluster_se_step(double b, double delta, int p, int r, const Integrator& integ,
                       double* stderr_out = nullptr);

struct ClusterCurvePoint {
    double m;
    double delta;
    int stable;  // 1 stable, 0 unstable, -1 indeterminate under MC noise
};
// Parametric fixed-point curve (m(x), Delta(x)); stability from the sign of
// dDelta/dx (central difference, relative step 1e-3, common random numbers).
ClusterCurvePoint cluster_parametric_curve(double x, int p, int r,
                                           const Integrator& integ);

// d(cluster_se_step)/db at b=0+, Richardson-extrapolated finite differences.
double cluster_growth_rate(double delta, int p, int r, const Integrator& integ);

// Fixed point of a monotone scalar map from x0, found by safeguarded Aitken
// extrapolation; falls back to residual-sign bisection once the target is
// bracketed. Lands on the same fixed point the plain iteration flows to.
double accelerated_fixed_point(const std::function<double(double)>& f, double x0,
                               double lo, double hi, double tol = 1e-13,
                               int max_iter = 5000);

}  // namespace tensorspike

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "tensorspike/integrate.hpp"
#include "tensorspike/model.hpp"

namespace tensorspike {

// Replica-symmetric potential
//   phi(M) = E[log Z_X(Mhat, Mhat x0 + Mhat^{1/2} Z)] - (p-1)/(2 p delta) sum M_kk'^p
// with Mhat = M^{o(p-1)}/delta. The Gaussian prior has a closed form;
// phi_rs_generic always integrates (cross-check path).
double phi_rs(const Eigen::MatrixXd& m, double delta, int p, const Prior& prior,
              const Integrator& integ, double* stderr_out = nullptr);
double phi_rs_generic(const Eigen::MatrixXd& m, double delta, int p, const Prior& prior,
                      const Integrator& integ, double* stderr_out = nullptr);
double phi_rs_scalar(double m, double delta, int p, const Prior& prior,
                     const Integrator& integ);

// For the clusters prior phi is evaluated along the ansatz line
// M(b) = (b/r) I + ((1-b)/r^2) J.
double phi_rs_cluster_line(double b, double delta, int p, const Prior& prior,
                           const Integrator& integ);

struct FreeEnergyCurve {
    double delta = 0;
    std::vector<std::pair<double, double>> grid;  // (m, phi) / (b, phi) samples
    double m_star = 0;                            // scalar m (r=1) or b (clusters)
    double phi_star = 0;
    std::vector<double> candidates;  // SE fixed points folded into the search
    Eigen::MatrixXd m_star_matrix;
};

// Dense grid + golden-section refinement over [0, Sigma_X(1+1e-6)] (r=1) or
// the ansatz line b in [0,1] (clusters); SE fixed points from both
// initializations are always included as candidates.
FreeEnergyCurve maximize_phi_rs(double delta, int p, const Prior& prior,
                                const Integrator& integ, int grid_points = 1000);

// (1/N) I(X0;Y) limit: sum_kk' (Sigma_X)_kk'^p / (2 p delta) - sup phi
double mutual_information(double delta, int p, const Prior& prior,
                          const Integrator& integ);

// Tr[Sigma_X - M*]
double mmse(double delta, int p, const Prior& prior, const Integrator& integ);

// Sigma_X^p - (m*)^p, rank-one only
double t_mmse(double delta, int p, const Prior& prior, const Integrator& integ);

struct ImmsPoint {
    double delta = 0;
    double lambda = 0;
    double f_rs = 0;
    double dF_dlambda = 0;   // central difference
    double identity_rhs = 0; // (m*)^p / (2p)
    double rel_violation = 0;
    double second_difference = 0;  // of F_RS in lambda
};

struct ImmsReport {
    std::vector<ImmsPoint> points;
    double max_rel_violation = 0;
    double min_second_difference = 0;
    double kink_delta = 0;  // grid point with the largest derivative jump
};

// Finite-difference check of dF_RS/dlambda = (Sigma_X^p - T-MMSE)/(2p) and
// convexity of F_RS in lambda = 1/delta, over a grid of >= 20 deltas.
ImmsReport imms_consistency(const std::vector<double>& deltas, int p,
                            const Prior& prior, const Integrator& integ);

}  // namespace tensorspike

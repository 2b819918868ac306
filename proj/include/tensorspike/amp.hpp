#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <vector>

#include "tensorspike/model.hpp"

namespace tensorspike {

enum class AmpInit { Random, Informative, Custom };

struct AmpState {
    MultiVector xhat;
    MultiVector xhat_prev;
    std::vector<double> sigma;  // n covariance matrices, r*r each, row-major
    Eigen::MatrixXd a_mat;
    MultiVector b_vecs;
    int iter = 0;

    std::size_t n() const { return xhat.n(); }
    std::size_t r() const { return xhat.r(); }
    Eigen::Map<Eigen::MatrixXd> sigma_at(std::size_t i) {
        auto r_ = static_cast<Eigen::Index>(r());
        return {sigma.data() + i * r() * r(), r_, r_};
    }
    Eigen::Map<const Eigen::MatrixXd> sigma_at(std::size_t i) const {
        auto r_ = static_cast<Eigen::Index>(r());
        return {sigma.data() + i * r() * r(), r_, r_};
    }
};

struct AmpOptions {
    int max_iter = 1000;
    double tol = 1e-8;        // on (1/N) ||xhat^{t+1} - xhat^t||^2
    double damping = 0.0;     // in [0,1)
    bool track_overlap = true;
};

struct AmpResult {
    AmpState state;
    bool converged = false;
    int iterations = 0;
    std::vector<Eigen::MatrixXd> overlap_trajectory;  // M^t = xhat^t . x0
    Eigen::MatrixXd final_overlap;                    // empty without truth
    double mse = std::numeric_limits<double>::quiet_NaN();        // (1/N)||X0-xhat||^2
    double mse_trace = std::numeric_limits<double>::quiet_NaN();  // Tr[S_emp + x.x - 2 x.X0]
};

// overlap u.v = (1/N) sum_i u_i v_i^T
Eigen::MatrixXd overlap(const MultiVector& u, const MultiVector& v);

AmpState amp_init(AmpInit mode, const ModelSpec& spec, std::uint64_t seed,
                  const MultiVector* truth = nullptr,
                  const MultiVector* custom = nullptr);

// One synchronous update of eqs. B -> A -> f_in; throws DivergenceError on
// non-finite messages.
void amp_step(AmpState& state, const SymmetricTensor& s, double delta,
              const Prior& prior, double damping = 0.0);

// Runs AMP on a score tensor until (1/N)||dx||^2 < tol or max_iter.
AmpResult amp_run_scored(const SymmetricTensor& s, double delta, const Prior& prior,
                         AmpState state, const AmpOptions& opts,
                         const MultiVector* truth = nullptr);

// Convenience wrapper: scores the instance's observation, initializes, runs.
AmpResult amp_run(const Instance& instance, AmpInit init, const AmpOptions& opts,
                  std::uint64_t init_seed = 0);

}  // namespace tensorspike

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensorspike/rng.hpp"
#include "tensorspike/sym_tensor.hpp"

namespace tensorspike {

enum class PriorKind { Gaussian, Rademacher, Bernoulli, Clusters, DiscreteScalar };

struct PriorMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd sigma_x;  // E[x x^T]
};

// Catalog priors carry closed-form Z_X / f_in; DiscreteScalar is the generic
// fallback for user-supplied scalar priors (exact summation over atoms).
class Prior {
public:
    static Prior gaussian(double mu);
    static Prior rademacher();
    static Prior bernoulli(double rho);
    static Prior clusters(int r);
    static Prior discrete_scalar(std::vector<double> values, std::vector<double> probs);

    PriorKind kind() const { return kind_; }
    int rank() const { return r_; }
    double mu() const { return mu_; }
    double rho() const { return rho_; }
    bool zero_mean() const;

    PriorMoments moments() const;

    // Z_X(A,B) = int dP_X(x) exp(B.x - x.A.x/2) and the tilted mean/covariance
    double log_zx(const Eigen::MatrixXd& A, const Eigen::VectorXd& B) const;
    double zx(const Eigen::MatrixXd& A, const Eigen::VectorXd& B) const;
    void fin(const Eigen::MatrixXd& A, const Eigen::VectorXd& B, Eigen::VectorXd& mean,
             Eigen::MatrixXd& cov) const;

    // scalar fast paths, valid when rank() == 1
    double log_zx1(double a, double b) const;
    void fin1(double a, double b, double& mean, double& var) const;

    // scalar atoms (x, weight) for discrete r=1 priors; empty for Gaussian/Clusters
    const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

    MultiVector sample(std::size_t n, std::uint64_t seed,
                       std::uint64_t stream = rng::kSignal) const;

    std::string describe() const;

private:
    Prior() = default;
    PriorKind kind_ = PriorKind::Rademacher;
    int r_ = 1;
    double mu_ = 0.0;
    double rho_ = 0.5;
    std::vector<std::pair<double, double>> atoms_;
};

struct CustomChannel {
    // log P_out(y | w)
    std::function<double(double y, double w)> log_density;
    // draw y given w using the (seed, idx) counter stream; optional
    std::function<double(double w, std::uint64_t seed, std::uint64_t idx)> sampler;
};

enum class ChannelKind { Awgn, Custom };

class Channel {
public:
    static Channel awgn(double delta);
    static Channel custom(CustomChannel c);

    ChannelKind kind() const { return kind_; }
    double awgn_delta() const { return delta_; }

    // d/dw log P_out(y|w) at w=0 (AWGN: y/delta; custom: central differences)
    double score_at(double y) const;
    // inverse Fisher information at w=0 (AWGN: delta; custom: seeded MC)
    double fisher_delta(std::uint64_t seed = 1) const;
    double sample(double w, std::uint64_t seed, std::uint64_t idx) const;

    std::string describe() const;

private:
    Channel() = default;
    ChannelKind kind_ = ChannelKind::Awgn;
    double delta_ = 1.0;
    CustomChannel custom_;
};

struct ModelSpec {
    std::size_t n = 0;
    int p = 3;
    Prior prior = Prior::rademacher();
    Channel channel = Channel::awgn(1.0);
    int rank() const { return prior.rank(); }
};

struct Instance {
    ModelSpec spec;
    MultiVector x0;
    SymmetricTensor y;
    std::uint64_t seed;
};

// sqrt((p-1)!) / n^((p-1)/2)
double spike_prefactor(std::size_t n, int p);

MultiVector sample_signal(const Prior& prior, std::size_t n, std::uint64_t seed);
SymmetricTensor spike_tensor(const MultiVector& x0, int p);
// Takes the noiseless tensor by value: pass an rvalue to reuse its buffer.
SymmetricTensor observe(SymmetricTensor w, const Channel& channel, std::uint64_t seed);

struct ScoredTensor {
    SymmetricTensor s;
    double delta;
};
ScoredTensor score_tensor(SymmetricTensor y, const Channel& channel,
                          std::uint64_t seed = 1);

Instance generate_instance(const ModelSpec& spec, std::uint64_t seed);

}  // namespace tensorspike

#include "tensorspike/model.hpp"

#include <cmath>

#include "tensorspike/parallel.hpp"

namespace tensorspike {

namespace {

double log_cosh(double b) {
    double a = std::fabs(b);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

Prior Prior::gaussian(double mu) {
    Prior p;
    p.kind_ = PriorKind::Gaussian;
    p.mu_ = mu;
    return p;
}

Prior Prior::rademacher() {
    Prior p;
    p.kind_ = PriorKind::Rademacher;
    p.atoms_ = {{-1.0, 0.5}, {1.0, 0.5}};
    return p;
}

Prior Prior::bernoulli(double rho) {
    if (!(rho > 0.0 && rho < 1.0))
        throw ShapeError("Bernoulli spike density must lie in (0,1)");
    Prior p;
    p.kind_ = PriorKind::Bernoulli;
    p.rho_ = rho;
    p.atoms_ = {{0.0, 1.0 - rho}, {1.0, rho}};
    return p;
}

Prior Prior::clusters(int r) {
    if (r < 2) throw ShapeError("clusters prior needs r >= 2");
    Prior p;
    p.kind_ = PriorKind::Clusters;
    p.r_ = r;
    return p;
}

Prior Prior::discrete_scalar(std::vector<double> values, std::vector<double> probs) {
    if (values.empty() || values.size() != probs.size())
        throw ShapeError("discrete prior needs matching values/probs");
    double total = 0;
    for (double w : probs) {
        if (!(w >= 0)) throw ShapeError("discrete prior weights must be >= 0");
        total += w;
    }
    if (!(total > 0)) throw ShapeError("discrete prior weights must sum to > 0");
    Prior p;
    p.kind_ = PriorKind::DiscreteScalar;
    for (std::size_t s = 0; s < values.size(); ++s)
        p.atoms_.emplace_back(values[s], probs[s] / total);
    return p;
}

bool Prior::zero_mean() const {
    PriorMoments m = moments();
    return m.mean.cwiseAbs().maxCoeff() == 0.0;
}

PriorMoments Prior::moments() const {
    PriorMoments m;
    switch (kind_) {
        case PriorKind::Gaussian:
            m.mean = Eigen::VectorXd::Constant(1, mu_);
            m.sigma_x = Eigen::MatrixXd::Constant(1, 1, 1.0 + mu_ * mu_);
            break;
        case PriorKind::Clusters:
            m.mean = Eigen::VectorXd::Constant(r_, 1.0 / r_);
            m.sigma_x = Eigen::MatrixXd::Identity(r_, r_) / r_;
            break;
        default: {
            double mean = 0, second = 0;
            for (auto [x, w] : atoms_) {
                mean += w * x;
                second += w * x * x;
            }
            m.mean = Eigen::VectorXd::Constant(1, mean);
            m.sigma_x = Eigen::MatrixXd::Constant(1, 1, second);
        }
    }
    return m;
}

double Prior::log_zx1(double a, double b) const {
    switch (kind_) {
        case PriorKind::Gaussian: {
            double s = 1.0 + a;
            if (!(s > 0))
                throw DegenerateError("Gaussian tilted measure not normalizable (1+A <= 0)");
            double t = b + mu_;
            return -0.5 * std::log(s) + t * t / (2.0 * s) - 0.5 * mu_ * mu_;
        }
        case PriorKind::Rademacher:
            return -0.5 * a + log_cosh(b);
        case PriorKind::Bernoulli: {
            double t = b - 0.5 * a;
            if (t < 0) return std::log1p(rho_ * std::expm1(t));
            return t + std::log(rho_ + (1.0 - rho_) * std::exp(-t));
        }
        case PriorKind::DiscreteScalar: {
            double best = -INFINITY;
            for (auto [x, w] : atoms_)
                best = std::max(best, std::log(w) + b * x - 0.5 * a * x * x);
            double sum = 0;
            for (auto [x, w] : atoms_)
                sum += std::exp(std::log(w) + b * x - 0.5 * a * x * x - best);
            return best + std::log(sum);
        }
        case PriorKind::Clusters:
            throw ShapeError("clusters prior is not scalar");
    }
    return 0;
}

void Prior::fin1(double a, double b, double& mean, double& var) const {
    switch (kind_) {
        case PriorKind::Gaussian: {
            double s = 1.0 + a;
            if (!(s > 0))
                throw DegenerateError("Gaussian tilted measure not normalizable (1+A <= 0)");
            mean = (b + mu_) / s;
            var = 1.0 / s;
            return;
        }
        case PriorKind::Rademacher: {
            mean = std::tanh(b);
            var = 1.0 - mean * mean;
            return;
        }
        case PriorKind::Bernoulli: {
            double t = b - 0.5 * a + std::log(rho_ / (1.0 - rho_));
            mean = sigmoid(t);
            var = mean * (1.0 - mean);
            return;
        }
        case PriorKind::DiscreteScalar: {
            double best = -INFINITY;
            for (auto [x, w] : atoms_)
                best = std::max(best, std::log(w) + b * x - 0.5 * a * x * x);
            double z = 0, m1 = 0, m2 = 0;
            for (auto [x, w] : atoms_) {
                double e = std::exp(std::log(w) + b * x - 0.5 * a * x * x - best);
                z += e;
                m1 += e * x;
                m2 += e * x * x;
            }
            mean = m1 / z;
            var = m2 / z - mean * mean;
            if (var < 0) var = 0;
            return;
        }
        case PriorKind::Clusters:
            throw ShapeError("clusters prior is not scalar");
    }
}

double Prior::log_zx(const Eigen::MatrixXd& A, const Eigen::VectorXd& B) const {
    if (kind_ == PriorKind::Clusters) {
        if (A.rows() != r_ || A.cols() != r_ || B.size() != r_)
            throw ShapeError("A/B dimensions do not match prior rank");
        Eigen::VectorXd t(r_);
        for (int k = 0; k < r_; ++k) t[k] = B[k] - 0.5 * A(k, k);
        double best = t.maxCoeff();
        double sum = (t.array() - best).exp().sum();
        return best + std::log(sum) - std::log(static_cast<double>(r_));
    }
    if (A.rows() != 1 || A.cols() != 1 || B.size() != 1)
        throw ShapeError("A/B dimensions do not match prior rank");
    return log_zx1(A(0, 0), B(0));
}

double Prior::zx(const Eigen::MatrixXd& A, const Eigen::VectorXd& B) const {
    return std::exp(log_zx(A, B));
}

void Prior::fin(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const {
    if (kind_ == PriorKind::Clusters) {
        if (A.rows() != r_ || A.cols() != r_ || B.size() != r_)
            throw ShapeError("A/B dimensions do not match prior rank");
        Eigen::VectorXd t(r_);
        for (int k = 0; k < r_; ++k) t[k] = B[k] - 0.5 * A(k, k);
        double best = t.maxCoeff();
        Eigen::VectorXd w = (t.array() - best).exp();
        w /= w.sum();
        mean = w;
        cov = -w * w.transpose();
        cov.diagonal() += w;
        return;
    }
    if (A.rows() != 1 || A.cols() != 1 || B.size() != 1)
        throw ShapeError("A/B dimensions do not match prior rank");
    double m, v;
    fin1(A(0, 0), B(0), m, v);
    mean = Eigen::VectorXd::Constant(1, m);
    cov = Eigen::MatrixXd::Constant(1, 1, v);
}

MultiVector Prior::sample(std::size_t n, std::uint64_t seed, std::uint64_t stream) const {
    MultiVector out(n, static_cast<std::size_t>(r_));
    switch (kind_) {
        case PriorKind::Gaussian:
            for (std::size_t i = 0; i < n; ++i)
                out(i, 0) = mu_ + rng::normal(seed, stream, i);
            break;
        case PriorKind::Clusters:
            for (std::size_t i = 0; i < n; ++i) {
                double u = rng::uniform(seed, stream, i);
                auto k = std::min<std::size_t>(static_cast<std::size_t>(u * r_), r_ - 1);
                out(i, k) = 1.0;
            }
            break;
        default:
            for (std::size_t i = 0; i < n; ++i) {
                double u = rng::uniform(seed, stream, i);
                double cum = 0;
                double value = atoms_.back().first;
                for (auto [x, w] : atoms_) {
                    cum += w;
                    if (u < cum) {
                        value = x;
                        break;
                    }
                }
                out(i, 0) = value;
            }
    }
    return out;
}

std::string Prior::describe() const {
    switch (kind_) {
        case PriorKind::Gaussian: return "gaussian(mu=" + std::to_string(mu_) + ")";
        case PriorKind::Rademacher: return "rademacher";
        case PriorKind::Bernoulli: return "bernoulli(rho=" + std::to_string(rho_) + ")";
        case PriorKind::Clusters: return "clusters(r=" + std::to_string(r_) + ")";
        case PriorKind::DiscreteScalar: return "discrete";
    }
    return "?";
}

Channel Channel::awgn(double delta) {
    if (!(delta >= 0) || !std::isfinite(delta))
        throw ShapeError("AWGN noise variance must be finite and >= 0");
    Channel c;
    c.kind_ = ChannelKind::Awgn;
    c.delta_ = delta;
    return c;
}

Channel Channel::custom(CustomChannel cc) {
    if (!cc.log_density) throw ShapeError("custom channel needs a log density");
    Channel c;
    c.kind_ = ChannelKind::Custom;
    c.custom_ = std::move(cc);
    return c;
}

double Channel::score_at(double y) const {
    if (kind_ == ChannelKind::Awgn) {
        if (delta_ == 0) throw DegenerateError("score undefined for a noiseless channel");
        return y / delta_;
    }
    const double h = 1e-5;
    return (custom_.log_density(y, h) - custom_.log_density(y, -h)) / (2.0 * h);
}

double Channel::fisher_delta(std::uint64_t seed) const {
    if (kind_ == ChannelKind::Awgn) return delta_;
    if (!custom_.sampler)
        throw DegenerateError("custom channel needs a sampler to estimate Fisher information");
    const std::size_t samples = 100000;
    double acc = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        double y = custom_.sampler(0.0, seed, i);
        double s = score_at(y);
        acc += s * s;
    }
    double fisher = acc / samples;
    if (!(fisher > 0) || !std::isfinite(fisher))
        throw DegenerateError("channel Fisher information is zero or non-finite");
    return 1.0 / fisher;
}

double Channel::sample(double w, std::uint64_t seed, std::uint64_t idx) const {
    if (kind_ == ChannelKind::Awgn) {
        if (delta_ == 0) return w;  // noiseless debug mode
        return w + std::sqrt(delta_) * rng::normal(seed, rng::kNoise, idx);
    }
    if (!custom_.sampler) throw DegenerateError("custom channel has no sampler");
    return custom_.sampler(w, seed, idx);
}

std::string Channel::describe() const {
    if (kind_ == ChannelKind::Awgn) return "awgn(delta=" + std::to_string(delta_) + ")";
    return "custom";
}

double spike_prefactor(std::size_t n, int p) {
    double fact = 1.0;
    for (int k = 2; k <= p - 1; ++k) fact *= k;
    return std::sqrt(fact) / std::pow(static_cast<double>(n), (p - 1) / 2.0);
}

MultiVector sample_signal(const Prior& prior, std::size_t n, std::uint64_t seed) {
    return prior.sample(n, seed);
}

SymmetricTensor spike_tensor(const MultiVector& x0, int p) {
    const std::size_t n = x0.n(), r = x0.r();
    SymmetricTensor w(n, static_cast<std::size_t>(p));
    const double pref = spike_prefactor(n, p);
    double* data = w.mutable_data().data();
    const BinomialTable& binom = w.binomials();
    if (p == 3) {
        // rows (j2,j3) with contiguous inner j1; threads split over j3
        parallel_for_blocks(n, [&](std::size_t b, std::size_t e) {
            std::vector<double> tp(r);
            for (std::size_t j3 = std::max<std::size_t>(b, 2); j3 < e; ++j3) {
                for (std::size_t j2 = 1; j2 < j3; ++j2) {
                    double* row = data + binom(j3, 3) + binom(j2, 2);
                    if (r == 1) {
                        double t = pref * x0(j2, 0) * x0(j3, 0);
                        const double* xv = x0.data();
                        for (std::size_t j1 = 0; j1 < j2; ++j1) row[j1] = t * xv[j1];
                    } else {
                        for (std::size_t k = 0; k < r; ++k) tp[k] = x0(j2, k) * x0(j3, k);
                        for (std::size_t j1 = 0; j1 < j2; ++j1) {
                            double sum = 0;
                            for (std::size_t k = 0; k < r; ++k) sum += x0(j1, k) * tp[k];
                            row[j1] = pref * sum;
                        }
                    }
                }
            }
        });
        return w;
    }
    const std::uint64_t total = w.size();
    parallel_for_blocks(total, [&](std::size_t b, std::size_t e) {
        for_each_tuple_range(n, p, binom, b, e,
                             [&](const std::size_t* idx, std::uint64_t rank) {
                                 double sum = 0;
                                 for (std::size_t k = 0; k < r; ++k) {
                                     double prod = 1.0;
                                     for (int a = 0; a < p; ++a) prod *= x0(idx[a], k);
                                     sum += prod;
                                 }
                                 data[rank] = pref * sum;
                             });
    });
    return w;
}

SymmetricTensor observe(SymmetricTensor w, const Channel& channel, std::uint64_t seed) {
    double* data = w.mutable_data().data();
    const std::uint64_t total = w.size();
    if (channel.kind() == ChannelKind::Awgn) {
        const double sd = std::sqrt(channel.awgn_delta());
        if (sd == 0) return w;
        parallel_for_blocks(total, [&](std::size_t b, std::size_t e) {
            for (std::size_t t = b; t < e; ++t)
                data[t] += sd * rng::normal(seed, rng::kNoise, t);
        });
        return w;
    }
    parallel_for_blocks(total, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) data[t] = channel.sample(data[t], seed, t);
    });
    return w;
}

ScoredTensor score_tensor(SymmetricTensor y, const Channel& channel, std::uint64_t seed) {
    double delta = channel.fisher_delta(seed);
    if (!(delta > 0))
        throw DegenerateError("score reduction needs a finite, nonzero noise level");
    double* data = y.mutable_data().data();
    const std::uint64_t total = y.size();
    if (channel.kind() == ChannelKind::Awgn) {
        const double inv = 1.0 / delta;
        parallel_for_blocks(total, [&](std::size_t b, std::size_t e) {
            for (std::size_t t = b; t < e; ++t) data[t] *= inv;
        });
    } else {
        parallel_for_blocks(total, [&](std::size_t b, std::size_t e) {
            for (std::size_t t = b; t < e; ++t) data[t] = channel.score_at(data[t]);
        });
    }
    return {std::move(y), delta};
}

Instance generate_instance(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.n < static_cast<std::size_t>(spec.p))
        throw ShapeError("instance needs n >= p");
    MultiVector x0 = sample_signal(spec.prior, spec.n, seed);
    SymmetricTensor y = observe(spike_tensor(x0, spec.p), spec.channel, seed);
    return Instance{spec, std::move(x0), std::move(y), seed};
}

}  // namespace tensorspike

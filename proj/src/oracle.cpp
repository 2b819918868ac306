#include "tensorspike/oracle.hpp"

#include <bit>
#include <cmath>

#include "tensorspike/parallel.hpp"
#include "tensorspike/rng.hpp"

namespace tensorspike {

namespace {

// visits every tuple containing site j: fn(rank, prod_rest) where prod_rest
// is the product of x over the other p-1 indices
template <typename Fn>
void for_each_tuple_with(const SymmetricTensor& y, std::size_t j,
                         std::span<const double> x, Fn&& fn) {
    const std::size_t n = y.n(), p = y.p();
    const BinomialTable& binom = y.binomials();
    // recursive colex enumeration of the p-1 companions, largest level first
    struct Rec {
        const BinomialTable* binom;
        std::size_t n, p, j;
        std::span<const double> x;
        Fn* fn;
        void descend(std::size_t d, std::size_t limit, std::uint64_t partial,
                     std::size_t cnt_less, double prod) {
            if (d == 0) {
                const std::size_t below = std::min(limit, j);
                std::uint64_t base = partial + (*binom)(j, cnt_less + 2);
                for (std::size_t e = 0; e < below; ++e)
                    (*fn)(base + e, prod * x[e]);
                if (limit > j + 1) {
                    std::uint64_t base2 = partial + (*binom)(j, cnt_less + 1);
                    for (std::size_t e = j + 1; e < limit; ++e)
                        (*fn)(base2 + (*binom)(e, 2), prod * x[e]);
                }
                return;
            }
            for (std::size_t e = d; e < limit; ++e) {
                if (e == j) continue;
                std::size_t pos = d + 1 + (e > j ? 1 : 0);
                descend(d - 1, e, partial + (*binom)(e, pos),
                        cnt_less + (e < j ? 1 : 0), prod * x[e]);
            }
        }
    };
    Rec rec{&binom, n, p, j, x, &fn};
    rec.descend(p - 2, n, 0, 0, 1.0);
}

double log_sum_exp(std::span<const double> v) {
    double best = -INFINITY;
    for (double t : v) best = std::max(best, t);
    if (!std::isfinite(best)) return best;
    double acc = 0;
    for (double t : v) acc += std::exp(t - best);
    return best + std::log(acc);
}

struct EnumPrior {
    std::vector<double> values;
    std::vector<double> log_probs;
};

EnumPrior enum_prior(const Prior& prior) {
    if (prior.atoms().empty())
        throw CapacityError("exact enumeration needs a discrete scalar prior");
    EnumPrior ep;
    for (auto [x, w] : prior.atoms()) {
        ep.values.push_back(x);
        ep.log_probs.push_back(std::log(w));
    }
    return ep;
}

}  // namespace

double hamiltonian(std::span<const double> x, const SymmetricTensor& y, double delta) {
    const std::size_t n = y.n(), p = y.p();
    if (x.size() != n) throw ShapeError("configuration length does not match tensor");
    if (!(delta > 0)) throw NumericError("hamiltonian needs delta > 0");
    const double pref = spike_prefactor(n, static_cast<int>(p));
    const double* yd = y.data().data();
    double lin = 0, quad = 0;
    for_each_tuple_range(n, p, y.binomials(), 0, y.size(),
                         [&](const std::size_t* idx, std::uint64_t rank) {
                             double prod = 1.0;
                             for (std::size_t a = 0; a < p; ++a) prod *= x[idx[a]];
                             lin += yd[rank] * prod;
                             quad += prod * prod;
                         });
    return (pref * lin - 0.5 * pref * pref * quad) / delta;
}

ExactPosterior exact_posterior(const SymmetricTensor& y, double delta,
                               const Prior& prior) {
    const std::size_t n = y.n();
    if (n < y.p()) throw ShapeError("need n >= p (no observed entries otherwise)");
    EnumPrior ep = enum_prior(prior);
    const std::size_t s = ep.values.size();
    double total_log = n * std::log(static_cast<double>(s));
    if (total_log > 24.0 * std::log(2.0) + 1e-9)
        throw CapacityError("state space exceeds 2^24 configurations");
    const auto total = static_cast<std::size_t>(std::llround(std::pow((double)s, (double)n)));

    ExactPosterior post;
    post.n = n;
    post.p = static_cast<int>(y.p());
    post.delta = delta;
    post.support_size = s;
    post.log_weights.resize(total);

    std::vector<double> x(n, ep.values[0]);

    if (s == 2) {
        // Gray-code walk: one site flips per step, Hamiltonian updated in
        // O(C(n-1,p-1)) via the tuples containing the flipped site
        const double pref = spike_prefactor(n, post.p);
        const double* yd = y.data().data();
        double lin = 0, quad = 0;
        {
            double prod0 = std::pow(ep.values[0], (double)y.p());
            for (std::uint64_t t = 0; t < y.size(); ++t) lin += yd[t];
            lin *= prod0;
            quad = prod0 * prod0 * static_cast<double>(y.size());
        }
        double log_prior = n * ep.log_probs[0];
        auto record = [&](std::size_t code) {
            post.log_weights[code] =
                log_prior + (pref * lin - 0.5 * pref * pref * quad) / delta;
        };
        record(0);
        std::size_t code = 0;
        for (std::size_t step = 1; step < total; ++step) {
            auto bit = static_cast<std::size_t>(std::countr_zero(step));
            code ^= (std::size_t{1} << bit);
            int newi = (code >> bit) & 1;
            double oldv = x[bit], newv = ep.values[newi];
            double dlin = 0, dquad = 0;
            for_each_tuple_with(y, bit, x, [&](std::uint64_t rank, double prod_rest) {
                dlin += yd[rank] * prod_rest;
                dquad += prod_rest * prod_rest;
            });
            lin += dlin * (newv - oldv);
            quad += dquad * (newv * newv - oldv * oldv);
            log_prior += ep.log_probs[newi] - ep.log_probs[1 - newi];
            x[bit] = newv;
            record(code);
        }
    } else {
        // mixed-radix direct recomputation
        std::vector<std::size_t> digit(n, 0);
        for (std::size_t id = 0; id < total; ++id) {
            double lp = 0;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = ep.values[digit[i]];
                lp += ep.log_probs[digit[i]];
            }
            post.log_weights[id] = lp + hamiltonian(x, y, delta);
            std::size_t d = 0;
            while (d < n && ++digit[d] == s) digit[d++] = 0;
        }
    }

    post.log_z = log_sum_exp(post.log_weights);
    post.marginal_means.assign(n, 0.0);
    for (std::size_t id = 0; id < total; ++id) {
        double w = std::exp(post.log_weights[id] - post.log_z);
        if (s == 2) {
            for (std::size_t i = 0; i < n; ++i)
                post.marginal_means[i] += w * ep.values[(id >> i) & 1];
        } else {
            std::size_t rem = id;
            for (std::size_t i = 0; i < n; ++i) {
                post.marginal_means[i] += w * ep.values[rem % s];
                rem /= s;
            }
        }
    }
    return post;
}

namespace {

// direct (non-Gray) posterior means; the independent second route for the
// per-instance Nishimori check
std::vector<double> direct_marginals(const SymmetricTensor& y, double delta,
                                     const EnumPrior& ep) {
    const std::size_t n = y.n();
    const std::size_t s = ep.values.size();
    const auto total = static_cast<std::size_t>(std::llround(std::pow((double)s, (double)n)));
    std::vector<double> lw(total);
    std::vector<double> x(n);
    for (std::size_t id = 0; id < total; ++id) {
        double lp = 0;
        std::size_t rem = id;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t d = rem % s;
            rem /= s;
            x[i] = ep.values[d];
            lp += ep.log_probs[d];
        }
        lw[id] = lp + hamiltonian(x, y, delta);
    }
    double lz = log_sum_exp(lw);
    std::vector<double> m(n, 0.0);
    for (std::size_t id = 0; id < total; ++id) {
        double w = std::exp(lw[id] - lz);
        std::size_t rem = id;
        for (std::size_t i = 0; i < n; ++i) {
            m[i] += w * ep.values[rem % s];
            rem /= s;
        }
    }
    return m;
}

}  // namespace

NishimoriReport nishimori_check(int p, const Prior& prior, double delta,
                                std::size_t n, int trials, std::uint64_t seed) {
    EnumPrior ep = enum_prior(prior);
    PriorMoments mom = prior.moments();
    NishimoriReport rep;
    double sum_mse = 0, sum_xo = 0, sum_d = 0, sum_d2 = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::uint64_t tseed = rng::hash3(seed, rng::kOracle, trial);
        MultiVector x0 = prior.sample(n, tseed);
        SymmetricTensor y =
            observe(spike_tensor(x0, p), Channel::awgn(delta), tseed);
        ExactPosterior post = exact_posterior(y, delta, prior);
        std::vector<double> m2 = direct_marginals(y, delta, ep);

        NishimoriInstance inst;
        for (std::size_t i = 0; i < n; ++i) {
            inst.two_copy += post.marginal_means[i] * post.marginal_means[i];
            inst.planted_side += post.marginal_means[i] * m2[i];
        }
        inst.two_copy /= static_cast<double>(n);
        inst.planted_side /= static_cast<double>(n);
        inst.discrepancy = std::fabs(inst.two_copy - inst.planted_side);
        rep.max_discrepancy = std::max(rep.max_discrepancy, inst.discrepancy);
        rep.instances.push_back(inst);

        double mse = 0, xo = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = x0(i, 0) - post.marginal_means[i];
            mse += d * d;
            xo += x0(i, 0) * post.marginal_means[i];
        }
        mse /= static_cast<double>(n);
        xo /= static_cast<double>(n);
        sum_mse += mse;
        sum_xo += xo;
        double dterm = mse - (mom.sigma_x(0, 0) - xo);
        sum_d += dterm;
        sum_d2 += dterm * dterm;
    }
    rep.mmse_mc = sum_mse / trials;
    rep.identity_rhs = mom.sigma_x(0, 0) - sum_xo / trials;
    double mean_d = sum_d / trials;
    double var_d = std::max(0.0, sum_d2 / trials - mean_d * mean_d);
    rep.identity_stderr = std::sqrt(var_d / trials);
    return rep;
}

ExactFreeEnergy exact_free_energy(std::size_t n, int p, const Prior& prior,
                                  double delta, int trials, std::uint64_t seed) {
    ExactFreeEnergy out;
    out.trials = trials;
    std::vector<double> vals(trials);
    parallel_for_blocks(trials, [&](std::size_t b, std::size_t e) {
        for (std::size_t trial = b; trial < e; ++trial) {
            std::uint64_t tseed = rng::hash3(seed, rng::kOracle, trial + 0x10000);
            MultiVector x0 = prior.sample(n, tseed);
            SymmetricTensor y =
                observe(spike_tensor(x0, p), Channel::awgn(delta), tseed);
            ExactPosterior post = exact_posterior(y, delta, prior);
            vals[trial] = post.log_z / static_cast<double>(n);
        }
    });
    double sum = 0, sumsq = 0;
    for (double v : vals) {
        sum += v;
        sumsq += v * v;
    }
    out.f_n = sum / trials;
    double var = std::max(0.0, sumsq / trials - out.f_n * out.f_n);
    out.stderr = std::sqrt(var / trials);
    return out;
}

}  // namespace tensorspike

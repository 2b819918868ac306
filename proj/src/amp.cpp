#include "tensorspike/amp.hpp"

#include <cmath>

#include "tensorspike/parallel.hpp"
#include "tensorspike/rng.hpp"

namespace tensorspike {

Eigen::MatrixXd overlap(const MultiVector& u, const MultiVector& v) {
    if (u.n() != v.n()) throw ShapeError("overlap needs equal lengths");
    const auto n = u.n();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(u.r(), v.r());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < u.r(); ++a)
            for (std::size_t b = 0; b < v.r(); ++b) acc(a, b) += u(i, a) * v(i, b);
    return acc / static_cast<double>(n);
}

AmpState amp_init(AmpInit mode, const ModelSpec& spec, std::uint64_t seed,
                  const MultiVector* truth, const MultiVector* custom) {
    const std::size_t n = spec.n;
    const auto r = static_cast<std::size_t>(spec.rank());
    PriorMoments mom = spec.prior.moments();

    AmpState st;
    st.xhat = MultiVector(n, r);
    switch (mode) {
        case AmpInit::Random:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < r; ++c)
                    st.xhat(i, c) =
                        mom.mean(c) + 1e-3 * rng::normal(seed, rng::kAmpInit, i * r + c);
            break;
        case AmpInit::Informative:
            if (!truth) throw ShapeError("informative initialization needs the truth");
            st.xhat = *truth;
            break;
        case AmpInit::Custom:
            if (!custom) throw ShapeError("custom initialization needs a state");
            if (custom->n() != n || custom->r() != r)
                throw ShapeError("custom initialization has the wrong shape");
            st.xhat = *custom;
            break;
    }
    st.xhat_prev = st.xhat;
    st.sigma.resize(n * r * r);
    for (std::size_t i = 0; i < n; ++i) st.sigma_at(i) = mom.sigma_x;
    st.a_mat = Eigen::MatrixXd::Zero(r, r);
    st.b_vecs = MultiVector(n, r);
    return st;
}

namespace {

Eigen::MatrixXd hadamard_pow(const Eigen::MatrixXd& m, int k) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(m.rows(), m.cols());
    for (int j = 0; j < k; ++j) out = out.cwiseProduct(m);
    return out;
}

}  // namespace

void amp_step(AmpState& state, const SymmetricTensor& s, double delta,
              const Prior& prior, double damping) {
    const std::size_t n = state.n();
    const auto r = static_cast<std::size_t>(prior.rank());
    const int p = static_cast<int>(s.p());
    if (s.n() != n) throw ShapeError("score tensor does not match the AMP state");
    if (state.r() != r) throw ShapeError("prior rank does not match the AMP state");
    if (!(delta > 0)) throw NumericError("AMP needs delta > 0");
    if (!(damping >= 0.0 && damping < 1.0)) throw NumericError("damping must be in [0,1)");

    // Onsager factor: (p-1)/delta * [ (1/N) sum_j sigma_j o (xhat.xhat_prev)^{o(p-2)} ]
    Eigen::MatrixXd ov_cp = overlap(state.xhat, state.xhat_prev);
    Eigen::MatrixXd mean_sigma = Eigen::MatrixXd::Zero(r, r);
    for (std::size_t i = 0; i < n; ++i) mean_sigma += state.sigma_at(i);
    mean_sigma /= static_cast<double>(n);
    Eigen::MatrixXd onsager =
        (p - 1.0) / delta * mean_sigma.cwiseProduct(hadamard_pow(ov_cp, p - 2));

    state.b_vecs = contract_leave_one(s, state.xhat, spike_prefactor(n, p));
    parallel_for_blocks(n, [&](std::size_t ib, std::size_t ie) {
        Eigen::VectorXd prev(r), corr(r);
        for (std::size_t i = ib; i < ie; ++i) {
            for (std::size_t c = 0; c < r; ++c) prev(c) = state.xhat_prev(i, c);
            corr = onsager * prev;
            for (std::size_t c = 0; c < r; ++c) state.b_vecs(i, c) -= corr(c);
        }
    });

    state.a_mat = hadamard_pow(overlap(state.xhat, state.xhat), p - 1) / delta;
    if (!state.b_vecs.all_finite() || !state.a_mat.allFinite())
        throw DivergenceError("AMP messages diverged", state.iter);

    MultiVector xnew(n, r);
    if (r == 1) {
        const double a = state.a_mat(0, 0);
        parallel_for_blocks(n, [&](std::size_t ib, std::size_t ie) {
            for (std::size_t i = ib; i < ie; ++i) {
                double mean, var;
                prior.fin1(a, state.b_vecs(i, 0), mean, var);
                xnew(i, 0) = mean;
                state.sigma[i] = var;
            }
        });
    } else {
        parallel_for_blocks(n, [&](std::size_t ib, std::size_t ie) {
            Eigen::VectorXd b(r), mean(r);
            Eigen::MatrixXd cov(r, r);
            for (std::size_t i = ib; i < ie; ++i) {
                for (std::size_t c = 0; c < r; ++c) b(c) = state.b_vecs(i, c);
                prior.fin(state.a_mat, b, mean, cov);
                for (std::size_t c = 0; c < r; ++c) xnew(i, c) = mean(c);
                state.sigma_at(i) = cov;
            }
        });
    }
    if (damping > 0) {
        for (std::size_t k = 0; k < n * r; ++k)
            xnew.data()[k] = (1.0 - damping) * xnew.data()[k] +
                             damping * state.xhat.data()[k];
    }
    if (!xnew.all_finite())
        throw DivergenceError("AMP estimate diverged", state.iter);

    state.xhat_prev = std::move(state.xhat);
    state.xhat = std::move(xnew);
    ++state.iter;
}

AmpResult amp_run_scored(const SymmetricTensor& s, double delta, const Prior& prior,
                         AmpState state, const AmpOptions& opts,
                         const MultiVector* truth) {
    const std::size_t n = state.n();
    AmpResult res;
    if (truth && opts.track_overlap)
        res.overlap_trajectory.push_back(overlap(state.xhat, *truth));
    for (int t = 0; t < opts.max_iter; ++t) {
        try {
            amp_step(state, s, delta, prior, opts.damping);
        } catch (const DivergenceError&) {
            res.state = std::move(state);
            res.iterations = res.state.iter;
            throw;
        }
        if (truth && opts.track_overlap)
            res.overlap_trajectory.push_back(overlap(state.xhat, *truth));
        double change = 0;
        for (std::size_t k = 0; k < state.xhat.size(); ++k) {
            double d = state.xhat.data()[k] - state.xhat_prev.data()[k];
            change += d * d;
        }
        change /= static_cast<double>(n);
        if (change < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.iterations = state.iter;
    if (truth) {
        res.final_overlap = overlap(state.xhat, *truth);
        double err = 0;
        for (std::size_t k = 0; k < state.xhat.size(); ++k) {
            double d = truth->data()[k] - state.xhat.data()[k];
            err += d * d;
        }
        res.mse = err / static_cast<double>(n);
        Eigen::MatrixXd emp_second = overlap(*truth, *truth);
        Eigen::MatrixXd self = overlap(state.xhat, state.xhat);
        res.mse_trace = (emp_second + self - 2.0 * res.final_overlap).trace();
    }
    res.state = std::move(state);
    return res;
}

AmpResult amp_run(const Instance& instance, AmpInit init, const AmpOptions& opts,
                  std::uint64_t init_seed) {
    ScoredTensor sc = score_tensor(instance.y, instance.spec.channel, instance.seed);
    AmpState st = amp_init(init, instance.spec,
                           init_seed ? init_seed : instance.seed, &instance.x0);
    return amp_run_scored(sc.s, sc.delta, instance.spec.prior, std::move(st), opts,
                          &instance.x0);
}

}  // namespace tensorspike

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tensorspike/amp.hpp"
#include "tensorspike/rng.hpp"

using namespace tensorspike;

namespace {

// Straightforward dense reference: the update equations written directly with
// at() lookups and Eigen small-matrix algebra, no shared kernels.
struct NaiveAmp {
    std::size_t n, r;
    int p;
    std::vector<Eigen::VectorXd> xhat, xhat_prev, b;
    std::vector<Eigen::MatrixXd> sigma;
    Eigen::MatrixXd a;

    NaiveAmp(const AmpState& st, int p_) : n(st.n()), r(st.r()), p(p_) {
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd v(r);
            for (std::size_t c = 0; c < r; ++c) v(c) = st.xhat(i, c);
            xhat.push_back(v);
            xhat_prev.push_back(v);
            sigma.push_back(st.sigma_at(i));
            b.push_back(Eigen::VectorXd::Zero(r));
        }
        a = Eigen::MatrixXd::Zero(r, r);
    }

    Eigen::MatrixXd had_pow(const Eigen::MatrixXd& m, int k) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Ones(r, r);
        for (int j = 0; j < k; ++j) out = out.cwiseProduct(m);
        return out;
    }

    void step(const SymmetricTensor& s, double delta, const Prior& prior,
              double damping) {
        Eigen::MatrixXd ov = Eigen::MatrixXd::Zero(r, r);
        Eigen::MatrixXd msig = Eigen::MatrixXd::Zero(r, r);
        for (std::size_t i = 0; i < n; ++i) {
            ov += xhat[i] * xhat_prev[i].transpose();
            msig += sigma[i];
        }
        ov /= static_cast<double>(n);
        msig /= static_cast<double>(n);
        Eigen::MatrixXd onsager =
            (p - 1.0) / delta * msig.cwiseProduct(had_pow(ov, p - 2));
        double pref = spike_prefactor(n, p);

        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(r);
            std::vector<std::size_t> pick(p - 1);
            std::function<void(std::size_t, std::size_t)> rec =
                [&](std::size_t level, std::size_t start) {
                    if (level == static_cast<std::size_t>(p - 1)) {
                        std::vector<std::size_t> full(pick.begin(), pick.end());
                        full.push_back(i);
                        Eigen::VectorXd prod = Eigen::VectorXd::Ones(r);
                        for (std::size_t d = 0; d + 1 < static_cast<std::size_t>(p);
                             ++d)
                            prod = prod.cwiseProduct(xhat[pick[d]]);
                        acc += s.at(full) * prod;
                        return;
                    }
                    for (std::size_t e = start; e < n; ++e) {
                        if (e == i) continue;
                        pick[level] = e;
                        rec(level + 1, e + 1);
                    }
                };
            rec(0, 0);
            b[i] = pref * acc - onsager * xhat_prev[i];
        }

        Eigen::MatrixXd self = Eigen::MatrixXd::Zero(r, r);
        for (std::size_t i = 0; i < n; ++i) self += xhat[i] * xhat[i].transpose();
        self /= static_cast<double>(n);
        a = had_pow(self, p - 1) / delta;

        for (std::size_t i = 0; i < n; ++i) xhat_prev[i] = xhat[i];
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd mean(r);
            Eigen::MatrixXd cov(r, r);
            prior.fin(a, b[i], mean, cov);
            xhat[i] = (1.0 - damping) * mean + damping * xhat_prev[i];
            sigma[i] = cov;
        }
    }
};

SymmetricTensor random_tensor(std::size_t n, std::size_t p, std::uint64_t seed) {
    SymmetricTensor t(n, p);
    auto& d = t.mutable_data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = rng::normal(seed, 88, k);
    return t;
}

}  // namespace

TEST_CASE("amp_step equals the naive dense reference to 1e-12") {
    struct Case {
        Prior prior;
        int p;
        std::size_t n;
    };
    std::vector<Case> cases = {
        {Prior::gaussian(0.2), 2, 7},  {Prior::gaussian(0.2), 3, 6},
        {Prior::gaussian(0.0), 4, 7},  {Prior::rademacher(), 2, 8},
        {Prior::rademacher(), 3, 8},   {Prior::rademacher(), 4, 6},
        {Prior::bernoulli(0.3), 3, 8}, {Prior::bernoulli(0.3), 4, 7},
        {Prior::clusters(2), 3, 8},    {Prior::clusters(3), 3, 6},
        {Prior::clusters(2), 4, 6},
    };
    for (const auto& cs : cases) {
        CAPTURE(cs.p);
        CAPTURE(cs.n);
        SymmetricTensor s = random_tensor(cs.n, cs.p, 100 + cs.p);
        ModelSpec spec{cs.n, cs.p, cs.prior, Channel::awgn(0.4)};
        AmpState st = amp_init(AmpInit::Random, spec, 5);
        NaiveAmp ref(st, cs.p);
        const double delta = 0.4, damping = 0.25;
        for (int t = 0; t < 3; ++t) {
            amp_step(st, s, delta, cs.prior, damping);
            ref.step(s, delta, cs.prior, damping);
        }
        const auto r = st.r();
        for (std::size_t i = 0; i < cs.n; ++i) {
            for (std::size_t c = 0; c < r; ++c) {
                CHECK(st.xhat(i, c) == doctest::Approx(ref.xhat[i](c)).epsilon(1e-12));
                CHECK(st.b_vecs(i, c) == doctest::Approx(ref.b[i](c)).epsilon(1e-12));
            }
            Eigen::MatrixXd sg = st.sigma_at(i);
            for (std::size_t c = 0; c < r; ++c)
                for (std::size_t d = 0; d < r; ++d)
                    CHECK(sg(c, d) ==
                          doctest::Approx(ref.sigma[i](c, d)).epsilon(1e-12));
        }
        for (std::size_t c = 0; c < r; ++c)
            for (std::size_t d = 0; d < r; ++d)
                CHECK(st.a_mat(c, d) == doctest::Approx(ref.a(c, d)).epsilon(1e-12));
    }
}

TEST_CASE("p=2 reduces to the low-rank matrix AMP") {
    const std::size_t n = 12;
    SymmetricTensor s = random_tensor(n, 2, 9);
    Prior prior = Prior::rademacher();
    ModelSpec spec{n, 2, prior, Channel::awgn(0.7)};
    AmpState st = amp_init(AmpInit::Random, spec, 3);

    // independently coded scalar matrix AMP on the dense symmetric matrix
    Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) mat(i, j) = mat(j, i) = s.at({i, j});
    Eigen::VectorXd x(n), xp(n), sig(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i) = st.xhat(i, 0);
        sig(i) = 1.0;
    }
    xp = x;
    const double delta = 0.7;
    for (int t = 0; t < 4; ++t) {
        double ms = sig.mean();
        Eigen::VectorXd bb = mat * x / std::sqrt((double)n) - (ms / delta) * xp;
        xp = x;
        for (std::size_t i = 0; i < n; ++i) {
            x(i) = std::tanh(bb(i));
            sig(i) = 1.0 - x(i) * x(i);
        }
        amp_step(st, s, delta, prior, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i)
        CHECK(st.xhat(i, 0) == doctest::Approx(x(i)).epsilon(1e-10));
}

TEST_CASE("initialization modes") {
    ModelSpec spec{50, 3, Prior::rademacher(), Channel::awgn(0.5)};
    MultiVector truth = sample_signal(spec.prior, 50, 1);

    AmpState inf = amp_init(AmpInit::Informative, spec, 2, &truth);
    Eigen::MatrixXd m0 = overlap(inf.xhat, truth);
    CHECK(m0(0, 0) == doctest::Approx(1.0));  // X0.X0 = Sigma_X exactly here

    AmpState rnd = amp_init(AmpInit::Random, spec, 2);
    for (std::size_t i = 0; i < 50; ++i)
        CHECK(std::fabs(rnd.xhat(i, 0)) < 1e-2);  // prior mean 0 + 1e-3 noise
    AmpState rnd2 = amp_init(AmpInit::Random, spec, 2);
    CHECK(std::equal(rnd.xhat.data(), rnd.xhat.data() + 50, rnd2.xhat.data()));

    CHECK_THROWS_AS(amp_init(AmpInit::Informative, spec, 2), ShapeError);
    CHECK_THROWS_AS(amp_init(AmpInit::Custom, spec, 2), ShapeError);
}

TEST_CASE("zero score tensor leaves only the Onsager reaction") {
    const std::size_t n = 10;
    SymmetricTensor s(n, 3);  // all-zero
    Prior prior = Prior::rademacher();
    ModelSpec spec{n, 3, prior, Channel::awgn(0.5)};
    AmpState st = amp_init(AmpInit::Random, spec, 7);
    Eigen::MatrixXd ov = overlap(st.xhat, st.xhat_prev);
    double onsager = (2.0 / 0.5) * 1.0 * ov(0, 0);  // sigma starts at Sigma_X = 1
    std::vector<double> expect(n);
    for (std::size_t i = 0; i < n; ++i)
        expect[i] = std::tanh(-onsager * st.xhat_prev(i, 0));
    amp_step(st, s, 0.5, prior, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(st.xhat(i, 0) == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("permutation equivariance") {
    const std::size_t n = 20;
    Prior prior = Prior::rademacher();
    ModelSpec spec{n, 3, prior, Channel::awgn(0.3)};
    Instance inst = generate_instance(spec, 4);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n;  // a bijection

    SymmetricTensor y2(n, 3);
    {
        std::vector<std::size_t> idx(3);
        colex_first(3, idx.data());
        do {
            std::vector<std::size_t> mapped = {perm[idx[0]], perm[idx[1]],
                                               perm[idx[2]]};
            std::sort(mapped.begin(), mapped.end());
            y2.mutable_data()[y2.rank_of(mapped)] = inst.y.at(
                std::span<const std::size_t>(idx.data(), 3));
        } while (colex_next(n, 3, idx.data()));
    }

    MultiVector init(n, 1), init2(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        init(i, 0) = 0.001 * rng::normal(9, 9, i);
        init2(perm[i], 0) = init(i, 0);
    }
    ScoredTensor s1 = score_tensor(inst.y, spec.channel);
    ScoredTensor s2 = score_tensor(std::move(y2), spec.channel);
    AmpState a = amp_init(AmpInit::Custom, spec, 1, nullptr, &init);
    AmpState b = amp_init(AmpInit::Custom, spec, 1, nullptr, &init2);
    for (int t = 0; t < 5; ++t) {
        amp_step(a, s1.s, s1.delta, prior, 0.0);
        amp_step(b, s2.s, s2.delta, prior, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i)
        CHECK(a.xhat(i, 0) == doctest::Approx(b.xhat(perm[i], 0)).epsilon(1e-12));
}

TEST_CASE("divergence raises with the iteration index") {
    const std::size_t n = 8;
    SymmetricTensor s(n, 3);
    for (auto& v : s.mutable_data()) v = 1e308;
    ModelSpec spec{n, 3, Prior::gaussian(0.0), Channel::awgn(1.0)};
    AmpState st = amp_init(AmpInit::Random, spec, 1);
    // the gaussian denoiser amplifies the overflow within a few sweeps
    try {
        for (int t = 0; t < 4; ++t) amp_step(st, s, 1.0, spec.prior, 0.0);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration >= 0);
        CHECK(e.iteration < 4);
    }
}

TEST_CASE("MSE computed two ways agrees to 1e-10") {
    ModelSpec spec{60, 3, Prior::bernoulli(0.3), Channel::awgn(0.05)};
    Instance inst = generate_instance(spec, 11);
    AmpOptions opts;
    opts.max_iter = 50;
    AmpResult res = amp_run(inst, AmpInit::Informative, opts);
    CHECK(std::fabs(res.mse - res.mse_trace) < 1e-10);
    CHECK(res.mse >= 0);
}

TEST_CASE("high-noise limit: overlap collapses to the prior mean squared") {
    ModelSpec spec{1000, 3, Prior::gaussian(0.2), Channel::awgn(1000.0)};
    Instance inst = generate_instance(spec, 21);
    AmpOptions opts;
    AmpResult res = amp_run(inst, AmpInit::Random, opts);
    CHECK(res.converged);
    CHECK(std::fabs(res.final_overlap(0, 0) - 0.04) < 0.01);
}

TEST_CASE("near-noiseless recovery from informative init") {
    ModelSpec spec{500, 3, Prior::rademacher(), Channel::awgn(1e-4)};
    Instance inst = generate_instance(spec, 31);
    AmpOptions opts;
    AmpResult res = amp_run(inst, AmpInit::Informative, opts);
    CHECK(res.converged);
    CHECK(res.mse < 0.01);
}

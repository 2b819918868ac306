#include <doctest.h>

#include <cmath>

#include "tensorspike/state_evolution.hpp"

using namespace tensorspike;

namespace {

Eigen::MatrixXd ansatz(double b, int r) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(r, r, (1.0 - b) / (r * (double)r));
    m.diagonal().array() += b / r;
    return m;
}

double taylor_mr(double x, int r) {
    return x / (r * (double)r) + x * x * (r - 4.0) / (2.0 * std::pow(r, 4));
}

}  // namespace

TEST_CASE("M_r endpoints") {
    Integrator gh = Integrator::gauss_hermite(24);
    for (int r : {2, 3, 4}) {
        CHECK(cluster_mr(0.0, r, gh) == 0.0);
        CHECK(cluster_mr(5000.0, r, gh) == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK_THROWS_AS(cluster_mr(-0.1, 3, gh), NumericError);
    CHECK_THROWS_AS(cluster_mr(0.1, 1, gh), ShapeError);
}

TEST_CASE("M_r matches its Taylor expansion by monte carlo") {
    for (int r : {2, 3, 4}) {
        for (double x : {0.005, 0.01, 0.02}) {
            double se = 0;
            Integrator mc = Integrator::monte_carlo(2000000, 11);
            double got = cluster_mr(x, r, mc, &se);
            CHECK(se > 0);
            CHECK(std::fabs(got - taylor_mr(x, r)) <= 3 * se + std::pow(x, 3));
        }
    }
}

TEST_CASE("M_r: gauss-hermite agrees with monte carlo") {
    Integrator gh = Integrator::gauss_hermite(24);
    for (int r : {2, 3}) {
        for (double x : {0.05, 0.8, 4.0}) {
            double se = 0;
            Integrator mc = Integrator::monte_carlo(1000000, 5);
            double a = cluster_mr(x, r, gh);
            double b = cluster_mr(x, r, mc, &se);
            CHECK(std::fabs(a - b) <= 3 * se + 1e-10);
        }
    }
}

TEST_CASE("scalar cluster SE: b = 0 is always a fixed point, small-b growth") {
    Integrator gh = Integrator::gauss_hermite(24);
    for (int p : {2, 3, 4}) {
        for (int r : {2, 3}) {
            CHECK(cluster_se_step(0.0, 0.1, p, r, gh) == 0.0);
            // growth factor (p-1)/(delta r^{2p-2}) = 1/ratio at delta = ratio*delta_c
            double dc = (p - 1.0) / std::pow(r, 2 * p - 2);
            for (double ratio : {0.5, 1.0, 2.0})
                CHECK(cluster_growth_rate(ratio * dc, p, r, gh) ==
                      doctest::Approx(1.0 / ratio).epsilon(1e-5));
        }
    }
}

TEST_CASE("b-ansatz is closed under the full-matrix SE") {
    const int r = 3, p = 3;
    const double delta = 0.8 * (p - 1.0) / std::pow(r, 2 * p - 2);
    Integrator mc = Integrator::monte_carlo(400000, 3);
    Prior prior = Prior::clusters(r);
    for (double b : {0.2, 0.5, 0.8}) {
        double se_full = 0;
        Eigen::MatrixXd next = se_step(ansatz(b, r), delta, p, prior, mc, &se_full);
        // equal diagonal entries, equal off-diagonal entries
        double diag0 = next(0, 0);
        double off0 = next(0, 1);
        for (int i = 0; i < r; ++i) {
            CHECK(std::fabs(next(i, i) - diag0) <= 4 * se_full + 1e-12);
            for (int j = 0; j < r; ++j)
                if (i != j) CHECK(std::fabs(next(i, j) - off0) <= 4 * se_full + 1e-12);
        }
        // the induced ansatz parameter matches the scalar recursion
        double se_b = 0;
        double b_next = cluster_se_step(b, delta, p, r, mc, &se_b);
        double b_from_full = (diag0 - off0) * r;  // b/r + (1-b)/r^2 minus (1-b)/r^2
        CHECK(std::fabs(b_from_full - b_next) <= 3 * (r * se_full + se_b) + 1e-10);
    }
}

TEST_CASE("parametric fixed-point curve") {
    const int p = 3, r = 3;
    Integrator gh = Integrator::gauss_hermite(24);
    for (double x : {0.05, 0.5, 2.0}) {
        ClusterCurvePoint pt = cluster_parametric_curve(x, p, r, gh);
        // (m(x), Delta(x)) really is a fixed point of the scalar recursion
        double back = cluster_se_step(pt.m, pt.delta, p, r, gh);
        CHECK(back == doctest::Approx(pt.m).epsilon(1e-9));
        CHECK(pt.stable != -1);
    }

    // slope of Delta(x) at x -> 0: (p-1)/(2 r^{2p}) (pr - 2p - r)
    for (int pp : {3, 4}) {
        for (int rr : {2, 3}) {
            double x0 = 1e-3;
            ClusterCurvePoint a = cluster_parametric_curve(x0, pp, rr, gh);
            ClusterCurvePoint b = cluster_parametric_curve(2 * x0, pp, rr, gh);
            double slope = (b.delta - a.delta) / x0;
            double expected =
                (pp - 1.0) / (2.0 * std::pow(rr, 2 * pp)) * (-2.0 * pp - rr + pp * rr);
            CHECK(slope == doctest::Approx(expected).epsilon(0.02));
        }
    }

    // two clusters, p=3: stable branch near b=0 (second-order transition)
    ClusterCurvePoint low = cluster_parametric_curve(0.02, 3, 2, gh);
    CHECK(low.stable == 1);
}

#pragma once

#include <array>
#include <string>
#include <vector>

#include "tensorspike/free_energy.hpp"
#include "tensorspike/state_evolution.hpp"

namespace tensorspike {

enum class PhaseLabel { Easy, Hard, ImpossibleToImprove };
std::string to_string(PhaseLabel label);

struct BisectionTrace {
    std::vector<std::array<double, 2>> brackets;
    int steps = 0;
};

struct ThresholdSet {
    double delta_c = 0;
    double delta_alg = 0;
    double delta_dyn = 0;
    double delta_it = 0;
    std::string method = "bisection";
    double tolerance = 1e-6;
    BisectionTrace trace_c, trace_alg, trace_dyn, trace_it;
};

// easy: AMP branch attains the global maximizer; hard: it does not;
// impossible-to-improve: the maximizer is the random-guess overlap.
PhaseLabel classify(double delta, int p, const Prior& prior, const Integrator& integ);

// sup{Delta : m*(Delta) > E[x]^2 + 1e-6}, bisected to rel_tol
double find_delta_it(int p, const Prior& prior, const Integrator& integ,
                     std::pair<double, double> bracket, double rel_tol = 1e-6,
                     BisectionTrace* trace = nullptr);

// boundary of the hard phase from below (0 when the informative branch
// persists down to the 1e-8 floor)
double find_delta_alg(int p, const Prior& prior, const Integrator& integ,
                      std::pair<double, double> bracket, double rel_tol = 1e-6,
                      BisectionTrace* trace = nullptr);

// instability threshold of the uninformative branch
double find_delta_c(int p, const Prior& prior, const Integrator& integ,
                    std::pair<double, double> bracket, double rel_tol = 1e-6,
                    BisectionTrace* trace = nullptr);

// spinodal: largest Delta with two distinct SE fixed points
double find_delta_dyn(int p, const Prior& prior, const Integrator& integ,
                      std::pair<double, double> bracket, double rel_tol = 1e-6,
                      BisectionTrace* trace = nullptr);

// All four thresholds with default brackets [1e-6, 10] and automatic
// expansion; degenerate cases resolved by the no-hard-phase convention
// delta_alg = delta_it = delta_c.
ThresholdSet compute_thresholds(int p, const Prior& prior, const Integrator& integ,
                                double rel_tol = 1e-6);

struct GaussianThresholds {
    double x_alg = 0, x_dyn = 0;
    double delta_alg = 0, delta_dyn = 0;
};
// Closed forms for the unit-variance Gaussian prior; throws when the
// discriminant (p-2)^2 - 4 mu^2 (p-1) is negative (curves have merged).
GaussianThresholds gaussian_closed_thresholds(double mu, int p);

struct TriCriticalPoint {
    double param = 0;  // mu or rho
    double delta = 0;
    std::string kind;  // gaussian_closed_form | numeric
};
TriCriticalPoint tri_critical(int p, const std::string& family, bool numeric = false);

struct FirstOrderReport {
    int value = 0;  // p r - 2 p - r
    std::string label;  // first_order | second_order | marginal
};
FirstOrderReport first_order_discriminant(int p, int r);

struct SweepRow {
    double param = 0;
    double delta = 0;  // NaN for threshold-only rows
    std::string label;
    double delta_c = 0, delta_alg = 0, delta_dyn = 0, delta_it = 0;
};
std::vector<SweepRow> sweep_phase_diagram(const std::string& family, int p,
                                          const std::vector<double>& params,
                                          const std::vector<double>& deltas,
                                          const Integrator& integ,
                                          double rel_tol = 1e-6);

struct Table1Row {
    std::string prior;
    int p = 0;
    std::string quantity;
    double computed = 0;
    double paper = 0;  // NaN when the paper leaves the cell blank
    double rel_dev = 0;
};
std::vector<Table1Row> table1();

}  // namespace tensorspike

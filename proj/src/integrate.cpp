#include "tensorspike/integrate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>

#include "tensorspike/errors.hpp"

namespace tensorspike {

Integrator Integrator::parse(const std::string& text) {
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = s.find(':', start);
            out.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    };
    auto parts = split(text);
    if (parts[0] == "gh") {
        int nodes = parts.size() > 1 ? std::stoi(parts[1]) : 127;
        if (nodes < 3) throw ShapeError("gauss-hermite needs >= 3 nodes");
        return gauss_hermite(nodes);
    }
    if (parts[0] == "mc") {
        std::size_t samples = parts.size() > 1 ? std::stoull(parts[1]) : 100000;
        if (samples < 1000) throw ShapeError("monte-carlo needs >= 1000 samples");
        std::uint64_t seed = parts.size() > 2 ? std::stoull(parts[2]) : 1;
        return monte_carlo(samples, seed);
    }
    throw ShapeError("unknown integrator '" + text + "' (want gh:N or mc:N)");
}

std::string Integrator::describe() const {
    if (kind == Kind::GaussHermite) return "gh:" + std::to_string(nodes);
    return "mc:" + std::to_string(samples) + ":" + std::to_string(seed);
}

const std::vector<std::pair<double, double>>& gauss_hermite_points(int nodes) {
    static std::mutex mu;
    static std::map<int, std::vector<std::pair<double, double>>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(nodes);
    if (it != cache.end()) return it->second;
    if (nodes < 3) throw ShapeError("gauss-hermite needs >= 3 nodes");

    // Golub-Welsch on the Hermite Jacobi matrix (weight e^{-t^2}),
    // then substitute z = sqrt(2) t and normalize weights to sum 1.
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nodes, nodes);
    for (int k = 1; k < nodes; ++k) {
        double off = std::sqrt(k / 2.0);
        jac(k, k - 1) = off;
        jac(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    if (es.info() != Eigen::Success)
        throw NumericError("gauss-hermite eigendecomposition failed");
    std::vector<std::pair<double, double>> pts(nodes);
    double total = 0;
    for (int i = 0; i < nodes; ++i) {
        double w = es.eigenvectors()(0, i);
        w = w * w;
        pts[i] = {std::sqrt(2.0) * es.eigenvalues()(i), w};
        total += w;
    }
    for (auto& [z, w] : pts) w /= total;
    return cache.emplace(nodes, std::move(pts)).first->second;
}

}  // namespace tensorspike

#pragma once

// Gaussian rules on [0, 1] with weight x^b (b > -1), via Golub-Welsch on the Jacobi matrix.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "conemoduli/errors.hpp"

namespace conemoduli::gauss {

struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline Rule build_jacobi01(int n, double b) {
    // Jacobi weight (1-t)^a (1+t)^b on [-1, 1] with a = 0, then mapped to x = (1+t)/2.
    const double a = 0.0;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        const double s = 2.0 * k + a + b;
        J(k, k) = (k == 0) ? (b - a) / (a + b + 2.0) : (b * b - a * a) / (s * (s + 2.0));
        if (k + 1 < n) {
            const double kk = k + 1.0;
            const double s1 = 2.0 * kk + a + b;
            const double beta = 4.0 * kk * (kk + a) * (kk + b) * (kk + a + b) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0));
            J(k, k + 1) = J(k + 1, k) = std::sqrt(beta);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    const double log_mu0 = (a + b + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                           std::lgamma(a + b + 2.0);
    const double mu0 = std::exp(log_mu0);
    const double to_unit = std::pow(2.0, -b - 1.0);
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        r.nodes[i] = 0.5 * (1.0 + es.eigenvalues()(i));
        r.weights[i] = mu0 * v0 * v0 * to_unit;
    }
    return r;
}

}  // namespace detail

/// Rule with sum_i w_i g(x_i) ~ int_0^1 x^b g(x) dx, exact for polynomials of degree 2n-1.
inline std::shared_ptr<const Rule> jacobi01(int n, double b) {
    if (n < 1) throw Error(ErrorCode::ConfigInvalid, "Gauss rule needs at least one node");
    if (!(b > -1.0)) throw Error(ErrorCode::NonIntegrableProfile, "Jacobi weight exponent must exceed -1");
    static std::mutex mu;
    static std::map<std::pair<int, double>, std::shared_ptr<const Rule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(n, b);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto rule = std::make_shared<const Rule>(detail::build_jacobi01(n, b));
    cache.emplace(key, rule);
    return rule;
}

inline std::shared_ptr<const Rule> legendre01(int n) { return jacobi01(n, 0.0); }

}  // namespace conemoduli::gauss

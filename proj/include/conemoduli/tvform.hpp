#pragma once

// Complex hyperbolic side: the area potential A(u), its derivatives, and the Gram matrix of
// -d d-bar log A in the free coordinates u_2..u_{n-2}.

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "conemoduli/domain.hpp"
#include "conemoduli/quadrature.hpp"

namespace conemoduli {

struct PotentialReport {
    double area = 0.0;
    double area_err = 0.0;
    Eigen::VectorXcd grad;  // dA/du_j, j = 2..n-2
    Eigen::VectorXd grad_err;
    bool converged = true;
};

inline void check_compatible(const AngleVector& alpha, const ModuliPoint& u) {
    if (alpha.n() != u.n()) throw Error(ErrorCode::ConfigInvalid, "angle vector and moduli point have different n");
}

/// prod_{l <= n-2} |z - u_l|^{-2 alpha_l}
inline double density(const AngleVector& alpha, const ModuliPoint& u, cplx z) {
    const auto& p = u.finite_punctures();
    double log_d = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) {
        const double r = std::abs(z - p[l]);
        if (r < u.min_separation() / 10.0) throw Error(ErrorCode::EvalAtPole, "density evaluated at a puncture");
        log_d -= 2.0 * alpha[l] * std::log(r);
    }
    return std::exp(log_d);
}

inline double density_unchecked(const AngleVector& alpha, const std::vector<cplx>& p, cplx z) {
    double log_d = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) log_d -= 2.0 * alpha[l] * std::log(std::abs(z - p[l]));
    return std::exp(log_d);
}

/// Singularity profile of the density alone.
inline SingularityProfile density_profile(const AngleVector& alpha, const ModuliPoint& u) {
    SingularityProfile prof;
    const auto& p = u.finite_punctures();
    for (std::size_t l = 0; l < p.size(); ++l) prof.add(p[l], -2.0 * alpha[l]);
    prof.add_far(2.0 * alpha.at_infinity() - 4.0);
    return prof;
}

inline QuadResult area(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& spec) {
    check_compatible(alpha, u);
    const auto& p = u.finite_punctures();
    return integrate([&](cplx z) { return cplx(density_unchecked(alpha, p, z)); }, density_profile(alpha, u), spec);
}

/// dA/du_j for free index j (puncture index j + 2).
inline QuadResult grad_area_entry(const AngleVector& alpha, const ModuliPoint& u, std::size_t free_index,
                                  const QuadratureSpec& spec) {
    const std::size_t j = free_index + 2;
    const auto& p = u.finite_punctures();
    const cplx uj = p.at(j);
    auto prof = density_profile(alpha, u);
    prof.add(uj, -1.0, -1).add_far(-1.0, -1);
    auto r = integrate([&](cplx z) { return density_unchecked(alpha, p, z) / (z - uj); }, prof, spec);
    r.value *= alpha[j];
    r.error *= alpha[j];
    r.l1 *= alpha[j];
    return r;
}

inline PotentialReport grad_area(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& spec) {
    check_compatible(alpha, u);
    PotentialReport rep;
    const auto a = area(alpha, u, spec);
    rep.area = a.value.real();
    rep.area_err = a.error;
    rep.converged = a.converged;
    const auto d = u.dim();
    rep.grad.resize(d);
    rep.grad_err.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        const auto g = grad_area_entry(alpha, u, j, spec);
        rep.grad(j) = g.value;
        rep.grad_err(j) = g.error;
        rep.converged = rep.converged && g.converged;
    }
    return rep;
}

/// d_j dbar_k A for j != k (free indices), a conditionally convergent integral.
inline QuadResult mixed_area_entry(const AngleVector& alpha, const ModuliPoint& u, std::size_t j_free,
                                   std::size_t k_free, const QuadratureSpec& spec) {
    const std::size_t j = j_free + 2, k = k_free + 2;
    if (j == k) throw Error(ErrorCode::NonIntegrableProfile, "diagonal second derivative diverges absolutely");
    const auto& p = u.finite_punctures();
    const cplx uj = p.at(j), uk = p.at(k);
    auto prof = density_profile(alpha, u);
    prof.add(uj, -1.0, -1).add(uk, -1.0, 1).add_far(-2.0, 0);
    auto r = integrate(
        [&](cplx z) { return density_unchecked(alpha, p, z) / ((z - uj) * std::conj(z - uk)); }, prof, spec);
    const double c = alpha[j] * alpha[k];
    r.value *= c;
    r.error *= c;
    r.l1 *= c;
    return r;
}

/// Central-difference Wirtinger derivative with one Richardson level.
/// Returns (d/dw, d/dwbar) of F at w along the given step.
template <class F>
std::pair<cplx, cplx> wirtinger_fd(const F& f, double h) {
    auto level = [&](double s) {
        const cplx dx = (f(cplx(s, 0.0)) - f(cplx(-s, 0.0))) / (2.0 * s);
        const cplx dy = (f(cplx(0.0, s)) - f(cplx(0.0, -s))) / (2.0 * s);
        return std::pair<cplx, cplx>{0.5 * (dx - cplx(0, 1) * dy), 0.5 * (dx + cplx(0, 1) * dy)};
    };
    const auto coarse = level(h);
    const auto fine = level(0.5 * h);
    return {(4.0 * fine.first - coarse.first) / 3.0, (4.0 * fine.second - coarse.second) / 3.0};
}

inline double default_fd_step(const ModuliPoint& u) { return 1e-3 * u.min_pairwise_distance(); }

struct TvGramResult {
    HermitianGram gram;     // -d_j dbar_k log A
    Eigen::MatrixXcd d2A;   // d_j dbar_k A
    PotentialReport potential;
    bool converged = true;
};

/// Semi-analytic route: mixed entries by quadrature, diagonal by differencing the gradient.
inline TvGramResult tv_gram(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& spec,
                            double fd_step = 0.0) {
    check_compatible(alpha, u);
    if (fd_step <= 0.0) fd_step = default_fd_step(u);
    if (fd_step < 1e-7 * std::max(1.0, u.max_modulus()))
        throw Error(ErrorCode::FDStepDegenerate, "finite-difference step below the quadrature noise floor");
    TvGramResult out;
    out.potential = grad_area(alpha, u, spec);
    const auto d = u.dim();
    const double A = out.potential.area;
    const auto& g = out.potential.grad;
    out.d2A = Eigen::MatrixXcd::Zero(d, d);
    Eigen::MatrixXd d2A_err = Eigen::MatrixXd::Zero(d, d);
    out.converged = out.potential.converged;

    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) {
            if (j == k) continue;
            if (k < j) {
                out.d2A(j, k) = std::conj(out.d2A(k, j));
                d2A_err(j, k) = d2A_err(k, j);
                continue;
            }
            const auto r = mixed_area_entry(alpha, u, j, k, spec);
            out.d2A(j, k) = r.value;
            d2A_err(j, k) = r.error;
            out.converged = out.converged && r.converged;
        }
        bool conv = true;
        double noise = 0.0;
        auto gj = [&](cplx delta) {
            const auto r = grad_area_entry(alpha, u.shifted(j, delta), j, spec);
            conv = conv && r.converged;
            noise = std::max(noise, r.error);
            return r.value;
        };
        out.d2A(j, j) = wirtinger_fd(gj, fd_step).second;
        d2A_err(j, j) = 2.0 * noise / fd_step + 1e-8 * std::abs(out.d2A(j, j));
        out.converged = out.converged && conv;
    }

    out.gram.entries.resize(d, d);
    out.gram.error.resize(d, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) {
            out.gram.entries(j, k) = -(out.d2A(j, k) / A - g(j) * std::conj(g(k)) / (A * A));
            out.gram.error(j, k) = d2A_err(j, k) / A + out.potential.grad_err(j) * std::abs(g(k)) / (A * A) +
                                   out.potential.grad_err(k) * std::abs(g(j)) / (A * A) +
                                   out.potential.area_err * std::abs(out.d2A(j, k)) / (A * A);
        }
    return out;
}

/// Second differences of quadrature values amplify noise by 1/step^2, so they run at this tolerance.
inline constexpr double kSecondDifferenceTol = 1e-12;

inline QuadratureSpec tightened(const QuadratureSpec& spec) {
    QuadratureSpec s = spec;
    s.target_rel_tol = std::min(spec.target_rel_tol, kSecondDifferenceTol);
    return s;
}

/// Independent route: double central differences of log A in the real coordinates.
inline HermitianGram tv_gram_fd(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& base_spec,
                                double fd_step = 0.0) {
    check_compatible(alpha, u);
    if (fd_step <= 0.0) fd_step = 10.0 * default_fd_step(u);
    const QuadratureSpec spec = tightened(base_spec);
    const auto d = u.dim();
    const std::size_t nr = 2 * d;
    double noise = 0.0;
    auto logA = [&](const std::vector<double>& x) {
        std::vector<cplx> f(d);
        for (std::size_t j = 0; j < d; ++j) f[j] = u.free_coords()[j] + cplx(x[2 * j], x[2 * j + 1]);
        const auto r = area(alpha, ModuliPoint::from_free(f, u.min_separation()), spec);
        noise = std::max(noise, r.error / r.value.real());
        return std::log(r.value.real());
    };
    const std::vector<double> zero(nr, 0.0);
    const double L0 = logA(zero);
    auto hessian = [&](double h) {
        Eigen::MatrixXd H(nr, nr);
        std::vector<double> plus(nr), minus(nr);
        for (std::size_t a = 0; a < nr; ++a) {
            auto x = zero;
            x[a] = h;
            plus[a] = logA(x);
            x[a] = -h;
            minus[a] = logA(x);
            H(a, a) = (plus[a] - 2.0 * L0 + minus[a]) / (h * h);
        }
        for (std::size_t a = 0; a < nr; ++a)
            for (std::size_t b = a + 1; b < nr; ++b) {
                auto x = zero;
                x[a] = h, x[b] = h;
                const double pp = logA(x);
                x[a] = h, x[b] = -h;
                const double pm = logA(x);
                x[a] = -h, x[b] = h;
                const double mp = logA(x);
                x[a] = -h, x[b] = -h;
                const double mm = logA(x);
                H(a, b) = H(b, a) = (pp - pm - mp + mm) / (4.0 * h * h);
            }
        return H;
    };
    const Eigen::MatrixXd H1 = hessian(fd_step), H2 = hessian(0.5 * fd_step);
    const Eigen::MatrixXd H = (4.0 * H2 - H1) / 3.0;

    HermitianGram g;
    g.entries.resize(d, d);
    g.error = Eigen::MatrixXd::Constant(d, d, 4.0 * noise / (fd_step * fd_step));
    const cplx I(0.0, 1.0);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t xj = 2 * j, yj = 2 * j + 1, xk = 2 * k, yk = 2 * k + 1;
            const cplx ddbar = 0.25 * ((H(xj, xk) + H(yj, yk)) + I * (H(xj, yk) - H(yj, xk)));
            g.entries(j, k) = -ddbar;
        }
    return g;
}

/// Scalar n = 4 metric h(u) = -d dbar log A at u_2 = w.
inline double tv_scalar_metric(const AngleVector& alpha, cplx w, const QuadratureSpec& spec) {
    const auto u = ModuliPoint::from_free({w});
    return tv_gram(alpha, u, spec).gram.entries(0, 0).real();
}

struct CurvatureProbe {
    double curvature = 0.0;   // -(1/h) * 4 d dbar log h
    double metric = 0.0;
};

/// Curvature of the n = 4 scalar metric by a five-point Laplacian of log h with one Richardson level.
inline CurvatureProbe curvature_probe(const AngleVector& alpha, cplx w, const QuadratureSpec& spec,
                                      double step = 0.0) {
    if (alpha.n() != 4) throw Error(ErrorCode::ConfigInvalid, "curvature probe is defined for n = 4");
    const auto u = ModuliPoint::from_free({w});
    if (step <= 0.0) step = 0.05 * u.min_pairwise_distance();
    const QuadratureSpec tight = tightened(spec);
    auto logh = [&](cplx z) { return std::log(tv_scalar_metric(alpha, z, tight)); };
    const double h0 = tv_scalar_metric(alpha, w, tight);
    const double l0 = std::log(h0);
    auto laplacian = [&](double s) {
        return (logh(w + s) + logh(w - s) + logh(w + cplx(0, s)) + logh(w - cplx(0, s)) - 4.0 * l0) / (s * s);
    };
    const double lap = (4.0 * laplacian(0.5 * step) - laplacian(step)) / 3.0;
    return {-lap / h0, h0};
}

}  // namespace conemoduli

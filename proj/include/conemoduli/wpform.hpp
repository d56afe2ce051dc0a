#pragma once

// Weil-Petersson side: dual basis R(., u_j), the cometric Gram, its inverse, and the pairing
// between quadratic differentials and Beltrami representatives.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "conemoduli/domain.hpp"
#include "conemoduli/quadrature.hpp"
#include "conemoduli/tvform.hpp"

namespace conemoduli {

/// R(., u_j) for j = 2..n-2 as quadratic differentials: residues (u_j - 1, -u_j, 1) at (0, 1, u_j).
inline std::vector<QuadDiff> dual_basis(const ModuliPoint& u) {
    std::vector<QuadDiff> out;
    const auto& p = u.finite_punctures();
    for (std::size_t j = 2; j < p.size(); ++j) {
        std::vector<cplx> rho(p.size(), 0.0);
        rho[0] = p[j] - 1.0;
        rho[1] = -p[j];
        rho[j] = 1.0;
        out.emplace_back(std::move(rho), u);
    }
    return out;
}

/// Profile of a quadratic differential: simple poles where residues are non-zero, O(z^-3) at infinity.
inline SingularityProfile quad_diff_profile(const QuadDiff& q, bool conjugated) {
    SingularityProfile prof;
    const auto& p = q.basepoint().finite_punctures();
    const int m = conjugated ? 1 : -1;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (q.residues()[k] != cplx(0.0)) prof.add(p[k], -1.0, m);
    prof.add_far(-3.0, 3 * m);
    return prof;
}

/// Profile of prod |z - u_l|^{2 alpha_l}.
inline SingularityProfile inverse_density_profile(const AngleVector& alpha, const ModuliPoint& u) {
    SingularityProfile prof;
    const auto& p = u.finite_punctures();
    for (std::size_t l = 0; l < p.size(); ++l) prof.add(p[l], 2.0 * alpha[l]);
    prof.add_far(4.0 - 2.0 * alpha.at_infinity());
    return prof;
}

struct CometricGram {
    Eigen::MatrixXcd entries;
    Eigen::MatrixXd error;
    double vol = 0.0;
    bool converged = true;
};

/// (phi, psi) = Vol * int phi conj(psi) prod |z - u_l|^{2 alpha_l} |dz|^2
inline QuadResult cometric_pairing(const QuadDiff& phi, const QuadDiff& psi, const AngleVector& alpha, double vol,
                                   const QuadratureSpec& spec) {
    const auto& u = phi.basepoint();
    const auto& p = u.finite_punctures();
    auto prof = inverse_density_profile(alpha, u);
    prof.merge(quad_diff_profile(phi, false)).merge(quad_diff_profile(psi, true));
    auto r = integrate(
        [&](cplx z) {
            return phi.eval_unchecked(z) * std::conj(psi.eval_unchecked(z)) / density_unchecked(alpha, p, z);
        },
        prof, spec);
    r.value *= vol;
    r.error *= vol;
    r.l1 *= vol;
    return r;
}

inline CometricGram cometric_gram(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& spec,
                                  std::optional<double> vol = std::nullopt) {
    check_compatible(alpha, u);
    CometricGram c;
    if (vol) {
        c.vol = *vol;
    } else {
        const auto a = area(alpha, u, spec);
        c.vol = a.value.real();
        c.converged = a.converged;
    }
    const auto basis = dual_basis(u);
    const auto d = basis.size();
    c.entries.resize(d, d);
    c.error.resize(d, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = j; k < d; ++k) {
            const auto r = cometric_pairing(basis[j], basis[k], alpha, c.vol, spec);
            c.entries(j, k) = r.value;
            c.error(j, k) = r.error;
            c.converged = c.converged && r.converged;
            if (k != j) {
                c.entries(k, j) = std::conj(r.value);
                c.error(k, j) = r.error;
            } else {
                c.entries(j, j) = r.value.real();
            }
        }
    return c;
}

/// Metric in the coordinate basis: h = conj(C^{-1}).
inline HermitianGram wp_gram_from_cometric(const CometricGram& c) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(c.entries);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || !(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) > 1e10)
        throw Error(ErrorCode::SingularCometric, "cometric Gram is singular or ill-conditioned");
    const Eigen::MatrixXcd inv = c.entries.inverse();
    HermitianGram h;
    h.entries = inv.conjugate();
    // first-order propagation |d(C^{-1})| <= |C^{-1}| |dC| |C^{-1}|
    const Eigen::MatrixXd ainv = inv.cwiseAbs();
    h.error = ainv * c.error * ainv;
    return h;
}

inline HermitianGram wp_gram(const AngleVector& alpha, const ModuliPoint& u, const QuadratureSpec& spec) {
    return wp_gram_from_cometric(cometric_gram(alpha, u, spec));
}

/// Profile of a Beltrami representative.
inline SingularityProfile beltrami_profile(const BeltramiRep& mu) {
    if (!mu.is_harmonic()) {
        SingularityProfile prof;
        prof.add_far(-10.0);
        return prof;
    }
    const auto& h = mu.harmonic();
    return inverse_density_profile(h.alpha, h.psi.basepoint()).merge(quad_diff_profile(h.psi, true));
}

/// Region carrying the integrand: the support disk for smooth representatives, otherwise the plane.
inline Region beltrami_region(const BeltramiRep& mu) {
    if (mu.is_harmonic()) return Region::plane();
    return Region::disk(mu.smooth().center, mu.smooth().support_radius);
}

/// <phi, mu> = int phi mu |dz|^2
inline QuadResult pairing(const QuadDiff& phi, const BeltramiRep& mu, const QuadratureSpec& spec) {
    auto prof = beltrami_profile(mu).merge(quad_diff_profile(phi, false));
    const Region region = beltrami_region(mu);
    if (region.bounded) {
        // only the poles of phi matter inside the support
        SingularityProfile local;
        for (const auto& pt : prof.points) local.add(pt.center, pt.exponent, pt.angular_order, pt.radius_cap);
        prof = local;
    }
    return integrate([&](cplx z) { return phi.eval_unchecked(z) * mu.eval_unchecked(z); }, prof, spec, region);
}

/// psi = sum_m c_m R_m with <R_j, a_psi> = <R_j, mu> for every j, where a_psi = conj(psi) e^{-gamma} Vol.
inline QuadDiff harmonic_projection(const BeltramiRep& mu, const AngleVector& alpha, const ModuliPoint& u,
                                    const QuadratureSpec& spec, const CometricGram* cached = nullptr) {
    check_compatible(alpha, u);
    const auto basis = dual_basis(u);
    const auto d = basis.size();
    std::optional<CometricGram> own;
    if (!cached) own = cometric_gram(alpha, u, spec);
    const CometricGram& C = cached ? *cached : *own;
    Eigen::VectorXcd b(d);
    for (std::size_t j = 0; j < d; ++j) b(j) = pairing(basis[j], mu, spec).value;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(C.entries);
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) > 1e10)
        throw Error(ErrorCode::SingularCometric, "cometric Gram is singular or ill-conditioned");
    const Eigen::VectorXcd c = C.entries.partialPivLu().solve(b).conjugate();
    std::vector<cplx> rho(u.finite_punctures().size(), 0.0);
    for (std::size_t m = 0; m < d; ++m)
        for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += c(m) * basis[m].residues()[k];
    if (c.cwiseAbs().maxCoeff() == 0.0) std::fill(rho.begin(), rho.end(), cplx(0.0));
    return QuadDiff(std::move(rho), u);
}

inline BeltramiRep harmonic_rep(const QuadDiff& psi, const AngleVector& alpha, double vol) {
    return BeltramiRep(Harmonic{psi, alpha, vol});
}

}  // namespace conemoduli

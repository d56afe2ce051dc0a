#pragma once

// Singular integral operators built on the three-point normalized Cauchy kernel
//   R(zeta, z) = z (z - 1) / (zeta (zeta - 1) (zeta - z)).
// All operators use (1 / 2 pi i) d zeta ^ d zeta-bar = -|d zeta|^2.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "conemoduli/domain.hpp"
#include "conemoduli/quadrature.hpp"
#include "conemoduli/wpform.hpp"

namespace conemoduli {

inline void check_kernel_args(cplx zeta, cplx z) {
    constexpr double tiny = 1e-14;
    if (std::abs(zeta) < tiny || std::abs(zeta - 1.0) < tiny || std::abs(zeta - z) < tiny * std::max(1.0, std::abs(z)))
        throw Error(ErrorCode::EvalAtPole, "kernel evaluated at a pole");
}

inline cplx r_kernel(cplx zeta, cplx z) {
    check_kernel_args(zeta, z);
    return z * (z - 1.0) / (zeta * (zeta - 1.0) * (zeta - z));
}

struct KernelFunction {
    cplx operator()(cplx zeta, cplx z) const { return r_kernel(zeta, z); }
    cplx partial_fractions(cplx zeta, cplx z) const {
        check_kernel_args(zeta, z);
        return 1.0 / (zeta - z) + (z - 1.0) / zeta - z / (zeta - 1.0);
    }
    /// d/dz R(zeta, z)
    cplx dz(cplx zeta, cplx z) const {
        check_kernel_args(zeta, z);
        const cplx d = zeta - z;
        return 1.0 / (d * d) - 1.0 / (zeta * (zeta - 1.0));
    }
};

/// A function on the plane with its declared singularities and carrier region.
struct Integrand {
    std::function<cplx(cplx)> fn;
    SingularityProfile profile;
    Region region = Region::plane();
};

inline Integrand zero_integrand() {
    Integrand h;
    h.fn = [](cplx) { return cplx(0.0); };
    h.profile.add_far(-10.0);
    return h;
}

inline Integrand integrand_from(const BeltramiRep& mu) {
    Integrand h;
    h.fn = [mu](cplx z) { return mu.eval_unchecked(z); };
    h.profile = beltrami_profile(mu);
    h.region = beltrami_region(mu);
    return h;
}

namespace kernel_detail {

inline SingularityProfile localized(const SingularityProfile& p, const Region& region) {
    if (!region.bounded) return p;
    SingularityProfile out;
    for (const auto& pt : p.points) out.add(pt.center, pt.exponent, pt.angular_order, pt.radius_cap);
    return out;
}

inline QuadResult negate(QuadResult r) {
    r.value = -r.value;
    return r;
}

}  // namespace kernel_detail

/// P(h)(z) = (1/2 pi i) int (1/(zeta - z) - 1/zeta) h(zeta) d zeta ^ d zeta-bar
inline QuadResult op_p(const Integrand& h, cplx z, const QuadratureSpec& spec) {
    if (z == cplx(0.0)) return {};
    auto prof = kernel_detail::localized(h.profile, h.region);
    prof.add_probe(z, -1.0, -1).add(0.0, -1.0, -1);
    if (!h.region.bounded) prof.add_far(-2.0, -2);
    return kernel_detail::negate(integrate(
        [&](cplx zeta) { return (1.0 / (zeta - z) - 1.0 / zeta) * h.fn(zeta); }, prof, spec, h.region));
}

/// H(z) = (1/2 pi i) int h(zeta) R(zeta, z) d zeta ^ d zeta-bar, normalized by H(0) = H(1) = 0.
inline QuadResult op_h(const Integrand& h, cplx z, const QuadratureSpec& spec) {
    if (z == cplx(0.0) || z == cplx(1.0)) return {};
    auto prof = kernel_detail::localized(h.profile, h.region);
    prof.add_probe(z, -1.0, -1).add(0.0, -1.0, -1).add(1.0, -1.0, -1);
    if (!h.region.bounded) prof.add_far(-3.0, -3);
    const cplx num = z * (z - 1.0);
    return kernel_detail::negate(integrate(
        [&](cplx zeta) { return h.fn(zeta) * num / (zeta * (zeta - 1.0) * (zeta - z)); }, prof, spec, h.region));
}

/// Hilbert transform T(g)(z) = (1/2 pi i) p.v. int_D g(zeta) / (zeta - z)^2 over the unit disk D.
/// For z inside D the value g(z) is required for the principal-value subtraction.
inline QuadResult op_t(const Integrand& g, cplx z, const QuadratureSpec& spec,
                       std::optional<cplx> g_at_z = std::nullopt) {
    const Region disk = Region::disk(0.0, 1.0);
    auto prof = kernel_detail::localized(g.profile, disk);
    prof.add_probe(z, -2.0, -2);
    auto f = [&](cplx zeta) {
        const cplx d = zeta - z;
        return g.fn(zeta) / (d * d);
    };
    const double r = std::abs(z);
    if (std::abs(r - 1.0) < 1e-12) throw Error(ErrorCode::NonIntegrableProfile, "evaluation on the unit circle");
    if (r > 1.0) return kernel_detail::negate(integrate(f, prof, spec, disk));
    if (!g_at_z) throw Error(ErrorCode::HolderDataMissing, "g(z) is needed for the principal-value subtraction");
    return kernel_detail::negate(integrate_pv(f, z, *g_at_z, prof, spec, disk));
}

/// Harmonic representative bundled with its quadrature profile.
inline const Harmonic& require_harmonic(const BeltramiRep& a) {
    if (!a.is_harmonic()) throw Error(ErrorCode::ConfigInvalid, "operation needs a harmonic representative");
    return a.harmonic();
}

/// Y(z) = (1/2 pi i) int a(zeta) R(zeta, z) d zeta ^ d zeta-bar
inline QuadResult y_field(const BeltramiRep& a, cplx z, const QuadratureSpec& spec) {
    const auto& h = require_harmonic(a);
    if (z == cplx(0.0) || z == cplx(1.0) || h.psi.is_zero()) return {};
    return op_h(integrand_from(a), z, spec);
}

/// dY/dz = -(p.v.) int a(zeta) (1/(zeta - z)^2 - 1/(zeta (zeta - 1))) |d zeta|^2
inline QuadResult dy_dz(const BeltramiRep& a, cplx z, const QuadratureSpec& spec) {
    const auto& h = require_harmonic(a);
    const auto& p = h.psi.basepoint().finite_punctures();
    for (const auto& uk : p)
        if (std::abs(z - uk) < h.psi.basepoint().min_separation() / 10.0)
            throw Error(ErrorCode::EvalAtPole, "dY/dz evaluated at a puncture");
    if (h.psi.is_zero()) return {};
    auto prof = beltrami_profile(a);
    prof.add_probe(z, -2.0, -2).add(0.0, -1.0, -1).add(1.0, -1.0, -1).add_far(-3.0, -3);
    auto f = [&](cplx zeta) {
        const cplx d = zeta - z;
        return a.eval_unchecked(zeta) * (1.0 / (d * d) - 1.0 / (zeta * (zeta - 1.0)));
    };
    return kernel_detail::negate(integrate_pv(f, z, a.eval_unchecked(z), prof, spec));
}

/// D(z) = -sum_k alpha_k (Y(z) - Y(u_k)) / (z - u_k) + dY/dz, with Y(u_k) cached on construction.
class DFunction {
public:
    DFunction(BeltramiRep a, QuadratureSpec spec) : a_(std::move(a)), spec_(spec) {
        const auto& h = require_harmonic(a_);
        const auto& p = h.psi.basepoint().finite_punctures();
        y_at_punctures_.reserve(p.size());
        for (const auto& uk : p) {
            const auto r = y_field(a_, uk, spec_);
            y_at_punctures_.push_back(r.value);
            error_ = std::max(error_, r.error);
            converged_ = converged_ && r.converged;
        }
    }

    QuadResult operator()(cplx z) const {
        const auto& h = a_.harmonic();
        const auto& p = h.psi.basepoint().finite_punctures();
        const auto y = y_field(a_, z, spec_);
        const auto dy = dy_dz(a_, z, spec_);
        QuadResult out;
        out.value = dy.value;
        out.error = dy.error;
        out.converged = y.converged && dy.converged && converged_;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const cplx dz = z - p[k];
            out.value -= h.alpha[k] * (y.value - y_at_punctures_[k]) / dz;
            out.error += h.alpha[k] * (y.error + error_) / std::abs(dz);
        }
        out.evaluations = y.evaluations + dy.evaluations;
        return out;
    }

    const std::vector<cplx>& y_at_punctures() const { return y_at_punctures_; }

private:
    BeltramiRep a_;
    QuadratureSpec spec_;
    std::vector<cplx> y_at_punctures_;
    double error_ = 0.0;
    bool converged_ = true;
};

inline QuadResult d_function(const BeltramiRep& a, cplx z, const QuadratureSpec& spec) {
    return DFunction(a, spec)(z);
}

/// V(z) = (1/2 pi i) int (a - mu) R(., z) d zeta ^ d zeta-bar, evaluated as Y_a(z) - H_mu(z).
inline QuadResult v_field(const BeltramiRep& a, const BeltramiRep& mu, cplx z, const QuadratureSpec& spec) {
    require_harmonic(a);
    if (mu.is_harmonic()) throw Error(ErrorCode::ConfigInvalid, "v_field expects a smooth compact representative");
    const auto y = y_field(a, z, spec);
    const auto hm = op_h(integrand_from(mu), z, spec);
    QuadResult out;
    out.value = y.value - hm.value;
    out.error = y.error + hm.error;
    out.l1 = y.l1 + hm.l1;
    out.converged = y.converged && hm.converged;
    out.evaluations = y.evaluations + hm.evaluations;
    return out;
}

/// Velocity of puncture u_j induced by a Beltrami coefficient: (1/2 pi i) int mu R(., u_j).
inline QuadResult coordinate_velocity(const BeltramiRep& mu, const ModuliPoint& u, std::size_t free_index,
                                      const QuadratureSpec& spec) {
    return op_h(integrand_from(mu), u.free_coords()[free_index], spec);
}

/// Integrability exponent: largest p with p (1 - 2 alpha_k) < 2 for all k, less 5 %, capped at 8.
inline double integrability_exponent(const AngleVector& alpha) {
    double p = std::numeric_limits<double>::infinity();
    for (double a : alpha.alphas())
        if (a < 0.5) p = std::min(p, 2.0 / (1.0 - 2.0 * a));
    if (!std::isfinite(p)) return 4.0;
    return std::min(8.0, 0.95 * p);
}

struct HolderExponentReport {
    double fitted_exponent = 0.0;
    double expected = 0.0;
    std::vector<double> sample_radii;
};

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::vector<double> log_spaced(double from, double to, int count) {
    std::vector<double> r(count);
    for (int i = 0; i < count; ++i) r[i] = from * std::pow(to / from, double(i) / (count - 1));
    return r;
}

/// Local Hoelder exponent of f at z0 from log |f(z0 + r e^{i theta}) - f(z0)| against log r,
/// averaged over equally spaced angles.
inline HolderExponentReport fit_holder_exponent(const std::function<cplx(cplx)>& f, cplx z0, double expected,
                                                std::vector<double> radii = log_spaced(1e-2, 1e-4, 5),
                                                int angles = 8) {
    if (radii.size() < 3) throw Error(ErrorCode::ConfigInvalid, "at least three sample radii are needed");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] < radii[i - 1])) throw Error(ErrorCode::ConfigInvalid, "sample radii must decrease");
    const cplx f0 = f(z0);
    std::vector<double> lx, ly;
    for (double r : radii) {
        double acc = 0.0;
        for (int k = 0; k < angles; ++k) {
            const double th = 2.0 * std::numbers::pi * (k + 0.5) / angles;
            acc += std::log(std::abs(f(z0 + std::polar(r, th)) - f0));
        }
        lx.push_back(std::log(r));
        ly.push_back(acc / angles);
    }
    return {ls_slope(lx, ly), expected, std::move(radii)};
}

/// Log-log slope of |F| along the given radii (direction fixed by the caller).
inline double fit_power_law(const std::function<double(double)>& magnitude, const std::vector<double>& radii) {
    std::vector<double> lx, ly;
    for (double r : radii) {
        lx.push_back(std::log(r));
        ly.push_back(std::log(magnitude(r)));
    }
    return ls_slope(lx, ly);
}

}  // namespace conemoduli

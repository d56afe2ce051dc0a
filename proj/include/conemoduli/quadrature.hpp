#pragma once

// Planar quadrature for int f(z) dx dy / pi with declared algebraic singularities.
//
// The plane (or a disk region) is covered by a smooth partition of unity:
//   * one polar patch per singular point, weighted by a radial C-infinity cutoff that is 1 on the
//     inner half of the patch; radial Gauss-Jacobi absorbs |z - c|^e and an equispaced angular
//     trapezoid annihilates the m-th Fourier mode exactly,
//   * a far patch in the inversion chart w = 1/z, treated exactly like a puncture patch at w = 0,
//   * a mid region integrating f * (1 - sum of cutoffs) in polar coordinates about the region centre:
//     full annuli clear of other patches use Gauss radially and the periodic trapezoid in angle,
//     the rest tensor Gauss panels graded toward nearby patches, all adaptively refined.
// Cutoff supports are pairwise disjoint, so every point is weighted by exactly one unit of mass.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "conemoduli/domain.hpp"
#include "conemoduli/errors.hpp"
#include "conemoduli/gauss.hpp"

namespace conemoduli {

struct SingularPoint {
    cplx center;
    double exponent = 0.0;  // |f| ~ |z - center|^exponent
    int angular_order = 0;  // dominant phase e^{i m theta}
    double radius_cap = 0.5;  // punctures keep small patches; evaluation points may use larger ones
};

/// Declared singular behaviour of an integrand: one entry per finite singular point plus infinity.
/// Factors multiply, so exponents and angular orders of coincident points add.
struct SingularityProfile {
    std::vector<SingularPoint> points;
    double far_exponent = 0.0;
    int far_angular_order = 0;

    SingularityProfile& add(cplx center, double exponent, int angular_order = 0, double radius_cap = 0.5) {
        const double merge_tol = 1e-13 * std::max(1.0, std::abs(center));
        for (auto& p : points) {
            if (std::abs(p.center - center) <= merge_tol) {
                p.exponent += exponent;
                p.angular_order += angular_order;
                p.radius_cap = std::min(p.radius_cap, radius_cap);
                return *this;
            }
        }
        points.push_back({center, exponent, angular_order, radius_cap});
        return *this;
    }

    /// Singular point at an evaluation location rather than a puncture (no radius cap).
    SingularityProfile& add_probe(cplx center, double exponent, int angular_order = 0) {
        return add(center, exponent, angular_order, std::numeric_limits<double>::infinity());
    }

    SingularityProfile& add_far(double exponent, int angular_order = 0) {
        far_exponent += exponent;
        far_angular_order += angular_order;
        return *this;
    }

    /// Point-wise product of two profiles.
    SingularityProfile& merge(const SingularityProfile& other) {
        for (const auto& p : other.points) add(p.center, p.exponent, p.angular_order, p.radius_cap);
        add_far(other.far_exponent, other.far_angular_order);
        return *this;
    }

    const SingularPoint* find(cplx center) const {
        const double tol = 1e-13 * std::max(1.0, std::abs(center));
        for (const auto& p : points)
            if (std::abs(p.center - center) <= tol) return &p;
        return nullptr;
    }
};

inline bool locally_integrable(double exponent, int angular_order) {
    return exponent > -2.0 || (exponent > -3.0 && angular_order != 0);
}

inline bool integrable_at_infinity(double exponent, int angular_order) {
    return exponent < -2.0 || (exponent < -1.0 && angular_order != 0);
}

struct QuadratureSpec {
    int radial_order = 24;
    int angular_nodes = 64;
    double patch_radius_factor = 0.25;
    std::optional<double> far_radius;  // default: 4 * max |centre|
    int refinement_depth = 6;
    double target_rel_tol = 1e-9;
    int workers = 1;
    bool deterministic = true;
    bool adaptive = true;  // false: base rules only, so the rule is the same for every integrand

    void validate() const {
        if (radial_order < 4 || angular_nodes < 4)
            throw Error(ErrorCode::ConfigInvalid, "quadrature orders must be at least 4");
        if (angular_nodes % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "angular_nodes must be even");
        if (!(patch_radius_factor > 0.0 && patch_radius_factor <= 0.4))
            throw Error(ErrorCode::ConfigInvalid, "patch_radius_factor must lie in (0, 0.4]");
        if (refinement_depth < 0) throw Error(ErrorCode::ConfigInvalid, "refinement_depth must be non-negative");
        if (!(target_rel_tol >= 1e-13)) throw Error(ErrorCode::ConfigInvalid, "target_rel_tol must be >= 1e-13");
        if (far_radius && !(*far_radius > 0.0)) throw Error(ErrorCode::ConfigInvalid, "far_radius must be positive");
    }

    QuadratureSpec doubled() const {
        QuadratureSpec s = *this;
        s.radial_order *= 2;
        s.angular_nodes *= 2;
        return s;
    }
};

/// Integration domain: the whole plane or an open disk (integrand treated as zero outside).
struct Region {
    bool bounded = false;
    cplx center = 0.0;
    double radius = 0.0;

    static Region plane() { return {}; }
    static Region disk(cplx c, double r) { return {true, c, r}; }
};

struct PolarPatch {
    cplx center;
    double radius = 0.0;
    double exponent = 0.0;
    int angular_order = 0;
    bool clipped = false;   // centre on the boundary of a disk region
    cplx pv_coefficient = 0.0;  // subtract pv_coefficient / (z - center)^2 on the patch
};

struct FarPatch {
    double radius_w = 0.0;  // patch radius in the w = 1/z chart
    double exponent_w = 0.0;
    int angular_order_w = 0;
};

struct Decomposition {
    Region region;
    std::vector<PolarPatch> patches;
    std::optional<FarPatch> far;
    double far_radius = 0.0;  // |z| where the far cutoff starts to act
    cplx mid_center = 0.0;
    double mid_outer_radius = 0.0;
    std::vector<double> mid_radial_breaks;
    int mid_angular_panels = 16;  // minimum per ring; thin rings far out get more

    int angular_panels(std::size_t ring) const {
        const double r0 = mid_radial_breaks[ring], r1 = mid_radial_breaks[ring + 1];
        const double want = std::numbers::pi * r1 / (r1 - r0);
        int n = mid_angular_panels;
        while (n < want && n < 4096) n *= 2;
        return n;
    }

    /// Checks that cutoff supports are disjoint and stay inside the domain.
    bool is_valid_cover() const {
        for (std::size_t i = 0; i < patches.size(); ++i) {
            const auto& a = patches[i];
            if (!(a.radius > 0.0)) return false;
            for (std::size_t j = 0; j < i; ++j) {
                const auto& b = patches[j];
                if (a.radius + b.radius > std::abs(a.center - b.center) * (1.0 + 1e-12)) return false;
            }
            if (region.bounded) {
                const double d = std::abs(a.center - region.center);
                if (!a.clipped && d + a.radius > region.radius * (1.0 + 1e-12)) return false;
            } else if (std::abs(a.center) + a.radius > far_radius * (1.0 + 1e-12)) {
                return false;
            }
        }
        if (!region.bounded && (!far || std::abs(far->radius_w * far_radius - 1.0) > 1e-12)) return false;
        return mid_outer_radius > 0.0;
    }
};

struct QuadResult {
    cplx value = 0.0;
    double error = 0.0;
    double l1 = 0.0;  // estimate of int |f| dx dy / pi
    bool converged = true;
    std::size_t evaluations = 0;
};

namespace quad_detail {

constexpr double kPi = std::numbers::pi;

/// Radial cutoff: 1 on [0, 1/2], 0 on [1, inf), C-infinity in between.
inline double cutoff(double t) {
    if (t <= 0.5) return 1.0;
    if (t >= 1.0) return 0.0;
    const double x = 2.0 * t - 1.0;
    return 1.0 / (1.0 + std::exp(1.0 / (1.0 - x) - 1.0 / x));
}

struct Acc {
    cplx value = 0.0;
    double l1 = 0.0;
    double err = 0.0;
    bool converged = true;
    std::size_t evals = 0;

    Acc& operator+=(const Acc& o) {
        value += o.value;
        l1 += o.l1;
        err += o.err;
        converged = converged && o.converged;
        evals += o.evals;
        return *this;
    }
};

struct AngularSample {
    cplx value;      // int over the angular domain, fine rule
    cplx coarse;     // coarse rule
    double l1;
    std::size_t evals;
};

/// Angular integration of G(center + r e^{i theta}) over the full circle (trapezoid) or an arc
/// (Gauss-Legendre) for clipped patches.
template <class G>
struct AngularRule {
    const G& g;
    cplx center;
    int nodes;
    bool clipped = false;
    double arc_mid = 0.0;
    double region_radius = 0.0;

    AngularSample operator()(double r) const {
        AngularSample s{0.0, 0.0, 0.0, 0};
        if (!clipped) {
            const double h = 2.0 * kPi / nodes;
            cplx even = 0.0;
            for (int j = 0; j < nodes; ++j) {
                const double th = h * (j + 0.5);
                const cplx v = g(center + std::polar(r, th), r);
                s.value += v;
                if (j % 2 == 0) even += v;
                s.l1 += std::abs(v);
            }
            s.value *= h * r;
            s.coarse = even * (2.0 * h * r);
            s.l1 *= h * r;
            s.evals = static_cast<std::size_t>(nodes);
            return s;
        }
        const double half = std::acos(std::min(1.0, r / (2.0 * region_radius)));
        const int nf = std::max(4, nodes / 2);
        const auto fine = gauss::legendre01(nf);
        const auto coarse = gauss::legendre01(std::max(2, nf / 2));
        const double a = arc_mid - half, len = 2.0 * half;
        for (std::size_t i = 0; i < fine->nodes.size(); ++i) {
            const cplx v = g(center + std::polar(r, a + len * fine->nodes[i]), r);
            s.value += fine->weights[i] * v;
            s.l1 += fine->weights[i] * std::abs(v);
        }
        for (std::size_t i = 0; i < coarse->nodes.size(); ++i)
            s.coarse += coarse->weights[i] * g(center + std::polar(r, a + len * coarse->nodes[i]), r);
        s.value *= len * r;
        s.coarse *= len * r;
        s.l1 *= len * r;
        s.evals = fine->nodes.size() + coarse->nodes.size();
        return s;
    }
};

/// Adaptive Gauss-Legendre on [a, b] for a radial function returning AngularSample-weighted values.
template <class RadialFn>
Acc adaptive_radial(const RadialFn& F, double a, double b, int order, double tol, int depth) {
    const auto fine = gauss::legendre01(order);
    const auto coarse = gauss::legendre01(std::max(2, order / 2));
    const double len = b - a;
    Acc acc;
    cplx vc = 0.0;
    double ang_err = 0.0;
    for (std::size_t i = 0; i < fine->nodes.size(); ++i) {
        const auto s = F(a + len * fine->nodes[i]);
        acc.value += fine->weights[i] * s.value;
        acc.l1 += fine->weights[i] * s.l1;
        ang_err += fine->weights[i] * std::abs(s.value - s.coarse);
        acc.evals += s.evals;
    }
    for (std::size_t i = 0; i < coarse->nodes.size(); ++i) {
        const auto s = F(a + len * coarse->nodes[i]);
        vc += coarse->weights[i] * s.value;
        acc.evals += s.evals;
    }
    acc.value *= len;
    acc.l1 *= len;
    const double rad_err = std::abs(acc.value - vc * len);
    acc.err = rad_err + ang_err * len;
    if (rad_err <= tol || depth <= 0) {
        acc.converged = acc.err <= tol;
        return acc;
    }
    const double m = 0.5 * (a + b);
    Acc left = adaptive_radial(F, a, m, order, 0.5 * tol, depth - 1);
    left += adaptive_radial(F, m, b, order, 0.5 * tol, depth - 1);
    return left;
}

/// int_0^b F(r) dr where F(r) ~ r^w * smooth, using Gauss-Jacobi; refines by geometric splitting.
template <class RadialFn>
Acc singular_radial(const RadialFn& F, double b, double w, int order, double tol, int depth) {
    const auto fine = gauss::jacobi01(order, w);
    const auto coarse = gauss::jacobi01(std::max(2, order / 2), w);
    const double scale = std::pow(b, w + 1.0);
    Acc acc;
    cplx vc = 0.0;
    double ang_err = 0.0;
    for (std::size_t i = 0; i < fine->nodes.size(); ++i) {
        const double r = b * fine->nodes[i];
        const auto s = F(r);
        const double rw = std::pow(r, -w);
        acc.value += fine->weights[i] * s.value * rw;
        acc.l1 += fine->weights[i] * s.l1 * rw;
        ang_err += fine->weights[i] * std::abs(s.value - s.coarse) * rw;
        acc.evals += s.evals;
    }
    for (std::size_t i = 0; i < coarse->nodes.size(); ++i) {
        const double r = b * coarse->nodes[i];
        const auto s = F(r);
        vc += coarse->weights[i] * s.value * std::pow(r, -w);
        acc.evals += s.evals;
    }
    acc.value *= scale;
    acc.l1 *= scale;
    const double rad_err = std::abs(acc.value - vc * scale);
    acc.err = rad_err + ang_err * scale;
    if (rad_err <= tol || depth <= 0) {
        acc.converged = acc.err <= tol;
        return acc;
    }
    Acc inner = singular_radial(F, 0.5 * b, w, order, 0.5 * tol, depth - 1);
    inner += adaptive_radial(F, 0.5 * b, b, order, 0.5 * tol, depth - 1);
    return inner;
}

/// Effective radial weight exponent after angular averaging.
inline double radial_weight_exponent(double exponent, int angular_order) {
    return exponent > -2.0 ? exponent + 1.0 : exponent + 2.0 + (angular_order == 0 ? -1.0 : 0.0);
}

/// Integrates g (a function of the local point and its radius) times the patch cutoff over the patch.
template <class G>
Acc integrate_patch(const G& g, cplx center, double rho, double exponent, int order, bool clipped, double arc_mid,
                    double region_radius, const QuadratureSpec& spec, double tol) {
    const double w = radial_weight_exponent(exponent, order);
    Acc best;
    int nodes = spec.angular_nodes;
    for (int attempt = 0; attempt < 3; ++attempt, nodes *= 2) {
        AngularRule<G> ang{g, center, nodes, clipped, arc_mid, region_radius};
        auto inner_fn = [&](double r) { return ang(r); };
        auto outer_fn = [&](double r) {
            auto s = ang(r);
            const double c = cutoff(r / rho);
            s.value *= c;
            s.coarse *= c;
            s.l1 *= c;
            return s;
        };
        Acc acc = singular_radial(inner_fn, 0.5 * rho, w, spec.radial_order, 0.5 * tol, spec.refinement_depth);
        acc += adaptive_radial(outer_fn, 0.5 * rho, rho, spec.radial_order, 0.5 * tol, spec.refinement_depth + 2);
        if (attempt > 0) acc.evals += best.evals;
        best = acc;
        if (acc.err <= tol) break;
    }
    return best;
}

inline constexpr double kGradingRatio = 1.0;

inline constexpr int kMaxRingNodes = 1 << 14;

// ring_nodes > 0 marks a full annulus integrated with the periodic trapezoid rule in angle
struct MidPanel {
    double r0, r1, t0, t1;
    int depth;
    Acc acc;
    int ring_nodes = 0;
    bool angular_limited = false;
};

}  // namespace quad_detail

/// Builds the patch layout for a profile; throws NonIntegrableProfile or PunctureTooClose.
inline Decomposition plan(const SingularityProfile& profile, const QuadratureSpec& spec,
                          const Region& region = Region::plane()) {
    spec.validate();
    Decomposition d;
    d.region = region;
    const auto& pts = profile.points;

    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(pts[i].center - pts[j].center) < 1e-12 * std::max(1.0, std::abs(pts[i].center)))
                throw Error(ErrorCode::PunctureTooClose, "singular points nearly coincide");

    std::vector<int> kind(pts.size(), 0);  // 0 interior, 1 boundary, 2 exterior
    if (region.bounded) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double dist = std::abs(pts[i].center - region.center);
            const double tol = 1e-12 * std::max(1.0, region.radius);
            kind[i] = dist < region.radius - tol ? 0 : (dist <= region.radius + tol ? 1 : 2);
        }
    }

    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (kind[i] == 2) continue;
        const auto& p = pts[i];
        if (std::abs(p.angular_order) >= spec.angular_nodes / 2)
            throw Error(ErrorCode::NonIntegrableProfile, "angular order exceeds the angular resolution");
        if (kind[i] == 1 ? !(p.exponent > -2.0) : !locally_integrable(p.exponent, p.angular_order))
            throw Error(ErrorCode::NonIntegrableProfile,
                        "exponent " + std::to_string(p.exponent) + " with angular order " +
                            std::to_string(p.angular_order) + " is not integrable");
    }
    if (!region.bounded && !integrable_at_infinity(profile.far_exponent, profile.far_angular_order))
        throw Error(ErrorCode::NonIntegrableProfile,
                    "far exponent " + std::to_string(profile.far_exponent) + " is not integrable at infinity");

    double max_mod = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (kind[i] != 2) max_mod = std::max(max_mod, std::abs(pts[i].center));
    if (!region.bounded) {
        d.far_radius = spec.far_radius.value_or(std::max(4.0 * max_mod, 2.0));
        if (d.far_radius < max_mod + 1.0) d.far_radius = max_mod + 1.0;
    }

    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (kind[i] == 2) continue;
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i) nearest = std::min(nearest, std::abs(pts[i].center - pts[j].center));
        double rho = std::min(pts[i].radius_cap, spec.patch_radius_factor * nearest);
        if (region.bounded && kind[i] == 0)
            rho = std::min(rho, 0.5 * (region.radius - std::abs(pts[i].center - region.center)));
        if (!region.bounded) rho = std::min(rho, 0.5 * (d.far_radius - std::abs(pts[i].center)));
        PolarPatch patch;
        patch.center = pts[i].center;
        patch.radius = rho;
        patch.exponent = pts[i].exponent;
        patch.angular_order = pts[i].angular_order;
        patch.clipped = kind[i] == 1;
        d.patches.push_back(patch);
    }

    if (!region.bounded) {
        FarPatch f;
        f.radius_w = 1.0 / d.far_radius;
        f.exponent_w = -profile.far_exponent - 4.0;
        f.angular_order_w = -profile.far_angular_order;
        d.far = f;
        d.mid_center = 0.0;
        d.mid_outer_radius = 2.0 * d.far_radius;
    } else {
        d.mid_center = region.center;
        d.mid_outer_radius = region.radius;
    }

    std::vector<double> br{0.0, d.mid_outer_radius};
    auto push = [&](double r) {
        if (r > 0.0 && r < d.mid_outer_radius) br.push_back(r);
    };
    for (const auto& p : d.patches) {
        const double dist = std::abs(p.center - d.mid_center);
        for (double s : {-1.0, -0.5, 0.5, 1.0}) push(dist + s * p.radius);
    }
    if (!region.bounded) push(d.far_radius);
    std::sort(br.begin(), br.end());
    std::vector<double> merged{br.front()};
    for (double r : br)
        if (r - merged.back() > 1e-9 * d.mid_outer_radius) merged.push_back(r);
    if (merged.back() < d.mid_outer_radius) merged.push_back(d.mid_outer_radius);
    // keep neighbouring radial panels within a factor of two
    std::vector<double> graded{merged.front()};
    for (std::size_t i = 1; i < merged.size(); ++i) {
        const double lo = graded.back(), hi = merged[i];
        if (lo > 0.0 && hi > 2.0 * lo) {
            const int pieces = static_cast<int>(std::ceil(std::log2(hi / lo)));
            for (int k = 1; k < pieces; ++k) graded.push_back(lo * std::pow(hi / lo, double(k) / pieces));
        }
        graded.push_back(hi);
    }
    d.mid_radial_breaks = std::move(graded);
    return d;
}

/// int f dx dy / pi over the region; f is called only at points off the declared singular set.
template <class F>
QuadResult integrate(const F& f, const Decomposition& d, const QuadratureSpec& spec, cplx pv_center = 0.0,
                     cplx pv_coefficient = 0.0, bool use_pv = false) {
    using namespace quad_detail;
    const Region& region = d.region;

    // Patch integrands, tagged with their own local radius.
    auto patch_fn = [&](const PolarPatch& p) {
        const bool pv = use_pv && std::abs(p.center - pv_center) <= 1e-13 * std::max(1.0, std::abs(p.center));
        const cplx s = pv ? pv_coefficient : cplx(0.0);
        return [&f, c = p.center, s](cplx z, double) -> cplx {
            const cplx v = f(z);
            if (s == cplx(0.0)) return v;
            const cplx dz = z - c;
            return v - s / (dz * dz);
        };
    };
    auto far_fn = [&f](cplx w, double rw) -> cplx {
        const double r2 = rw * rw;
        return f(1.0 / w) / (r2 * r2);
    };

    // Mid-region partition weight.
    auto weight = [&](cplx z) -> double {
        double w = 1.0;
        for (const auto& p : d.patches) {
            const double dist = std::abs(z - p.center);
            if (dist >= p.radius) continue;
            w -= cutoff(dist / p.radius);
            if (w <= 0.0) return 0.0;
        }
        if (d.far) {
            const double rz = std::abs(z);
            if (rz > d.far_radius) w -= cutoff(1.0 / (rz * d.far->radius_w));
        }
        return w <= 1e-300 ? 0.0 : w;
    };

    const int mid_order = std::max(4, spec.radial_order / 2);
    auto eval_ring = [&](MidPanel& pan) {
        const auto fine = gauss::legendre01(mid_order);
        const auto coarse = gauss::legendre01(std::max(2, mid_order / 2));
        const int nt = pan.ring_nodes;
        const double dr = pan.r1 - pan.r0, h = 2.0 * kPi / nt;
        Acc acc;
        // returns the full trapezoid sum and the one on every second node
        auto ring_sum = [&](double r, bool track, double rw) {
            cplx all = 0.0, even = 0.0;
            for (int j = 0; j < nt; ++j) {
                const cplx z = d.mid_center + std::polar(r, h * j);
                if (region.bounded && std::abs(z - region.center) >= region.radius) continue;
                const double wz = weight(z);
                if (wz == 0.0) continue;
                const cplx fz = f(z);
                ++acc.evals;
                all += wz * fz;
                if (j % 2 == 0) even += wz * fz;
                if (track) acc.l1 += rw * h * wz * std::abs(fz);
            }
            return std::pair{all * h, even * (2.0 * h)};
        };
        cplx value = 0.0, halved = 0.0, radial = 0.0;
        for (std::size_t i = 0; i < fine->nodes.size(); ++i) {
            const double r = pan.r0 + dr * fine->nodes[i];
            const double rw = fine->weights[i] * r * dr;
            const auto [all, even] = ring_sum(r, true, rw);
            value += rw * all;
            halved += rw * even;
        }
        for (std::size_t i = 0; i < coarse->nodes.size(); ++i) {
            const double r = pan.r0 + dr * coarse->nodes[i];
            radial += coarse->weights[i] * r * dr * ring_sum(r, false, 0.0).first;
        }
        const double ang_err = std::abs(value - halved), rad_err = std::abs(value - radial);
        acc.value = value;
        acc.err = ang_err + rad_err;
        pan.acc = acc;
        pan.angular_limited = ang_err > rad_err && nt < kMaxRingNodes;
    };
    auto eval_panel = [&](MidPanel& pan) {
        if (pan.ring_nodes > 0) return eval_ring(pan);
        const auto fine = gauss::legendre01(mid_order);
        const auto coarse = gauss::legendre01(std::max(2, mid_order / 2));
        const double dr = pan.r1 - pan.r0, dt = pan.t1 - pan.t0;
        Acc acc;
        auto sample = [&](const gauss::Rule& rule, bool track) {
            cplx v = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double r = pan.r0 + dr * rule.nodes[i];
                for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
                    const double t = pan.t0 + dt * rule.nodes[j];
                    const cplx z = d.mid_center + std::polar(r, t);
                    if (region.bounded && std::abs(z - region.center) >= region.radius) continue;
                    const double wz = weight(z);
                    if (wz == 0.0) continue;
                    const cplx fz = f(z);
                    ++acc.evals;
                    const double ww = rule.weights[i] * rule.weights[j] * wz * r;
                    v += ww * fz;
                    if (track) acc.l1 += ww * std::abs(fz);
                }
            }
            return v * (dr * dt);
        };
        acc.value = sample(*fine, true);
        acc.l1 *= dr * dt;
        acc.err = std::abs(acc.value - sample(*coarse, false));
        pan.acc = acc;
    };

    // First pass: base rules everywhere, which fixes the absolute tolerance scale.
    const std::size_t np = d.patches.size() + (d.far ? 1 : 0);
    std::vector<Acc> patch_acc(np);
    auto run_patch = [&](std::size_t i, double tol, int depth_override) {
        QuadratureSpec s = spec;
        if (depth_override >= 0) s.refinement_depth = depth_override;
        if (i < d.patches.size()) {
            const auto& p = d.patches[i];
            double arc_mid = 0.0;
            if (p.clipped) arc_mid = std::arg(region.center - p.center);
            return integrate_patch(patch_fn(p), p.center, p.radius, p.exponent, p.angular_order, p.clipped, arc_mid,
                                   region.radius, s, tol);
        }
        return integrate_patch(far_fn, cplx(0.0), d.far->radius_w, d.far->exponent_w, d.far->angular_order_w, false,
                               0.0, 0.0, s, tol);
    };

    std::vector<MidPanel> panels;
    const auto& br = d.mid_radial_breaks;
    {
        // grade the base mesh so panels near a patch are no larger than their distance to it
        auto too_big = [&](const MidPanel& p) {
            const double dr = p.r1 - p.r0, arc = p.r1 * (p.t1 - p.t0);
            const double s = std::max(dr, arc), reach = 0.5 * std::hypot(dr, arc);
            const cplx mid = d.mid_center + std::polar(0.5 * (p.r0 + p.r1), 0.5 * (p.t0 + p.t1));
            for (const auto& q : d.patches) {
                // the radial breaks already grade towards the polar centre
                if (std::abs(q.center - d.mid_center) <= 1e-12 * d.mid_outer_radius) continue;
                if (s > kGradingRatio * std::max(std::abs(mid - q.center) - reach, q.radius)) return true;
            }
            return false;
        };
        // an annulus well away from every off-centre patch sees only smooth periodic angular dependence
        auto ring_is_clear = [&](double r0, double r1) {
            for (const auto& q : d.patches) {
                const double dist = std::abs(q.center - d.mid_center);
                if (dist <= 1e-12 * d.mid_outer_radius) continue;
                const double gap = r0 > dist ? r0 - dist : (dist > r1 ? dist - r1 : -1.0);
                if (gap < std::max(2.0 * q.radius, 0.5 * dist)) return false;
            }
            return true;
        };
        std::vector<MidPanel> todo;
        for (std::size_t i = 0; i + 1 < br.size(); ++i) {
            if (ring_is_clear(br[i], br[i + 1])) {
                MidPanel ring{br[i], br[i + 1], 0.0, 2.0 * kPi, 0, {}};
                ring.ring_nodes = spec.angular_nodes;
                panels.push_back(ring);
                continue;
            }
            const int nt = d.angular_panels(i);
            for (int j = nt - 1; j >= 0; --j) {
                const double h = 2.0 * kPi / nt;
                todo.push_back({br[i], br[i + 1], h * j, h * (j + 1), 0, {}});
            }
            while (!todo.empty()) {
                const MidPanel p = todo.back();
                todo.pop_back();
                if (p.depth >= 48 || !too_big(p)) {
                    panels.push_back({p.r0, p.r1, p.t0, p.t1, 0, {}});
                    continue;
                }
                const double rm = 0.5 * (p.r0 + p.r1), tm = 0.5 * (p.t0 + p.t1);
                todo.push_back({rm, p.r1, tm, p.t1, p.depth + 1, {}});
                todo.push_back({p.r0, rm, tm, p.t1, p.depth + 1, {}});
                todo.push_back({rm, p.r1, p.t0, tm, p.depth + 1, {}});
                todo.push_back({p.r0, rm, p.t0, tm, p.depth + 1, {}});
            }
        }
    }

    auto parallel_for = [&](std::size_t count, auto&& body) {
        const int workers = std::max(1, spec.workers);
        if (workers == 1 || count < 2) {
            for (std::size_t i = 0; i < count; ++i) body(i);
            return;
        }
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) body(i);
            });
        for (auto& t : pool) t.join();
    };

    parallel_for(np, [&](std::size_t i) { patch_acc[i] = run_patch(i, std::numeric_limits<double>::infinity(), 0); });
    parallel_for(panels.size(), [&](std::size_t i) { eval_panel(panels[i]); });

    double l1 = 0.0;
    for (const auto& a : patch_acc) l1 += a.l1;
    for (const auto& p : panels) l1 += p.acc.l1;
    const double tol_abs = std::max(spec.target_rel_tol * l1, 1e-300);

    // Second pass: refine patches that miss their share of the tolerance.
    const double patch_tol = 0.5 * tol_abs / std::max<std::size_t>(1, np);
    std::vector<std::size_t> redo;
    for (std::size_t i = 0; i < np && spec.adaptive; ++i)
        if (patch_acc[i].err > patch_tol) redo.push_back(i);
    parallel_for(redo.size(), [&](std::size_t k) {
        const std::size_t i = redo[k];
        const std::size_t prev = patch_acc[i].evals;
        patch_acc[i] = run_patch(i, patch_tol, -1);
        patch_acc[i].evals += prev;
    });

    // Mid region: split the worst panel until the summed estimate meets the remaining budget.
    double mid_budget = tol_abs - std::accumulate(patch_acc.begin(), patch_acc.end(), 0.0,
                                                  [](double s, const Acc& a) { return s + a.err; });
    mid_budget = std::max(mid_budget, 0.25 * tol_abs);
    auto cmp = [&](std::size_t a, std::size_t b) {
        if (panels[a].acc.err != panels[b].acc.err) return panels[a].acc.err < panels[b].acc.err;
        return a > b;
    };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
    double mid_err = 0.0;
    for (std::size_t i = 0; i < panels.size(); ++i) {
        heap.push(i);
        mid_err += panels[i].acc.err;
    }
    std::vector<char> retired(panels.size(), 0);
    std::size_t extra_evals = 0;
    double stuck_err = 0.0;
    while (spec.adaptive && mid_err > mid_budget && !heap.empty()) {
        const std::size_t top = heap.top();
        if (panels[top].depth >= spec.refinement_depth) {
            heap.pop();  // cannot refine further; keep its contribution
            stuck_err += panels[top].acc.err;
            if (stuck_err >= mid_budget) break;
            continue;
        }
        heap.pop();
        const MidPanel parent = panels[top];
        retired[top] = 1;
        mid_err -= parent.acc.err;
        extra_evals += parent.acc.evals;
        const double rm = 0.5 * (parent.r0 + parent.r1), tm = 0.5 * (parent.t0 + parent.t1);
        std::vector<MidPanel> kids;
        if (parent.ring_nodes > 0 && parent.angular_limited) {
            kids.push_back({parent.r0, parent.r1, parent.t0, parent.t1, parent.depth + 1, {}, 2 * parent.ring_nodes});
        } else if (parent.ring_nodes > 0) {
            kids.push_back({parent.r0, rm, parent.t0, parent.t1, parent.depth + 1, {}, parent.ring_nodes});
            kids.push_back({rm, parent.r1, parent.t0, parent.t1, parent.depth + 1, {}, parent.ring_nodes});
        } else {
            kids = {{parent.r0, rm, parent.t0, tm, parent.depth + 1, {}},
                    {rm, parent.r1, parent.t0, tm, parent.depth + 1, {}},
                    {parent.r0, rm, tm, parent.t1, parent.depth + 1, {}},
                    {rm, parent.r1, tm, parent.t1, parent.depth + 1, {}}};
        }
        const std::size_t base = panels.size();
        for (const auto& k : kids) panels.push_back(k);
        retired.resize(panels.size(), 0);
        parallel_for(kids.size(), [&](std::size_t k) { eval_panel(panels[base + k]); });
        for (std::size_t k = 0; k < kids.size(); ++k) {
            mid_err += panels[base + k].acc.err;
            heap.push(base + k);
        }
    }

    // Deterministic reduction: patches in plan order, then live mid panels in creation order.
    Acc total;
    for (const auto& a : patch_acc) total += a;
    Acc mid;
    for (std::size_t i = 0; i < panels.size(); ++i)
        if (!retired[i]) mid += panels[i].acc;
    mid.converged = mid.err <= mid_budget * (1.0 + 1e-12);
    total += mid;

    QuadResult out;
    out.value = total.value / kPi;
    out.error = total.err / kPi;
    out.l1 = total.l1 / kPi;
    out.converged = total.err <= tol_abs * (1.0 + 1e-12) ||
                    (std::all_of(patch_acc.begin(), patch_acc.end(), [](const Acc& a) { return a.converged; }) &&
                     mid.converged);
    out.evaluations = total.evals + extra_evals;
    return out;
}

template <class F>
QuadResult integrate(const F& f, const SingularityProfile& profile, const QuadratureSpec& spec,
                     const Region& region = Region::plane()) {
    return integrate(f, plan(profile, spec, region), spec);
}

/// Principal value of int f with f = g / (z - z0)^2 near z0; the caller supplies g(z0). The profile must
/// list z0 (typically exponent -2 with angular order -2).
template <class F>
QuadResult integrate_pv(const F& f, cplx z0, cplx g_at_z0, const SingularityProfile& profile,
                        const QuadratureSpec& spec, const Region& region = Region::plane()) {
    if (!profile.find(z0))
        throw Error(ErrorCode::NonIntegrableProfile, "principal-value centre must be a declared singular point");
    const auto d = plan(profile, spec, region);
    for (const auto& p : d.patches)
        if (p.clipped && std::abs(p.center - z0) <= 1e-13 * std::max(1.0, std::abs(z0)))
            throw Error(ErrorCode::NonIntegrableProfile, "principal value on the region boundary");
    return integrate(f, d, spec, z0, g_at_z0, true);
}

}  // namespace conemoduli

#pragma once

// Value types for flat cone spheres in the normalized chart (u_0, u_1, u_{n-1}) = (0, 1, inf).

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "conemoduli/errors.hpp"

namespace conemoduli {

using cplx = std::complex<double>;

inline constexpr double kAngleSumTol = 1e-12;
inline constexpr double kMonodromyTol = 1e-10;
inline constexpr double kResidueTol = 1e-12;
inline constexpr double kDefaultMinSeparation = 1e-3;

/// Cone-angle data alpha_0..alpha_{n-1}, with sum 2 and every entry in (0, 1).
class AngleVector {
public:
    AngleVector() = default;

    std::size_t n() const { return alphas_.size(); }
    const std::vector<double>& alphas() const { return alphas_; }
    double operator[](std::size_t k) const { return alphas_[k]; }
    double at_infinity() const { return alphas_.back(); }
    const std::vector<cplx>& monodromy() const { return monodromy_; }

    friend AngleVector make_angle_vector(std::span<const double> values);

private:
    std::vector<double> alphas_;
    std::vector<cplx> monodromy_;
};

inline AngleVector make_angle_vector(std::span<const double> values) {
    if (values.size() < 4)
        throw Error(ErrorCode::ConfigInvalid, "need at least 4 cone angles, got " + std::to_string(values.size()));
    double sum = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double a = values[k];
        if (!(a > 0.0 && a < 1.0))
            throw Error(ErrorCode::AngleOutOfRange,
                        "alpha_" + std::to_string(k) + " = " + std::to_string(a) + " is not in (0, 1)");
        sum += a;
    }
    if (std::abs(sum - 2.0) > kAngleSumTol)
        throw Error(ErrorCode::GaussBonnetViolated, "sum of cone angles is " + std::to_string(sum) + ", expected 2");

    AngleVector out;
    out.alphas_.assign(values.begin(), values.end());
    out.monodromy_.reserve(values.size());
    cplx prod = 1.0;
    for (double a : values) {
        const cplx s = std::polar(1.0, 2.0 * std::numbers::pi * a);
        out.monodromy_.push_back(s);
        prod *= s;
    }
    if (std::abs(prod - 1.0) > kMonodromyTol)
        throw Error(ErrorCode::GaussBonnetViolated, "monodromy product differs from 1");
    return out;
}

inline AngleVector make_angle_vector(std::initializer_list<double> values) {
    return make_angle_vector(std::span<const double>(values.begin(), values.size()));
}

/// A normalized configuration in W_n: finite punctures (0, 1, u_2, ..., u_{n-2}); u_{n-1} is infinity.
class ModuliPoint {
public:
    ModuliPoint() = default;

    /// Builds the point from its free coordinates (u_2, ..., u_{n-2}).
    static ModuliPoint from_free(std::span<const cplx> free, double min_separation = kDefaultMinSeparation) {
        ModuliPoint p;
        p.min_separation_ = min_separation;
        p.finite_.reserve(free.size() + 2);
        p.finite_.push_back(0.0);
        p.finite_.push_back(1.0);
        p.finite_.insert(p.finite_.end(), free.begin(), free.end());
        for (std::size_t i = 0; i < p.finite_.size(); ++i) {
            if (!std::isfinite(p.finite_[i].real()) || !std::isfinite(p.finite_[i].imag()))
                throw Error(ErrorCode::ConfigInvalid, "puncture coordinates must be finite");
            for (std::size_t j = 0; j < i; ++j) {
                if (std::abs(p.finite_[i] - p.finite_[j]) < min_separation)
                    throw Error(ErrorCode::PunctureTooClose,
                                "punctures " + std::to_string(j) + " and " + std::to_string(i) + " are closer than " +
                                    std::to_string(min_separation));
            }
        }
        return p;
    }

    static ModuliPoint from_free(std::initializer_list<cplx> free, double min_separation = kDefaultMinSeparation) {
        return from_free(std::span<const cplx>(free.begin(), free.size()), min_separation);
    }

    /// Total number of punctures including infinity.
    std::size_t n() const { return finite_.size() + 1; }
    std::size_t dim() const { return finite_.size() - 2; }
    const std::vector<cplx>& finite_punctures() const { return finite_; }
    cplx operator[](std::size_t k) const { return finite_[k]; }
    std::span<const cplx> free_coords() const { return std::span<const cplx>(finite_).subspan(2); }
    double min_separation() const { return min_separation_; }

    double min_pairwise_distance() const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < finite_.size(); ++i)
            for (std::size_t j = 0; j < i; ++j) d = std::min(d, std::abs(finite_[i] - finite_[j]));
        return d;
    }

    double max_modulus() const {
        double m = 0.0;
        for (auto u : finite_) m = std::max(m, std::abs(u));
        return m;
    }

    /// Same configuration with free coordinate j (index into u_2..) shifted by delta.
    ModuliPoint shifted(std::size_t free_index, cplx delta) const {
        std::vector<cplx> f(free_coords().begin(), free_coords().end());
        f.at(free_index) += delta;
        return from_free(f, min_separation_);
    }

private:
    std::vector<cplx> finite_;
    double min_separation_ = kDefaultMinSeparation;
};

/// Integrable holomorphic quadratic differential sum_k rho_k / (z - u_k) dz^2.
class QuadDiff {
public:
    QuadDiff() = default;

    QuadDiff(std::vector<cplx> residues, ModuliPoint base) : residues_(std::move(residues)), base_(std::move(base)) {
        if (residues_.size() != base_.finite_punctures().size())
            throw Error(ErrorCode::ConstraintViolated, "one residue per finite puncture is required");
        cplx sum = 0.0, moment = 0.0;
        double scale = 0.0, moment_scale = 0.0;
        for (std::size_t k = 0; k < residues_.size(); ++k) {
            sum += residues_[k];
            moment += residues_[k] * base_[k];
            scale += std::abs(residues_[k]);
            moment_scale += std::abs(residues_[k]) * std::abs(base_[k]);
        }
        if (std::abs(sum) > kResidueTol * std::max(1.0, scale))
            throw Error(ErrorCode::ConstraintViolated, "residues do not sum to zero");
        if (std::abs(moment) > kResidueTol * std::max(1.0, moment_scale))
            throw Error(ErrorCode::ConstraintViolated, "first moment of residues is not zero");
    }

    const std::vector<cplx>& residues() const { return residues_; }
    const ModuliPoint& basepoint() const { return base_; }

    bool is_zero() const {
        return std::all_of(residues_.begin(), residues_.end(), [](cplx r) { return r == cplx(0.0); });
    }

    /// Value without the pole-proximity check; callers guarantee z is not a puncture.
    cplx eval_unchecked(cplx z) const {
        cplx v = 0.0;
        const auto& u = base_.finite_punctures();
        for (std::size_t k = 0; k < residues_.size(); ++k)
            if (residues_[k] != cplx(0.0)) v += residues_[k] / (z - u[k]);
        return v;
    }

    cplx operator()(cplx z) const {
        const auto& u = base_.finite_punctures();
        for (std::size_t k = 0; k < u.size(); ++k)
            if (std::abs(z - u[k]) < base_.min_separation() / 10.0)
                throw Error(ErrorCode::EvalAtPole, "quadratic differential evaluated at puncture " + std::to_string(k));
        return eval_unchecked(z);
    }

private:
    std::vector<cplx> residues_;
    ModuliPoint base_;
};

inline cplx quad_diff_eval(const QuadDiff& q, cplx z) { return q(z); }

/// A bounded smooth Beltrami coefficient supported in a disk.
struct SmoothCompact {
    std::function<cplx(cplx)> fn;  // must vanish outside the support disk
    cplx center = 0.0;
    double support_radius = 1.0;
    double sup_norm = 0.0;
};

/// The harmonic representative a = conj(psi) * prod |z - u_k|^{2 alpha_k} * Vol.
struct Harmonic {
    QuadDiff psi;
    AngleVector alpha;
    double vol = 1.0;
};

class BeltramiRep {
public:
    BeltramiRep(SmoothCompact s) : rep_(std::move(s)) {}
    BeltramiRep(Harmonic h) : rep_(std::move(h)) {
        const auto& hh = std::get<Harmonic>(rep_);
        if (hh.alpha.n() != hh.psi.basepoint().n())
            throw Error(ErrorCode::ConfigInvalid, "angle vector and moduli point have different n");
    }

    bool is_harmonic() const { return std::holds_alternative<Harmonic>(rep_); }
    const Harmonic& harmonic() const { return std::get<Harmonic>(rep_); }
    const SmoothCompact& smooth() const { return std::get<SmoothCompact>(rep_); }

    /// Pointwise value; for harmonic representatives z must avoid all punctures.
    cplx operator()(cplx z) const {
        if (auto* s = std::get_if<SmoothCompact>(&rep_)) {
            if (std::abs(z - s->center) >= s->support_radius) return 0.0;
            return s->fn(z);
        }
        const auto& h = std::get<Harmonic>(rep_);
        return std::conj(h.psi(z)) * weight(h, z);
    }

    cplx eval_unchecked(cplx z) const {
        if (auto* s = std::get_if<SmoothCompact>(&rep_)) {
            if (std::abs(z - s->center) >= s->support_radius) return 0.0;
            return s->fn(z);
        }
        const auto& h = std::get<Harmonic>(rep_);
        return std::conj(h.psi.eval_unchecked(z)) * weight(h, z);
    }

private:
    static double weight(const Harmonic& h, cplx z) {
        const auto& u = h.psi.basepoint().finite_punctures();
        double log_w = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) log_w += 2.0 * h.alpha[k] * std::log(std::abs(z - u[k]));
        return std::exp(log_w) * h.vol;
    }

    std::variant<SmoothCompact, Harmonic> rep_;
};

inline cplx beltrami_eval(const BeltramiRep& b, cplx z) { return b(z); }

/// C-infinity bump exp(1 - 1/(1 - t^2)) on the disk |z - center| < radius, modulated by
/// amplitude * (1 + tilt * (z - center)) so that pairings against quadratic differentials are generic.
inline SmoothCompact smooth_bump(cplx center, double radius, cplx amplitude = 1.0, cplx tilt = 0.0) {
    SmoothCompact s;
    s.center = center;
    s.support_radius = radius;
    s.fn = [center, radius, amplitude, tilt](cplx z) -> cplx {
        const double t2 = std::norm(z - center) / (radius * radius);
        if (t2 >= 1.0) return 0.0;
        return amplitude * (1.0 + tilt * (z - center)) * std::exp(1.0 - 1.0 / (1.0 - t2));
    };
    s.sup_norm = std::abs(amplitude) * (1.0 + std::abs(tilt) * radius);
    return s;
}

/// (n-3) x (n-3) Hermitian Gram matrix with per-entry error bounds.
struct HermitianGram {
    Eigen::MatrixXcd entries;
    Eigen::MatrixXd error;

    std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }

    bool is_hermitian(double slack_factor = 10.0, double floor = 1e-14) const {
        for (Eigen::Index j = 0; j < entries.rows(); ++j)
            for (Eigen::Index k = 0; k < entries.cols(); ++k) {
                const double tol = slack_factor * std::max(error(j, k), error(k, j)) +
                                   floor * std::max(1.0, std::abs(entries(j, k)));
                if (std::abs(entries(j, k) - std::conj(entries(k, j))) > tol) return false;
            }
        return true;
    }

    Eigen::VectorXd eigenvalues() const {
        const Eigen::MatrixXcd sym = 0.5 * (entries + entries.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sym, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

    bool is_positive_definite() const {
        const auto ev = eigenvalues();
        return ev.size() > 0 && ev.minCoeff() > 0.0;
    }
};

}  // namespace conemoduli

#pragma once

// Brute-force reference integrators used as test oracles. Nothing here shares code with the library
// quadrature: plain midpoint sums on graded tensor grids, accumulated in long double.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;

struct Node {
    double x, w;
};

/// Midpoint nodes on [a, b] graded toward both endpoints by t -> t^q / (t^q + (1 - t)^q).
inline std::vector<Node> graded(double a, double b, int cells, double q) {
    std::vector<Node> out;
    out.reserve(cells);
    for (int i = 0; i < cells; ++i) {
        const double t = (i + 0.5) / cells;
        const double p = std::pow(t, q), m = std::pow(1.0 - t, q);
        const double g = p / (p + m);
        const double dp = q * std::pow(t, q - 1.0), dm = -q * std::pow(1.0 - t, q - 1.0);
        const double dg = (dp * (p + m) - p * (dp + dm)) / ((p + m) * (p + m));
        out.push_back({a + (b - a) * g, (b - a) * dg / cells});
    }
    return out;
}

/// int f dx dy / pi over the plane on a polar grid about 0. Every singular point of f must sit on a
/// grid corner: its modulus in `radii` and its argument in `angles` (0 itself is the polar centre).
/// Beyond the last radius b the substitution r = b / s maps the far field onto s in (0, 1].
inline double polar_plane(const std::function<double(cplx)>& f, std::vector<double> radii, std::vector<double> angles,
                          int radial_cells, int angular_cells, double q = 3.0) {
    std::sort(radii.begin(), radii.end());
    for (auto& t : angles) t = std::fmod(std::fmod(t, 2 * pi) + 2 * pi, 2 * pi);
    angles.push_back(0.0);
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
                 angles.end());
    angles.push_back(2 * pi);

    std::vector<Node> r;
    double lo = 0.0;
    for (double b : radii) {
        for (const auto& n : graded(lo, b, radial_cells, q)) r.push_back(n);
        lo = b;
    }
    for (const auto& n : graded(0.0, 1.0, radial_cells, q)) r.push_back({lo / n.x, lo / (n.x * n.x) * n.w});

    std::vector<Node> t;
    for (std::size_t k = 0; k + 1 < angles.size(); ++k)
        for (const auto& n : graded(angles[k], angles[k + 1], angular_cells, q)) t.push_back(n);

    long double sum = 0.0L;
    for (const auto& rn : r) {
        long double row = 0.0L;
        for (const auto& tn : t) row += tn.w * f(std::polar(rn.x, tn.x));
        sum += row * rn.x * rn.w;
    }
    return static_cast<double>(sum / pi);
}

/// Same over the disk |z - c| < R (no far map); singular points on corners as above, relative to c.
inline cplx polar_disk(const std::function<cplx(cplx)>& f, cplx c, double R, std::vector<double> radii,
                       std::vector<double> angles, int radial_cells, int angular_cells, double q = 3.0) {
    radii.push_back(R);
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    angles.push_back(0.0);
    std::sort(angles.begin(), angles.end());
    angles.push_back(2 * pi);
    std::vector<Node> r;
    double lo = 0.0;
    for (double b : radii) {
        if (b > R) break;
        for (const auto& n : graded(lo, b, radial_cells, q)) r.push_back(n);
        lo = b;
    }
    std::vector<Node> t;
    for (std::size_t k = 0; k + 1 < angles.size(); ++k)
        if (angles[k + 1] - angles[k] > 1e-14)
            for (const auto& n : graded(angles[k], angles[k + 1], angular_cells, q)) t.push_back(n);
    std::complex<long double> sum = 0.0L;
    for (const auto& rn : r) {
        std::complex<long double> row = 0.0L;
        for (const auto& tn : t) {
            const cplx v = f(c + std::polar(rn.x, tn.x));
            row += std::complex<long double>(v.real(), v.imag()) * static_cast<long double>(tn.w);
        }
        sum += row * static_cast<long double>(rn.x * rn.w);
    }
    return {static_cast<double>(sum.real() / pi), static_cast<double>(sum.imag() / pi)};
}

/// Cauchy-type transform of the unit-disk indicator: int_D |d zeta|^2 / (zeta - w).
inline cplx disk_cauchy(cplx w) { return std::abs(w) <= 1.0 ? -std::conj(w) : -1.0 / w; }

}  // namespace oracle

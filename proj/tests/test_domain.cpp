#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "conemoduli/domain.hpp"
#include "conemoduli/kernels.hpp"

using namespace conemoduli;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::IoFailure;
}

ModuliPoint u012() { return ModuliPoint::from_free({cplx(2.0)}); }

}  // namespace

TEST(AngleVector, SymmetricFourAnglesHaveMonodromyMinusOne) {
    const auto a = make_angle_vector({0.5, 0.5, 0.5, 0.5});
    ASSERT_EQ(a.n(), 4u);
    for (const auto& s : a.monodromy()) EXPECT_LT(std::abs(s - cplx(-1.0)), 1e-15);
    EXPECT_DOUBLE_EQ(a.at_infinity(), 0.5);
}

TEST(AngleVector, GenericFiveAngles) {
    const auto a = make_angle_vector({0.3, 0.4, 0.5, 0.35, 0.45});
    cplx prod = 1.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < a.n(); ++k) {
        prod *= a.monodromy()[k];
        sum += a[k];
    }
    EXPECT_NEAR(sum, 2.0, 1e-12);
    EXPECT_LT(std::abs(prod - 1.0), 1e-10);
}

TEST(AngleVector, Rejections) {
    EXPECT_EQ(code_of([] { make_angle_vector({0.5, 0.5, 0.5, 0.4}); }), ErrorCode::GaussBonnetViolated);
    EXPECT_EQ(code_of([] { make_angle_vector({1.0, 0.5, 0.3, 0.2}); }), ErrorCode::AngleOutOfRange);
    EXPECT_EQ(code_of([] { make_angle_vector({0.0, 0.7, 0.7, 0.6}); }), ErrorCode::AngleOutOfRange);
    EXPECT_EQ(code_of([] { make_angle_vector({0.7, 0.7, 0.6}); }), ErrorCode::ConfigInvalid);
}

TEST(ModuliPoint, NormalizationAndSeparation) {
    const auto u = ModuliPoint::from_free({cplx(2, 1), cplx(-1, 0)});
    EXPECT_EQ(u.n(), 5u);
    EXPECT_EQ(u.dim(), 2u);
    EXPECT_EQ(u[0], cplx(0.0));
    EXPECT_EQ(u[1], cplx(1.0));
    EXPECT_EQ(code_of([] { ModuliPoint::from_free({cplx(1.0005, 0)}); }), ErrorCode::PunctureTooClose);
    EXPECT_EQ(code_of([] { ModuliPoint::from_free({cplx(1.5, 0)}, 0.6); }), ErrorCode::PunctureTooClose);
    EXPECT_NO_THROW(ModuliPoint::from_free({cplx(1.002, 0)}));
}

TEST(QuadDiff, ConstraintsEnforced) {
    const auto u01 = ModuliPoint::from_free(std::vector<cplx>{});
    EXPECT_EQ(code_of([&] { QuadDiff({1.0, -1.0}, u01); }), ErrorCode::ConstraintViolated);
    EXPECT_EQ(code_of([] { QuadDiff({1.0, -2.0, 1.1}, u012()); }), ErrorCode::ConstraintViolated);
    EXPECT_EQ(code_of([] { QuadDiff({1.0, -2.0}, u012()); }), ErrorCode::ConstraintViolated);
}

TEST(QuadDiff, EvaluatesPartialFractions) {
    const QuadDiff q({1.0, -2.0, 1.0}, u012());
    EXPECT_LT(std::abs(q(3.0) - cplx(1.0 / 3.0)), 1e-15);
    EXPECT_EQ(code_of([&] { q(cplx(1.0)); }), ErrorCode::EvalAtPole);
    const QuadDiff zero({0.0, 0.0, 0.0}, u012());
    EXPECT_TRUE(zero.is_zero());
    EXPECT_EQ(quad_diff_eval(zero, cplx(0.3, 0.7)), cplx(0.0));
}

TEST(QuadDiff, DualBasisElementMatchesKernelClosedForm) {
    const QuadDiff q({1.0, -2.0, 1.0}, u012());
    const cplx zeta = -1.0, z = 2.0;
    const cplx closed = z * (z - 1.0) / (zeta * (zeta - 1.0) * (zeta - z));
    EXPECT_LT(std::abs(q(zeta) - closed), 1e-15);
    EXPECT_LT(std::abs(r_kernel(zeta, z) - closed), 1e-15);
}

TEST(QuadDiff, DecaysLikeInverseCubeSoIntegrableAtInfinity) {
    const auto u = ModuliPoint::from_free({cplx(2, 1), cplx(-1, 0.5)});
    const QuadDiff q({cplx(2, 1) - 1.0 + cplx(0.3, 0.1) * (cplx(-1, 0.5) - 1.0), -cplx(2, 1) - cplx(0.3, 0.1) * cplx(-1, 0.5),
                      1.0, cplx(0.3, 0.1)},
                     u);
    const cplx dir = std::polar(1.0, 0.37);
    std::vector<double> lx, ly;
    for (double r : {1e2, 1e3, 1e4}) {
        lx.push_back(std::log(r));
        ly.push_back(std::log(std::abs(q(dir * r))));
    }
    EXPECT_LE(ls_slope(lx, ly), -2.0 + 0.05);
}

TEST(Beltrami, ZeroRepresentatives) {
    SmoothCompact s;
    s.fn = [](cplx) { return cplx(0.0); };
    s.center = 0.0;
    s.support_radius = 1.0;
    const BeltramiRep mu(s);
    EXPECT_EQ(beltrami_eval(mu, cplx(0.2, 0.1)), cplx(0.0));
    const auto alpha = make_angle_vector({0.5, 0.5, 0.5, 0.5});
    const BeltramiRep a(Harmonic{QuadDiff({0.0, 0.0, 0.0}, u012()), alpha, 1.0});
    EXPECT_EQ(beltrami_eval(a, cplx(3.0, 0.5)), cplx(0.0));
}

TEST(Beltrami, HarmonicValueAtThree) {
    const auto alpha = make_angle_vector({0.5, 0.5, 0.5, 0.5});
    const BeltramiRep a(Harmonic{QuadDiff({1.0, -2.0, 1.0}, u012()), alpha, 1.0});
    EXPECT_LT(std::abs(beltrami_eval(a, 3.0) - cplx(2.0)), 1e-14);
}

TEST(Beltrami, HarmonicAgreesWithDefinition) {
    const auto alpha = make_angle_vector({0.3, 0.4, 0.5, 0.35, 0.45});
    const auto u = ModuliPoint::from_free({cplx(2, 1), cplx(-1, 0)});
    const QuadDiff psi({cplx(1, 1), cplx(-2, -1), cplx(1, 0), cplx(0, 0)}, u);
    const double vol = 3.7;
    const BeltramiRep a(Harmonic{psi, alpha, vol});
    for (cplx z : {cplx(0.4, -0.3), cplx(5, 2), cplx(-0.7, 1.9)}) {
        double w = vol;
        for (std::size_t k = 0; k < 4; ++k) w *= std::pow(std::abs(z - u[k]), 2.0 * alpha[k]);
        EXPECT_LT(std::abs(a(z) - std::conj(psi(z)) * w), 1e-13 * std::abs(a(z)));
    }
}

TEST(Beltrami, HarmonicGrowthNearPunctures) {
    const auto alpha = make_angle_vector({0.3, 0.4, 0.5, 0.35, 0.45});
    const auto u = ModuliPoint::from_free({cplx(2, 1), cplx(-1, 0)});
    // residues non-zero at every finite puncture
    const QuadDiff psi({cplx(1, 0) * (cplx(2, 1) - 1.0) + 0.5 * (cplx(-1, 0) - 1.0), -cplx(2, 1) - 0.5 * cplx(-1, 0),
                        1.0, 0.5},
                       u);
    const BeltramiRep a(Harmonic{psi, alpha, 1.0});
    for (std::size_t k = 0; k < 4; ++k) {
        std::vector<double> lx, ly;
        for (double r : {1e-3, 1e-4, 1e-5, 1e-6}) {
            lx.push_back(std::log(r));
            ly.push_back(std::log(std::abs(a.eval_unchecked(u[k] + std::polar(r, 0.9)))));
        }
        EXPECT_NEAR(ls_slope(lx, ly), 2.0 * alpha[k] - 1.0, 0.05) << "puncture " << k;
    }
}

TEST(Beltrami, SmoothBumpVanishesOutsideSupport) {
    const auto s = smooth_bump(cplx(0.5, 0.5), 0.3, cplx(2, -1), cplx(0.4, 0.2));
    EXPECT_EQ(s.fn(cplx(0.5, 0.81)), cplx(0.0));
    EXPECT_GT(std::abs(s.fn(cplx(0.5, 0.5))), 0.0);
    double sup = 0.0;
    for (int i = 0; i <= 200; ++i)
        for (int j = 0; j <= 200; ++j) sup = std::max(sup, std::abs(s.fn(cplx(0.2 + 0.003 * i, 0.2 + 0.003 * j))));
    EXPECT_LE(sup, s.sup_norm * (1.0 + 1e-12));
}

TEST(HermitianGram, PropertiesOfConstructedMatrices) {
    HermitianGram g;
    g.entries.resize(2, 2);
    g.entries << 2.0, cplx(0.5, 0.3), cplx(0.5, -0.3), 1.0;
    g.error = Eigen::MatrixXd::Constant(2, 2, 1e-12);
    EXPECT_TRUE(g.is_hermitian());
    EXPECT_TRUE(g.is_positive_definite());
    g.entries(1, 1) = 0.1;
    EXPECT_FALSE(g.is_positive_definite());
    g.entries(1, 0) = cplx(0.5, 0.3);
    EXPECT_FALSE(g.is_hermitian());
}

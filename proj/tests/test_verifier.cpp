#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "conemoduli/verifier.hpp"

using namespace conemoduli;

namespace {

ErrorCode code_of(const std::string& yaml) {
    try {
        parse_config_text(yaml);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "accepted: " << yaml;
    return ErrorCode::IoFailure;
}

// a cheap configuration exercising every per-point field that the theorem check fills
const char* kSmall = R"(
seed: 7
quadrature: {target_rel_tol: 1.0e-7}
checks: {theorem: true, d_constancy: true}
d_constancy: {samples: 4}
angle_sets:
  - name: sym
    alphas: [0.5, 0.5, 0.5, 0.5]
    points: [2.0, [1.5, 0.5]]
    sweeps: [{seed: 3, count: 1, box: [-2, 3, -2, 2], min_separation: 0.5}]
)";

json without_run_info(const VerificationReport& r) {
    json j = r;
    j.erase("run_info");
    return j;
}

}  // namespace

TEST(Config, DefaultsAndComplexForms) {
    const auto c = parse_config_text(R"(
angle_sets:
  - name: five
    alphas: [0.3, 0.4, 0.5, 0.35, 0.45]
    points:
      - [2, 3]
      - [[2, 1], -1]
      - [{re: 0.5, im: 0.5}, [3, -2]]
)");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_DOUBLE_EQ(c.tolerances.theorem_rel_tol, 1e-3);
    EXPECT_DOUBLE_EQ(c.tolerances.route_agreement_tol, 1e-4);
    EXPECT_DOUBLE_EQ(c.tolerances.d_constancy_tol, 1e-3);
    EXPECT_TRUE(c.checks.theorem);
    EXPECT_FALSE(c.checks.operators);
    ASSERT_EQ(c.angle_sets.size(), 1u);
    const auto& pts = c.angle_sets[0].points;
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_EQ(pts[1][0], cplx(2, 1));
    EXPECT_EQ(pts[1][1], cplx(-1, 0));
    EXPECT_EQ(pts[2][0], cplx(0.5, 0.5));
}

TEST(Config, Rejections) {
    EXPECT_EQ(code_of("angle_sets: [{alphas: [0.5, 0.5, 0.5, 0.4]}]"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("angle_sets: [{alphas: [0.5, 0.5, 0.5, 0.5], points: [[2, 3, 4]]}]"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("angle_sets: [{alphas: [0.5, 0.5, 0.5, 0.5], points: [1.0]}]"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("seeds: 3"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("checks: {theorm: true}"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("tolerances: {theorem_rel_tol: 0}"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("quadrature: {angular_nodes: 63}"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("threads: 0"), ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("angle_sets: [{alphas: [0.5, 0.5, 0.5, 0.5], sweeps: [{count: 2, box: [1, 0, 0, 1]}]}]"),
              ErrorCode::ConfigInvalid);
    EXPECT_EQ(code_of("seed: [1"), ErrorCode::ConfigInvalid);
    EXPECT_THROW(load_config("/nonexistent/config.yaml"), Error);
}

TEST(Verify, EmptyConfigPassesVacuously) {
    const auto r = run_verify(parse_config_text("angle_sets: []"));
    EXPECT_TRUE(r.passed);
    EXPECT_TRUE(r.points.empty());
    EXPECT_TRUE(r.global_checks.empty());
    EXPECT_EQ(to_csv(r), "point_id,check,value,tolerance,pass\n");
}

TEST(Verify, NumericFailureIsRecordedNotThrown) {
    const auto cfg = parse_config_text(R"(
fd_step: 1.0e-12
checks: {theorem: true, d_constancy: true}
angle_sets: [{name: s, alphas: [0.5, 0.5, 0.5, 0.5], points: [2.0, 3.0]}]
)");
    const auto r = run_verify(cfg);
    EXPECT_FALSE(r.passed);
    ASSERT_EQ(r.points.size(), 2u);
    for (const auto& p : r.points) {
        EXPECT_EQ(p.error_code, std::optional<std::string>("FDStepDegenerate"));
        ASSERT_EQ(p.checks.size(), 2u);
        for (const auto& c : p.checks) EXPECT_EQ(c.status, "fail");
    }
    EXPECT_EQ(exit_code_for(ErrorCode::FDStepDegenerate), 1);
}

TEST(Verify, ExitCodeContract) {
    EXPECT_EQ(exit_code_for(ErrorCode::ConfigInvalid), 2);
    EXPECT_EQ(exit_code_for(ErrorCode::GaussBonnetViolated), 2);
    EXPECT_EQ(exit_code_for(ErrorCode::IoFailure), 3);
    EXPECT_EQ(exit_code_for(ErrorCode::NonIntegrableProfile), 1);
}

class SmallRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        cfg_ = new ExperimentConfig(parse_config_text(kSmall));
        one_ = new VerificationReport(run_verify(*cfg_, 1));
        two_ = new VerificationReport(run_verify(*cfg_, 2));
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete one_;
        delete two_;
    }
    static ExperimentConfig* cfg_;
    static VerificationReport* one_;
    static VerificationReport* two_;
};

ExperimentConfig* SmallRun::cfg_ = nullptr;
VerificationReport* SmallRun::one_ = nullptr;
VerificationReport* SmallRun::two_ = nullptr;

TEST_F(SmallRun, TheoremHoldsAtEveryPoint) {
    const auto& r = *one_;
    ASSERT_EQ(r.points.size(), 3u);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.points[2].id, "sym/sweep0/0");
    EXPECT_EQ(r.points[2].sweep_seed, std::optional<std::uint64_t>(3));
    ASSERT_TRUE(r.points[2].rejections.has_value());
    for (const auto& p : r.points) {
        ASSERT_TRUE(p.max_rel_dev.has_value());
        EXPECT_LE(*p.max_rel_dev, 1e-3);
        EXPECT_EQ(p.punctures.size(), 3u);
        EXPECT_EQ(p.d_constancy.size(), 1u);
        EXPECT_EQ(p.d_constancy[0].values.size(), 4u);
    }
}

TEST_F(SmallRun, ByteIdenticalAcrossThreadCounts) {
    EXPECT_EQ(without_run_info(*one_).dump(2), without_run_info(*two_).dump(2));
    EXPECT_EQ(two_->run_info["threads"], 2);
    const auto again = run_verify(*cfg_, 1);
    EXPECT_EQ(without_run_info(*one_).dump(2), without_run_info(again).dump(2));
}

TEST_F(SmallRun, JsonRoundTripFieldForField) {
    const auto& r = *one_;
    const auto back = parse_report(json(r).dump(2));
    EXPECT_EQ(json(back), json(r));
    ASSERT_EQ(back.points.size(), r.points.size());
    for (std::size_t i = 0; i < r.points.size(); ++i) {
        const auto &a = r.points[i], &b = back.points[i];
        EXPECT_EQ(a.id, b.id);
        EXPECT_EQ(a.punctures, b.punctures);
        EXPECT_EQ(a.area, b.area);
        EXPECT_EQ(a.grad, b.grad);
        EXPECT_EQ(a.tv_gram->entries, b.tv_gram->entries);
        EXPECT_EQ(a.wp_cometric->error, b.wp_cometric->error);
        EXPECT_EQ(a.max_rel_dev, b.max_rel_dev);
        EXPECT_EQ(a.d_constancy[0].values, b.d_constancy[0].values);
        EXPECT_EQ(a.curvature.has_value(), b.curvature.has_value());
        ASSERT_EQ(a.checks.size(), b.checks.size());
        for (std::size_t k = 0; k < a.checks.size(); ++k) {
            EXPECT_EQ(a.checks[k].check, b.checks[k].check);
            EXPECT_EQ(a.checks[k].value, b.checks[k].value);
            EXPECT_EQ(a.checks[k].status, b.checks[k].status);
        }
    }
    EXPECT_EQ(back.passed, r.passed);
    EXPECT_EQ(back.tool, "cone-moduli");
}

TEST_F(SmallRun, ComplexNumbersSerializeAsReIm) {
    const json j = *one_;
    const auto& z = j["points"][1]["punctures"][2];
    EXPECT_EQ(z["re"], 1.5);
    EXPECT_EQ(z["im"], 0.5);
}

TEST_F(SmallRun, CsvHasOneRowPerPointAndCheck) {
    const std::string csv = to_csv(*one_);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "point_id,check,value,tolerance,pass");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
    }
    EXPECT_EQ(rows, 3 * 2);
}

TEST_F(SmallRun, EmitWritesBothFormats) {
    const auto dir = std::filesystem::temp_directory_path() / "cone_moduli_emit_test";
    std::filesystem::create_directories(dir);
    emit(*one_, Format::Json, (dir / "r.json").string());
    emit(*one_, Format::Csv, (dir / "r.csv").string());
    std::ifstream j(dir / "r.json");
    std::stringstream ss;
    ss << j.rdbuf();
    EXPECT_EQ(json(parse_report(ss.str())), json(*one_));
    std::ifstream c(dir / "r.csv");
    std::stringstream cs;
    cs << c.rdbuf();
    EXPECT_EQ(cs.str(), to_csv(*one_));
    try {
        emit(*one_, Format::Json, (dir / "missing" / "r.json").string());
        ADD_FAILURE() << "no error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoFailure);
        EXPECT_EQ(exit_code_for(e.code()), 3);
    }
    std::filesystem::remove_all(dir);
}

TEST(Threads, EnvironmentFallback) {
    ::unsetenv("CONE_MODULI_THREADS");
    EXPECT_EQ(resolve_threads(std::nullopt, 3), 3);
    ::setenv("CONE_MODULI_THREADS", "5", 1);
    EXPECT_EQ(resolve_threads(std::nullopt, 3), 5);
    EXPECT_EQ(resolve_threads(2, 3), 2);
    ::setenv("CONE_MODULI_THREADS", "many", 1);
    EXPECT_THROW(resolve_threads(std::nullopt, 3), Error);
    ::unsetenv("CONE_MODULI_THREADS");
}

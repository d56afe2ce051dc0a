#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "conemoduli/verifier.hpp"

using namespace conemoduli;

namespace {

struct GridAxis {
    double from = 0, to = 0;
    int count = 0;
};

GridAxis parse_axis(const std::string& s) {
    GridAxis a;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    if (!(in >> a.from >> c1 >> a.to >> c2 >> a.count) || c1 != ':' || c2 != ':' || a.count < 1 || !in.eof())
        throw Error(ErrorCode::ConfigInvalid, "grid axis must look like from:to:count, got '" + s + "'");
    return a;
}

double axis_value(const GridAxis& a, int i) {
    return a.count == 1 ? a.from : a.from + (a.to - a.from) * i / (a.count - 1);
}

int run_potential(const ExperimentConfig& cfg, const std::string& grid, const std::string& out_path) {
    const auto comma = grid.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::ConfigInvalid, "grid is 're0:re1:n,im0:im1:m'");
    const auto re = parse_axis(grid.substr(0, comma)), im = parse_axis(grid.substr(comma + 1));
    if (cfg.angle_sets.empty()) throw Error(ErrorCode::ConfigInvalid, "potential needs an angle set");
    const auto& set = cfg.angle_sets.front();
    if (set.alphas.size() != 4) throw Error(ErrorCode::ConfigInvalid, "potential tabulates n = 4 angle sets");
    const auto alpha = make_angle_vector(set.alphas);

    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw Error(ErrorCode::IoFailure, "cannot open " + out_path);
    }
    std::ostream& os = out_path.empty() ? std::cout : file;
    os << "re,im,area,error,status\n";
    for (int i = 0; i < re.count; ++i)
        for (int k = 0; k < im.count; ++k) {
            const cplx w(axis_value(re, i), axis_value(im, k));
            os << csv_number(w.real()) << ',' << csv_number(w.imag()) << ',';
            try {
                const auto u = ModuliPoint::from_free({w}, cfg.min_separation);
                const auto a = area(alpha, u, cfg.quadrature);
                os << csv_number(a.value.real()) << ',' << csv_number(a.error) << ','
                   << (a.converged ? "ok" : "unconverged") << '\n';
            } catch (const Error& e) {
                os << "nan,nan," << to_string(e.code()) << '\n';
            }
        }
    if (!os) throw Error(ErrorCode::IoFailure, "write failed");
    return 0;
}

void print_summary(const VerificationReport& r) {
    for (const auto& p : r.points) {
        std::printf("%-28s", p.id.c_str());
        for (const auto& c : p.checks)
            std::printf("  %s=%s", c.check.c_str(), c.status.c_str());
        if (p.error_code) std::printf("  [%s: %s]", p.error_code->c_str(), p.error_message->c_str());
        std::printf("\n");
    }
    for (const auto& c : r.global_checks)
        std::printf("%-28s  value=%s  tol=%g  %s\n", c.check.c_str(),
                    c.value ? csv_number(*c.value).c_str() : "nan", c.tolerance, c.status.c_str());
    std::printf("%s\n", r.passed ? "PASS" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cone-sphere moduli: compare the area-potential metric with the cometric inverse"};
    app.require_subcommand(1);

    std::string config_path, out_path, csv_path, grid;
    bool deterministic = false;
    std::optional<int> threads;

    auto* verify = app.add_subcommand("verify", "run every enabled check and write the report");
    verify->add_option("--config", config_path, "experiment config (YAML)")->required();
    verify->add_option("--out", out_path, "JSON report path");
    verify->add_option("--csv", csv_path, "CSV report path");
    verify->add_flag("--deterministic", deterministic, "fixed-order reductions");
    verify->add_option("--threads", threads, "worker threads (falls back to CONE_MODULI_THREADS)");

    auto* ops = app.add_subcommand("operators", "operator property suite only");
    ops->add_option("--config", config_path, "experiment config (YAML)")->required();
    ops->add_option("--out", out_path, "JSON report path");
    ops->add_option("--csv", csv_path, "CSV report path");
    ops->add_option("--threads", threads, "worker threads");

    auto* pot = app.add_subcommand("potential", "tabulate the area A over a grid of u_2 values");
    pot->add_option("--config", config_path, "experiment config (YAML)")->required();
    pot->add_option("--grid", grid, "re0:re1:n,im0:im1:m")->required();
    pot->add_option("--out", out_path, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        auto cfg = load_config(config_path);
        if (deterministic) cfg.deterministic = true;
        if (*pot) return run_potential(cfg, grid, out_path);
        if (*ops) {
            cfg.checks = CheckToggles{false, true, true, false, true};
        }
        const int nt = resolve_threads(threads, cfg.threads);
        const auto report = run_verify(cfg, nt);
        if (!out_path.empty()) emit(report, Format::Json, out_path);
        if (!csv_path.empty()) emit(report, Format::Csv, csv_path);
        print_summary(report);
        return report.passed ? 0 : 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
}

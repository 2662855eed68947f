#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "config.hpp"
#include "io.hpp"
#include "linearized.hpp"

namespace boltz {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int error = 1;
inline constexpr int fail = 2;
inline constexpr int abort = 3;
}  // namespace exit_code

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    if (!os) throw Error("cannot write " + p.string());
    os << j.dump(2) << '\n';
}

inline std::string provenance(const RunConfig& cfg) { return cfg.to_json().dump(); }

}  // namespace detail

inline int cmd_certify(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& os) {
    const DistributionField F0 = build_initial(cfg);
    const Certificate c = certify(F0, cfg.step.beta, cfg.epsilon0, cfg.m_bar, cfg.step.c4_tilde);
    nlohmann::json j = {{"config", cfg.to_json()}, {"certificate", c.to_json()}};
    detail::write_json(out / (cfg.prefix + "_certificate.json"), j);
    os << "certificate: " << (c.pass ? "pass" : "fail") << " entropy=" << c.entropy << " l1x_linfv=" << c.l1x_linfv
       << " winf_beta=" << c.winf_beta << " t1=" << c.t1 << '\n';
    return c.pass ? exit_code::ok : exit_code::fail;
}

inline int cmd_run(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& os) {
    const DistributionField F0 = build_initial(cfg);
    const CollisionOperator op = cfg.make_operator();
    const std::string meta = detail::provenance(cfg);
    const Certificate cert = certify(F0, cfg.step.beta, cfg.epsilon0, cfg.m_bar, cfg.step.c4_tilde);
    os << "certificate (advisory): " << (cert.pass ? "pass" : "fail") << '\n';

    RunHooks hooks;
    hooks.log = &os;
    hooks.checkpoint_every = cfg.checkpoint_every;
    int ck = 0;
    hooks.checkpoint = [&](double, const DistributionField& F) {
        char name[64];
        std::snprintf(name, sizeof name, "_ckpt_%04d.bzf", ++ck);
        write_field((out / (cfg.prefix + name)).string(), F, meta);
    };
    hooks.dump = [&](const DistributionField& F) {
        const auto p = out / (cfg.prefix + "_abort.bzf");
        write_field(p.string(), F, meta);
        return p.string();
    };
    DiagnosticsSeries ser;
    try {
        ser = run(F0, cfg.step, op, hooks);
    } catch (const SolverAbort& e) {
        std::cerr << "solver abort: " << e.what() << " (state dump: " << e.dump_path << ")\n";
        return exit_code::abort;
    }
    {
        std::ofstream csv(out / (cfg.prefix + "_series.csv"));
        if (!csv) throw Error("cannot write series CSV");
        ser.write_csv(csv, {"config: " + meta});
    }
    nlohmann::json j = ser.to_json();
    j["config"] = cfg.to_json();
    j["certificate"] = cert.to_json();
    detail::write_json(out / (cfg.prefix + "_series.json"), j);
    write_field((out / (cfg.prefix + "_final.bzf")).string(), ser.final_state, meta);
    {
        std::ofstream csv(out / (cfg.prefix + "_moments.csv"));
        write_cell_moments_csv(csv, ser.final_state);
    }
    os << "windows=" << ser.windows << " halvings=" << ser.halvings << " partial=" << ser.partial_windows
       << " wall=" << ser.wall_seconds << "s\n";
    return exit_code::ok;
}

inline int cmd_verify(const RunConfig& cfg, const std::string& suite, const std::filesystem::path& out,
                      std::ostream& os) {
    if (suite != "kernel-bounds" && suite != "nonlinear" && suite != "all")
        throw Error("unknown suite '" + suite + "'");
    nlohmann::json reports = nlohmann::json::array();
    bool pass = true;
    auto note = [&](const std::string& id, bool ok, const nlohmann::json& j) {
        reports.push_back(j);
        pass = pass && ok;
        os << id << ": " << (ok ? "pass" : "FAIL") << '\n';
    };
    if (suite == "kernel-bounds" || suite == "all") {
        const EtaRule rule = EtaRule::for_grid(cfg.n_per_axis);
        const auto r18 = verify_kernel_bound(cfg.kernel, cfg.alphas, cfg.speeds, rule);
        note("kernel bound", r18.pass, r18.to_json());
        const auto r40 = verify_remainder_bound(cfg.kernel, cfg.m_list_40, cfg.speeds, 0.0, rule);
        note("remainder bound", r40.pass, r40.to_json());
        const auto r31 = verify_km_scaling(cfg.kernel, cfg.m_list_31, ray_samples(4.0, 0.5), km_test_profiles());
        note("K^m scaling", r31.pass, r31.to_json());
    }
    if (suite == "nonlinear" || suite == "all") {
        bool scan = true;
        for (int i = 1; i <= 100; ++i) scan = scan && p_conditions(-3.0 + 4.0 * i / 100.0).all();
        note("p conditions", scan, {{"check", "p_conditions"}, {"pass", scan}});
        const DistributionField F0 = build_initial(cfg);
        const CollisionOperator op = cfg.make_operator();
        const PerturbationField f = to_perturbation(F0);
        const auto samples = sample_nodes(F0.cells(), F0.nodes(), std::size_t(cfg.nonlinear_samples), cfg.seed);
        const NonlinearCheck nc = check_nonlinear_estimate(f, cfg.alpha_nonlinear, op, samples);
        const bool ok = std::isfinite(nc.max_ratio);
        auto j = nc.to_json();
        j["check"] = "nonlinear_estimate";
        j["pass"] = ok;
        note("nonlinear estimate", ok, j);
    }
    detail::write_json(out / (cfg.prefix + "_verify.json"), {{"config", cfg.to_json()}, {"suite", suite}, {"reports", reports}});
    return pass ? exit_code::ok : exit_code::fail;
}

inline int cmd_decay(const std::string& series_path, DecayModel model, double t_lo, double t_hi, double residual_cap,
                     const std::filesystem::path& out, std::ostream& os) {
    const CsvTable t = read_csv_file(series_path);
    const DecayFit f = fit_decay(t.column("t"), t.column("winf"), model, t_lo, t_hi);
    nlohmann::json j = f.to_json();
    j["series"] = series_path;
    j["residual_cap"] = residual_cap;
    // defect magnitudes at the first row, so a biased fit can be traced back
    for (const char* k : {"M0", "J0x", "J0y", "J0z", "E0"}) j["defects"][k] = t.column(k).front();
    detail::write_json(out / "decay_fit.json", j);
    os << "decay fit (" << to_string(model) << "): rate=" << f.rate << " residual=" << f.residual << " samples=" << f.samples
       << '\n';
    return f.pass() && f.residual <= residual_cap ? exit_code::ok : exit_code::fail;
}

/// Entry point of the boltz executable.
inline int run_cli(int argc, char** argv, std::ostream& os = std::cout) {
    CLI::App app{"Deterministic cutoff Boltzmann solver and estimate checker"};
    app.require_subcommand(1);
    std::string config, out_dir = ".", suite = "all", model = "exp", window, series;
    int nthreads = 0;
    std::int64_t seed = -1;
    double residual_cap = 0.2;

    auto add_common = [&](CLI::App* c, bool needs_config) {
        auto* o = c->add_option("--config", config, "JSON run configuration");
        if (needs_config) o->required();
        c->add_option("--threads", nthreads, "worker threads (default: BOLTZ_THREADS or 1)");
        c->add_option("--out", out_dir, "output directory");
        c->add_option("--seed", seed, "override the configured seed");
    };
    auto* certify_cmd = app.add_subcommand("certify", "smallness certificate of the initial data");
    add_common(certify_cmd, true);
    auto* run_cmd = app.add_subcommand("run", "evolve and write the diagnostics series");
    add_common(run_cmd, true);
    auto* verify_cmd = app.add_subcommand("verify", "kernel-bound and nonlinear estimate checks");
    add_common(verify_cmd, true);
    verify_cmd->add_option("--suite", suite, "kernel-bounds | nonlinear | all");
    auto* decay_cmd = app.add_subcommand("decay", "fit a decay model to a series CSV");
    add_common(decay_cmd, false);
    decay_cmd->add_option("series", series, "series CSV written by run")->required();
    decay_cmd->add_option("--model", model, "exp | alg");
    decay_cmd->add_option("--window", window, "T0:T1");
    decay_cmd->add_option("--residual-cap", residual_cap, "largest accepted RMS log residual");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_code::ok : exit_code::error;
    }
    try {
        if (nthreads > 0) set_threads(nthreads);
        std::filesystem::create_directories(out_dir);
        if (*decay_cmd) {
            DecayModel m;
            if (model == "exp") m = DecayModel::exponential;
            else if (model == "alg") m = DecayModel::algebraic;
            else throw Error("--model must be exp or alg");
            double lo = 0, hi = std::numeric_limits<double>::infinity();
            if (!window.empty()) {
                const auto colon = window.find(':');
                if (colon == std::string::npos) throw Error("--window must be T0:T1");
                lo = std::stod(window.substr(0, colon));
                const std::string h = window.substr(colon + 1);
                if (!h.empty()) hi = std::stod(h);
            }
            return cmd_decay(series, m, lo, hi, residual_cap, out_dir, os);
        }
        RunConfig cfg = RunConfig::load(config);
        if (seed >= 0) cfg.seed = std::uint64_t(seed);
        if (*certify_cmd) return cmd_certify(cfg, out_dir, os);
        if (*run_cmd) return cmd_run(cfg, out_dir, os);
        if (*verify_cmd) return cmd_verify(cfg, suite, out_dir, os);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::error;
    }
    return exit_code::error;
}

}  // namespace boltz

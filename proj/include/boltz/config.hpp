#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evolve.hpp"
#include "io.hpp"

namespace boltz {

using nlohmann::json;

/// Initial data. Every recipe is F0(x, v) = rho0(x) [(1 - a) mu(v) + a M(v)] with
/// M an anisotropic Gaussian of unit mass (a = 0 unless recipe = bump), except
/// "isobaric", F0 = rho0 M_{1/rho0} with the lattice moment defects removed, and
/// "file" which loads a BZFIELD1 container.
struct InitialRecipe {
    std::string recipe = "equilibrium";  // equilibrium | density | bump | isobaric | file
    // rho0(x) profile: constant | sine | vacuum | spike | values
    std::string profile = "constant";
    double level = 1.0;      // constant level; vacuum: density outside the hole
    double amplitude = 0.0;  // sine and spike amplitude
    int mode = 1;            // sine wavenumber over the period
    double fraction = 0.25;  // vacuum hole or spike width as a fraction of the period
    std::vector<double> values;
    // bump
    double weight = 0.5;
    Vec3 drift{0, 0, 0};
    Vec3 temperature{1, 1, 1};
    std::string path;
};

struct RunConfig {
    double v_max = 0;
    int n_per_axis = 0;
    int sphere_polar = 8;
    int sphere_azimuth = 16;
    Interp interp = Interp::quadratic;
    SpatialGrid space;
    KernelParams kernel;
    StepConfig step;
    InitialRecipe initial;
    double epsilon0 = 0.1;
    double m_bar = 10.0;
    int checkpoint_every = 0;
    std::uint64_t seed = 0;
    std::string prefix = "run";
    // verifier settings
    std::vector<double> alphas{0.0, 5.0};
    std::vector<double> speeds{0.0, 2.0, 4.0, 8.0};
    std::vector<double> m_list_40{0.1, 0.2, 0.4, 0.8};
    std::vector<double> m_list_31{1.0, 0.5, 0.25, 0.125};
    double alpha_nonlinear = 1.0;
    int nonlinear_samples = 64;

    VelocityGrid velocity() const { return VelocityGrid(v_max, n_per_axis); }
    CollisionOperator make_operator() const {
        return CollisionOperator(velocity(), kernel, SphereQuadrature(sphere_polar, sphere_azimuth), interp);
    }

    void validate() const {
        if (!(v_max > 0)) throw Error("config: velocity.v_max must be positive");
        if (n_per_axis < 4 || n_per_axis % 2) throw Error("config: velocity.n_per_axis must be even and >= 4");
        space.validate();
        kernel.validate();
        step.validate();
        const double bmin = std::max(3.0, 3.0 + kernel.gamma);
        if (!(step.beta > bmin)) throw Error("config: beta must exceed max{3, 3 + gamma}");
        if (!(epsilon0 > 0)) throw Error("config: epsilon0 must be positive");
        if (!(m_bar >= 1)) throw Error("config: m_bar must be >= 1");
        if (checkpoint_every < 0) throw Error("config: checkpoint_every must be >= 0");
        const auto& r = initial.recipe;
        if (r != "equilibrium" && r != "density" && r != "bump" && r != "isobaric" && r != "file")
            throw Error("config: unknown initial recipe '" + r + "'");
        const auto& p = initial.profile;
        if (p != "constant" && p != "sine" && p != "vacuum" && p != "spike" && p != "values")
            throw Error("config: unknown density profile '" + p + "'");
        if (p == "values" && int(initial.values.size()) != space.n_cells)
            throw Error("config: initial.values needs one entry per cell");
        if (r == "bump" && !(initial.temperature.x > 0 && initial.temperature.y > 0 && initial.temperature.z > 0))
            throw Error("config: bump temperatures must be positive");
        if (r == "file" && initial.path.empty()) throw Error("config: initial.path is required for recipe 'file'");
    }

    json to_json() const {
        auto v3 = [](const Vec3& v) { return json::array({v.x, v.y, v.z}); };
        return {
            {"velocity",
             {{"v_max", v_max},
              {"n_per_axis", n_per_axis},
              {"sphere", {sphere_polar, sphere_azimuth}},
              {"interp", to_string(interp)}}},
            {"space", {{"dimension", space.dimension}, {"period", space.period}, {"n_cells", space.n_cells}}},
            {"kernel",
             {{"gamma", kernel.gamma},
              {"b_amplitude", kernel.b_amplitude},
              {"soft_regularization", kernel.soft_regularization}}},
            {"step",
             {{"dt", step.dt},
              {"t_end", step.t_end},
              {"picard_tol", step.picard_tol},
              {"picard_max", step.picard_max},
              {"c4_tilde", step.c4_tilde},
              {"substeps", step.substeps},
              {"stepper", to_string(step.stepper)},
              {"conservative", step.conservative},
              {"report_every", step.report_every},
              {"min_window", step.min_window}}},
            {"beta", step.beta},
            {"initial",
             {{"recipe", initial.recipe},
              {"profile", initial.profile},
              {"level", initial.level},
              {"amplitude", initial.amplitude},
              {"mode", initial.mode},
              {"fraction", initial.fraction},
              {"values", initial.values},
              {"weight", initial.weight},
              {"drift", v3(initial.drift)},
              {"temperature", v3(initial.temperature)},
              {"path", initial.path}}},
            {"certificate", {{"epsilon0", epsilon0}, {"m_bar", m_bar}}},
            {"diagnostics", {{"checkpoint_every", checkpoint_every}}},
            {"verify",
             {{"alphas", alphas},
              {"speeds", speeds},
              {"m_list_40", m_list_40},
              {"m_list_31", m_list_31},
              {"alpha_nonlinear", alpha_nonlinear},
              {"nonlinear_samples", nonlinear_samples}}},
            {"seed", seed},
            {"output", {{"prefix", prefix}}},
        };
    }

    static RunConfig from_json(const json& j) {
        RunConfig c;
        try {
            if (!j.is_object()) throw Error("config: top level must be an object");
            if (!j.contains("velocity")) throw Error("config: missing 'velocity'");
            if (!j.contains("space")) throw Error("config: missing 'space'");
            const json& v = j.at("velocity");
            if (!v.contains("v_max")) throw Error("config: missing velocity.v_max");
            if (!v.contains("n_per_axis")) throw Error("config: missing velocity.n_per_axis");
            c.v_max = v.at("v_max").get<double>();
            c.n_per_axis = v.at("n_per_axis").get<int>();
            if (v.contains("sphere")) {
                c.sphere_polar = v.at("sphere").at(0).get<int>();
                c.sphere_azimuth = v.at("sphere").at(1).get<int>();
            }
            if (v.contains("interp")) {
                const auto s = v.at("interp").get<std::string>();
                if (s == "linear") c.interp = Interp::linear;
                else if (s == "quadratic") c.interp = Interp::quadratic;
                else throw Error("config: velocity.interp must be linear or quadratic");
            }
            const json& s = j.at("space");
            if (!s.contains("dimension")) throw Error("config: missing space.dimension");
            c.space.dimension = s.at("dimension").get<int>();
            c.space.period = s.value("period", 1.0);
            c.space.n_cells = s.value("n_cells", 1);
            if (c.space.dimension == 1 && !s.contains("n_cells")) throw Error("config: missing space.n_cells");
            if (j.contains("kernel")) {
                const json& k = j.at("kernel");
                c.kernel.gamma = k.value("gamma", c.kernel.gamma);
                c.kernel.b_amplitude = k.value("b_amplitude", c.kernel.b_amplitude);
                c.kernel.soft_regularization = k.value("soft_regularization", c.kernel.soft_regularization);
            }
            if (j.contains("step")) {
                const json& t = j.at("step");
                c.step.dt = t.value("dt", c.step.dt);
                c.step.t_end = t.value("t_end", c.step.t_end);
                c.step.picard_tol = t.value("picard_tol", c.step.picard_tol);
                c.step.picard_max = t.value("picard_max", c.step.picard_max);
                c.step.c4_tilde = t.value("c4_tilde", c.step.c4_tilde);
                c.step.substeps = t.value("substeps", c.step.substeps);
                c.step.conservative = t.value("conservative", c.step.conservative);
                c.step.report_every = t.value("report_every", c.step.report_every);
                c.step.min_window = t.value("min_window", c.step.min_window);
                const auto st = t.value("stepper", std::string("ks"));
                if (st == "ks") c.step.stepper = Stepper::kaniel_shinbrot;
                else if (st == "mild") c.step.stepper = Stepper::mild;
                else throw Error("config: step.stepper must be ks or mild");
            }
            c.step.beta = j.value("beta", c.step.beta);
            if (j.contains("initial")) {
                const json& i = j.at("initial");
                auto& r = c.initial;
                r.recipe = i.value("recipe", r.recipe);
                r.profile = i.value("profile", r.profile);
                r.level = i.value("level", r.level);
                r.amplitude = i.value("amplitude", r.amplitude);
                r.mode = i.value("mode", r.mode);
                r.fraction = i.value("fraction", r.fraction);
                r.values = i.value("values", r.values);
                r.weight = i.value("weight", r.weight);
                auto v3 = [&](const char* key, Vec3 def) {
                    if (!i.contains(key)) return def;
                    const auto& a = i.at(key);
                    return Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
                };
                r.drift = v3("drift", r.drift);
                r.temperature = v3("temperature", r.temperature);
                r.path = i.value("path", r.path);
            }
            if (j.contains("certificate")) {
                c.epsilon0 = j.at("certificate").value("epsilon0", c.epsilon0);
                c.m_bar = j.at("certificate").value("m_bar", c.m_bar);
            }
            if (j.contains("diagnostics")) c.checkpoint_every = j.at("diagnostics").value("checkpoint_every", 0);
            if (j.contains("verify")) {
                const json& v2 = j.at("verify");
                c.alphas = v2.value("alphas", c.alphas);
                c.speeds = v2.value("speeds", c.speeds);
                c.m_list_40 = v2.value("m_list_40", c.m_list_40);
                c.m_list_31 = v2.value("m_list_31", c.m_list_31);
                c.alpha_nonlinear = v2.value("alpha_nonlinear", c.alpha_nonlinear);
                c.nonlinear_samples = v2.value("nonlinear_samples", c.nonlinear_samples);
            }
            c.seed = j.value("seed", c.seed);
            if (j.contains("output")) c.prefix = j.at("output").value("prefix", c.prefix);
        } catch (const json::exception& e) {
            throw Error(std::string("config: ") + e.what());
        }
        c.validate();
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw Error("cannot read config " + path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw Error(std::string("config: malformed JSON: ") + e.what());
        }
        return from_json(j);
    }
};

/// rho0 at cell c.
inline double initial_density(const InitialRecipe& r, const SpatialGrid& s, int c) {
    const double x = s.center(c) / s.period;  // in [0, 1)
    if (r.profile == "constant") return r.level;
    if (r.profile == "sine") return r.level + r.amplitude * std::sin(two_pi * r.mode * x);
    if (r.profile == "vacuum") return x < r.fraction ? 0.0 : r.level;
    if (r.profile == "spike") return r.level + (std::abs(x - 0.5) < 0.5 * r.fraction ? r.amplitude : 0.0);
    if (r.profile == "values") return r.values.at(c);
    throw Error("unknown density profile " + r.profile);
}

inline DistributionField build_initial(const RunConfig& cfg) {
    const auto& r = cfg.initial;
    if (r.recipe == "file") {
        DistributionField F = read_field(r.path);
        if (!(F.vel == cfg.velocity()) || !(F.space == cfg.space))
            throw Error("initial field file does not match the configured grids");
        return F;
    }
    DistributionField F(cfg.space, cfg.velocity());
    const auto& mu = F.vel.mu();
    std::vector<double> shape(F.nodes());
    const double a = r.recipe == "bump" ? r.weight : 0.0;
    const Vec3 T = r.temperature;
    const double norm = maxwellian_norm / std::sqrt(T.x * T.y * T.z);
    for (std::size_t j = 0; j < F.nodes(); ++j) {
        const Vec3 d = F.vel.node(j) - r.drift;
        const double M = norm * std::exp(-0.5 * (d.x * d.x / T.x + d.y * d.y / T.y + d.z * d.z / T.z));
        shape[j] = (1 - a) * mu[j] + a * M;
    }
    for (int c = 0; c < F.cells(); ++c) {
        const double rho = r.recipe == "equilibrium" ? 1.0 : initial_density(r, cfg.space, c);
        if (!(rho >= 0)) throw Error("initial density must be nonnegative");
        if (r.recipe == "isobaric") {
            if (!(rho > 0)) throw Error("isobaric data need a positive density");
            const double T = 1.0 / rho;
            for (std::size_t j = 0; j < F.nodes(); ++j)
                F.at(c, j) = rho * std::pow(two_pi * T, -1.5) * std::exp(-0.5 * F.vel.v2()[j] / T);
            continue;
        }
        for (std::size_t j = 0; j < F.nodes(); ++j) F.at(c, j) = rho * shape[j];
    }
    if (r.recipe == "isobaric") restore_moments(F, ConservedSnapshot{});
    return F;
}

}  // namespace boltz

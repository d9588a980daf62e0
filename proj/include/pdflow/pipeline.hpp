#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdflow/analysis.hpp"
#include "pdflow/damping.hpp"
#include "pdflow/dynamics.hpp"
#include "pdflow/integrate.hpp"
#include "pdflow/lyapunov.hpp"
#include "pdflow/problem.hpp"
#include "pdflow/serialize.hpp"

namespace pdflow {

inline constexpr unsigned kValidationSeed = 0x5EED;

/// Fully parsed run configuration.
struct RunConfig {
    ProblemInstance instance;
    DampingSchedule schedule = DampingSchedule::power_law(1.0, 1.0, 1.0);
    CouplingRule coupling;
    std::optional<double> beta;
    Perturbation perturbation = Perturbation::none(0, 0);
    bool perturbed = false;
    IntegratorConfig integrator;
    double horizon = 0.0;
    std::string out_dir;
    double tol_scale = 1.0;
};

namespace detail {

inline DampingSchedule schedule_from_json(const Json& g, double t0) {
    reject_unknown_keys(g, {"family", "alpha", "r"}, "gamma");
    const std::string family = g.at("family").get<std::string>();
    if (family == "power")
        return DampingSchedule::power_law(g.at("alpha").get<double>(),
                                          g.value("r", 1.0), t0);
    if (family == "log_power") return DampingSchedule::log_power(g.value("r", 1.0), t0);
    throw ContractError("gamma.family must be 'power' or 'log_power'");
}

inline CouplingRule coupling_from_json(const Json& d) {
    reject_unknown_keys(d, {"kind", "beta0", "r0"}, "delta");
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "reciprocal") return CouplingRule::reciprocal(d.at("beta0").get<double>());
    if (kind == "linear") return CouplingRule::linear_in_t(d.at("r0").get<double>());
    throw ContractError("delta.kind must be 'reciprocal' or 'linear'");
}

inline Perturbation perturbation_from_json(const Json& p, int n1, int n2,
                                           bool* perturbed) {
    reject_unknown_keys(p, {"family", "c", "q", "times", "values"}, "perturbation");
    const std::string family = p.value("family", "none");
    if (family == "none") {
        *perturbed = false;
        return Perturbation::none(n1, n2);
    }
    *perturbed = true;
    if (family == "power") {
        const double c = p.at("c").get<double>();
        const double q = p.at("q").get<double>();
        return Perturbation::scalar_broadcast(
            [c, q](double t) { return c * std::pow(1.0 + t, -q); }, n1, n2);
    }
    if (family == "table") {
        std::vector<double> ts, vs;
        for (const auto& v : p.at("times")) ts.push_back(v.get<double>());
        for (const auto& v : p.at("values")) vs.push_back(v.get<double>());
        if (ts.size() != vs.size() || ts.size() < 2)
            throw ContractError("perturbation table needs matching times/values");
        auto interp = [ts, vs](double t) {
            if (t <= ts.front()) return vs.front();
            if (t >= ts.back()) return vs.back();
            const auto it = std::upper_bound(ts.begin(), ts.end(), t);
            const std::size_t i = static_cast<std::size_t>(it - ts.begin());
            const double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
            return (1.0 - w) * vs[i - 1] + w * vs[i];
        };
        return Perturbation::scalar_broadcast(interp, n1, n2);
    }
    throw ContractError("perturbation.family must be 'none', 'power' or 'table'");
}

inline IntegratorConfig integrator_from_json(const Json& j, double horizon) {
    IntegratorConfig cfg;
    cfg.t_end = horizon;
    if (j.is_null()) return cfg;
    reject_unknown_keys(j,
                        {"method", "h", "rel_tol", "abs_tol", "h_init", "h_min",
                         "h_max", "samples", "spacing"},
                        "integrator");
    const std::string method = j.value("method", "adaptive");
    if (method == "rk4")
        cfg.method = IntegratorConfig::Method::RK4Fixed;
    else if (method != "adaptive")
        throw ContractError("integrator.method must be 'adaptive' or 'rk4'");
    cfg.h = j.value("h", cfg.h);
    cfg.rel_tol = j.value("rel_tol", cfg.rel_tol);
    cfg.abs_tol = j.value("abs_tol", cfg.abs_tol);
    cfg.h_init = j.value("h_init", cfg.h_init);
    cfg.h_min = j.value("h_min", cfg.h_min);
    cfg.h_max = j.value("h_max", cfg.h_max);
    cfg.samples = j.value("samples", cfg.samples);
    const std::string spacing = j.value("spacing", "log");
    if (spacing == "linear")
        cfg.spacing = IntegratorConfig::Spacing::Linear;
    else if (spacing != "log")
        throw ContractError("integrator.spacing must be 'linear' or 'log'");
    return cfg;
}

} // namespace detail

inline RunConfig parse_run_config(const Json& j) {
    reject_unknown_keys(j,
                        {"problem", "problem_file", "gamma", "delta", "t0", "beta",
                         "perturbation", "integrator", "horizon", "out", "sweep",
                         "jobs"},
                        "config");
    RunConfig cfg;
    if (j.contains("problem_file")) {
        std::ifstream in(j.at("problem_file").get<std::string>());
        if (!in) throw ContractError("cannot open problem_file");
        Json pj;
        in >> pj;
        cfg.instance = problem_from_json(pj);
    } else {
        cfg.instance = problem_from_json(j.at("problem"));
    }
    const double t0 = j.value("t0", 1.0);
    cfg.schedule = detail::schedule_from_json(j.at("gamma"), t0);
    cfg.coupling = detail::coupling_from_json(j.at("delta"));
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (!cfg.beta && cfg.coupling.kind == CouplingRule::Kind::ReciprocalGamma) {
        // Largest admissible beta: 1/3, tightened to 1/alpha for gamma=alpha/t.
        double beta = 1.0 / 3.0;
        if (const auto* pl = cfg.schedule.power_law_params(); pl && pl->r == 1.0)
            beta = std::min(beta, 1.0 / pl->alpha);
        cfg.beta = beta;
    }
    cfg.horizon = j.at("horizon").get<double>();
    cfg.integrator =
        detail::integrator_from_json(j.value("integrator", Json()), cfg.horizon);
    cfg.perturbation = detail::perturbation_from_json(
        j.value("perturbation", Json({{"family", "none"}})), cfg.instance.problem.n1,
        cfg.instance.problem.n2, &cfg.perturbed);
    cfg.out_dir = j.value("out", "");
    return cfg;
}

inline RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open config file: " + path);
    Json j = Json::parse(in); // throws nlohmann::json::parse_error on bad JSON
    return parse_run_config(j);
}

struct RateRow {
    std::string quantity;
    Basis basis = Basis::LogT;
    double window_lo = 0.0;
    double window_hi = 0.0;
    double fitted = 0.0;
    double theoretical = 0.0;
    bool pass = false;
};

struct RunResult {
    RegimeDescriptor regime;
    Trajectory trajectory;
    std::vector<double> energies;
    IdentityReport identity;
    MonotonicityReport monotonicity;
    std::vector<RateRow> rates;
    double richardson = 0.0;
    double first_violation_t = std::numeric_limits<double>::quiet_NaN();
    bool saddle_ok = true;
    bool all_pass = false;
};

/// Upper-bound semantics: faster decay than claimed never fails.
inline constexpr double kRateSlack = 0.3;
inline constexpr double kMonotoneRelSlack = 1e-6;

inline RegimeDescriptor classify(const RunConfig& cfg) {
    return validate_regime(cfg.schedule, cfg.coupling, cfg.beta);
}

inline RunResult run_pipeline(const RunConfig& cfg) {
    RunResult res;
    res.regime = classify(cfg);
    if (!res.regime.valid())
        throw ContractError("invalid regime: " + res.regime.reason);

    const SeparableProblem& p = cfg.instance.problem;
    const double t0 = cfg.schedule.t0();
    const SystemState init = SystemState::zero(t0, p.n1, p.n2, p.m);
    const Perturbation* pert = cfg.perturbed ? &cfg.perturbation : nullptr;
    const Rhs rhs = make_rhs(p, cfg.schedule, cfg.coupling, pert);

    const RawTrajectory raw = integrate(rhs, t0, init.flatten(), cfg.integrator);
    res.trajectory = make_trajectory(p, cfg.instance.kkt, raw, cfg.integrator);
    if (!raw.termination.completed()) return res;

    const EnergyParams ep = EnergyParams::from_regime(res.regime);
    if (cfg.perturbed)
        res.energies = perturbed_energy(ep, p, cfg.instance.kkt, cfg.schedule,
                                        res.trajectory, cfg.perturbation);
    else
        res.energies =
            energy_series(ep, p, cfg.instance.kkt, cfg.schedule, res.trajectory);
    for (auto& smp : res.trajectory.samples) smp.energy_set = true;
    for (std::size_t i = 0; i < res.trajectory.samples.size(); ++i)
        res.trajectory.samples[i].energy = res.energies[i];

    res.identity = identity_audit(ep, cfg.schedule, cfg.coupling, t0, 1e4 * t0, 256,
                                  res.regime.t1);

    // Monotonicity is guaranteed from the regime's t1 onward.
    std::vector<double> mono;
    std::size_t mono_offset = res.energies.size();
    for (std::size_t i = 0; i < res.energies.size(); ++i)
        if (res.trajectory.samples[i].state.t >= res.regime.t1) {
            if (mono.empty()) mono_offset = i;
            mono.push_back(res.energies[i]);
        }
    res.monotonicity = monotonicity_audit(mono, kMonotoneRelSlack * cfg.tol_scale);
    if (res.monotonicity.first_violation >= 0)
        res.first_violation_t =
            res.trajectory
                .samples[mono_offset +
                         static_cast<std::size_t>(res.monotonicity.first_violation)]
                .state.t;

    // Saddle inequality gap >= feas^2/2 at every sample.
    for (const auto& smp : res.trajectory.samples)
        if (smp.diag.gap < 0.5 * smp.diag.feasibility * smp.diag.feasibility - 1e-9)
            res.saddle_ok = false;

    // Rate fits over the latter half of the log-time window (burn-in dropped).
    const TheoreticalRates tr = theoretical_rates(res.regime);
    const double w_lo = std::sqrt(t0 * cfg.horizon);
    const double w_hi = cfg.horizon;
    std::vector<double> times, gaps, feas, speeds;
    for (std::size_t i = 0; i < res.trajectory.samples.size(); ++i) {
        times.push_back(res.trajectory.samples[i].state.t);
        gaps.push_back(res.trajectory.samples[i].diag.gap);
        feas.push_back(res.trajectory.samples[i].diag.feasibility);
        speeds.push_back(res.trajectory.speed(i));
    }
    auto fit_row = [&](const std::string& name, const std::vector<double>& vals,
                       double theoretical) {
        RateRow row;
        row.quantity = name;
        row.basis = tr.basis;
        row.window_lo = w_lo;
        row.window_hi = w_hi;
        row.theoretical = theoretical;
        try {
            const RateFit fit = fit_decay_exponent(times, vals, w_lo, w_hi, tr.basis,
                                                   &cfg.schedule);
            row.fitted = fit.exponent;
            row.pass = fit.exponent <= theoretical + kRateSlack * cfg.tol_scale;
            if (fit.clamped_samples > 0) row.pass = true; // decayed past measurable range
        } catch (const InsufficientDataError&) {
            // all samples clamped to zero: decay beyond measurable range
            row.fitted = -std::numeric_limits<double>::infinity();
            row.pass = true;
        }
        return row;
    };
    res.rates.push_back(fit_row("gap", gaps, tr.gap_exponent));
    res.rates.push_back(fit_row("feasibility", feas, tr.feas_exponent));
    res.rates.push_back(fit_row("speed", speeds, tr.speed_exponent));

    bool rates_ok = true;
    for (const auto& r : res.rates) rates_ok = rates_ok && r.pass;
    res.all_pass = raw.termination.completed() && res.monotonicity.monotone &&
                   res.identity.coupling_residual <= 1e-11 &&
                   res.identity.cancellation_residual <= 1e-11 &&
                   res.identity.eta_margin_worst >= -1e-12 && res.saddle_ok &&
                   rates_ok;
    return res;
}

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
    os << "t,feasibility,gap,energy,speed_x,speed_y,speed_lambda\n";
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const auto& s = traj.samples[i];
        os << format_double(s.state.t) << ',' << format_double(s.diag.feasibility)
           << ',' << format_double(s.diag.gap) << ',' << format_double(s.energy) << ','
           << format_double(s.state.vx.norm()) << ',' << format_double(s.state.vy.norm())
           << ',' << format_double(s.state.vlam.norm()) << '\n';
    }
}

inline void write_rates_csv(const std::vector<RateRow>& rows, std::ostream& os) {
    os << "quantity,basis,window_lo,window_hi,fitted,theoretical,pass\n";
    for (const auto& r : rows) {
        os << r.quantity << ',' << (r.basis == Basis::LogT ? "log_t" : "log_p") << ','
           << format_double(r.window_lo) << ',' << format_double(r.window_hi) << ','
           << format_double(r.fitted) << ',' << format_double(r.theoretical) << ','
           << (r.pass ? "true" : "false") << '\n';
    }
}

inline Json audit_to_json(const RunResult& res) {
    Json j;
    j["validation_seed"] = kValidationSeed;
    j["identity_residuals"] = {{"coupling", res.identity.coupling_residual},
                               {"cancellation", res.identity.cancellation_residual},
                               {"sign_worst", res.identity.sign_worst}};
    j["eta_lower_bound_margin"] = res.identity.eta_margin_worst;
    j["monotone"] = res.monotonicity.monotone;
    if (res.monotonicity.first_violation >= 0)
        j["first_violation"] = res.first_violation_t;
    else
        j["first_violation"] = nullptr;
    j["saddle_inequality"] = res.saddle_ok;
    j["completed"] = res.trajectory.termination.completed();
    j["t1"] = res.regime.t1;
    j["all_pass"] = res.all_pass;
    return j;
}

inline void write_outputs(const RunResult& res, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream os(fs::path(dir) / "trajectory.csv");
        write_trajectory_csv(res.trajectory, os);
    }
    {
        std::ofstream os(fs::path(dir) / "rates.csv");
        write_rates_csv(res.rates, os);
    }
    {
        std::ofstream os(fs::path(dir) / "audit.json");
        os << audit_to_json(res).dump(2) << '\n';
    }
}

} // namespace pdflow

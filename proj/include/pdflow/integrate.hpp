#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pdflow/dynamics.hpp"
#include "pdflow/errors.hpp"
#include "pdflow/problem.hpp"

namespace pdflow {

struct IntegratorConfig {
    enum class Method { RK4Fixed, AdaptiveRK45 };
    enum class Spacing { Linear, Logarithmic };

    Method method = Method::AdaptiveRK45;
    double h = 1e-3; // fixed-step size
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double h_init = 1e-3;
    double h_min = 1e-13;
    double h_max = 1.0;
    double t_end = 0.0;
    Spacing spacing = Spacing::Logarithmic;
    int samples = 200;
    // delta ~ t stiffens the dual coupling; cap the step by 0.1 t.
    bool cap_step_by_time = true;

    void require_valid(double t0) const {
        if (t_end <= t0) throw ContractError("t_end must exceed t0");
        if (method == Method::RK4Fixed && h <= 0.0)
            throw ContractError("fixed step must be positive");
        if (rel_tol <= 0.0 || abs_tol <= 0.0)
            throw ContractError("tolerances must be positive");
        if (!(h_min <= h_init && h_init <= h_max))
            throw ContractError("need h_min <= h_init <= h_max");
        if (samples < 2) throw ContractError("need at least two samples");
    }
};

struct Termination {
    enum class Kind { Completed, StepUnderflow, NonFinite };
    Kind kind = Kind::Completed;
    double t = 0.0; // failure time for non-Completed kinds

    bool completed() const { return kind == Kind::Completed; }
};

/// Sampled solution of a flattened ODE system.
struct RawTrajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> derivs; // rhs at each sample, for diagnostics reuse
    Termination termination;
};

inline std::vector<double> sample_grid(double t0, const IntegratorConfig& cfg) {
    std::vector<double> g(cfg.samples);
    if (cfg.spacing == IntegratorConfig::Spacing::Linear) {
        const double spacing = (cfg.t_end - t0) / (cfg.samples - 1);
        for (int i = 0; i < cfg.samples; ++i) g[i] = t0 + i * spacing;
    } else {
        const double ratio = std::log(cfg.t_end / t0);
        for (int i = 0; i < cfg.samples; ++i)
            g[i] = t0 * std::exp(ratio * static_cast<double>(i) / (cfg.samples - 1));
    }
    g.back() = cfg.t_end;
    return g;
}

namespace detail {

// Dormand-Prince 5(4) coefficients.
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                        a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                        a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                        e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                        e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
                        c5 = 8.0 / 9.0;

// Cubic Hermite interpolation from endpoint values and slopes (O(h^4)).
inline Vec hermite(double t, double ta, const Vec& ya, const Vec& fa, double tb,
                   const Vec& yb, const Vec& fb) {
    const double h = tb - ta;
    const double s = (t - ta) / h;
    const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    const double h10 = s * (1.0 - s) * (1.0 - s);
    const double h01 = s * s * (3.0 - 2.0 * s);
    const double h11 = s * s * (s - 1.0);
    return h00 * ya + (h10 * h) * fa + h01 * yb + (h11 * h) * fb;
}

} // namespace detail

using Rhs = std::function<Vec(double, const Vec&)>;

/// Dense integration with states recorded exactly at the sample grid.
inline RawTrajectory integrate(const Rhs& rhs, double t0, const Vec& init,
                               const IntegratorConfig& cfg) {
    cfg.require_valid(t0);
    using namespace detail;

    RawTrajectory out;
    const std::vector<double> grid = sample_grid(t0, cfg);
    std::size_t next_sample = 0;

    auto record = [&](double t, const Vec& y, const Vec& f) {
        out.times.push_back(t);
        out.states.push_back(y);
        out.derivs.push_back(f);
    };

    double t = t0;
    Vec y = init;
    Vec f = rhs(t, y);
    record(t, y, f);
    ++next_sample;

    if (cfg.method == IntegratorConfig::Method::RK4Fixed) {
        // Fixed-step classical RK4 with Hermite sampling between nodes.
        while (t < cfg.t_end) {
            const double h = std::min(cfg.h, cfg.t_end - t);
            const Vec k1 = f;
            const Vec k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
            const Vec k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
            const Vec k4 = rhs(t + h, y + h * k3);
            const Vec ynew = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!ynew.allFinite()) {
                out.termination = {Termination::Kind::NonFinite, t};
                return out;
            }
            const double tnew = t + h;
            const Vec fnew = rhs(tnew, ynew);
            while (next_sample < grid.size() &&
                   grid[next_sample] <= tnew * (1.0 + 1e-14)) {
                const double ts = grid[next_sample];
                record(ts, hermite(ts, t, y, f, tnew, ynew, fnew), fnew);
                ++next_sample;
            }
            t = tnew;
            y = ynew;
            f = fnew;
        }
        while (next_sample < grid.size()) {
            record(grid[next_sample], y, f);
            ++next_sample;
        }
        out.termination = {Termination::Kind::Completed, t};
        return out;
    }

    double h = cfg.h_init;
    double err_prev = 1.0;
    // stage buffers live across steps so the loop stays allocation-light
    Vec ytmp(y.size()), ynew(y.size()), errvec(y.size());
    Vec k2, k3, k4, k5, k6, k7;
    while (t < cfg.t_end) {
        double h_cap = cfg.h_max;
        if (cfg.cap_step_by_time && t > 0.0)
            h_cap = std::min({h_cap, 0.1 * t, 1.0});
        h = std::min({h, h_cap, cfg.t_end - t});
        if (t + h == t) {
            if (h == cfg.t_end - t) {
                // the remaining interval is below resolution at this
                // magnitude; we are done
                t = cfg.t_end;
                break;
            }
            out.termination = {Termination::Kind::StepUnderflow, t};
            return out;
        }

        const Vec& k1 = f;
        ytmp = y + (h * a21) * k1;
        k2 = rhs(t + c2 * h, ytmp);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        k3 = rhs(t + c3 * h, ytmp);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        k4 = rhs(t + c4 * h, ytmp);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        k5 = rhs(t + c5 * h, ytmp);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        k6 = rhs(t + h, ytmp);
        ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        if (!ynew.allFinite()) {
            out.termination = {Termination::Kind::NonFinite, t};
            return out;
        }
        k7 = rhs(t + h, ynew); // FSAL
        errvec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double err = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double sc = cfg.abs_tol +
                              cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double r = errvec[i] / sc;
            err += r * r;
        }
        err = std::sqrt(err / static_cast<double>(y.size()));

        if (err <= 1.0 || h <= cfg.h_min * (1.0 + 1e-12)) {
            const double tnew = t + h;
            while (next_sample < grid.size() &&
                   grid[next_sample] <= tnew * (1.0 + 1e-14)) {
                const double ts = grid[next_sample];
                record(ts, hermite(ts, t, y, k1, tnew, ynew, k7), k7);
                ++next_sample;
            }
            t = tnew;
            y.swap(ynew);
            f.swap(k7);
            // PI controller, safety 0.9, clamps [0.2, 5].
            const double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2) *
                               std::pow(err_prev, 0.04);
            h *= std::clamp(fac, 0.2, 5.0);
            err_prev = std::max(err, 1e-10);
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
            if (h < cfg.h_min) {
                out.termination = {Termination::Kind::StepUnderflow, t};
                return out;
            }
        }
    }
    while (next_sample < grid.size()) {
        record(grid[next_sample], y, f);
        ++next_sample;
    }
    out.termination = {Termination::Kind::Completed, t};
    return out;
}

/// Max sample-state discrepancy between a run at the configured tolerances
/// and one with both tolerances tightened by 100x.
inline double richardson_check(const Rhs& rhs, double t0, const Vec& init,
                               const IntegratorConfig& cfg) {
    RawTrajectory a = integrate(rhs, t0, init, cfg);
    IntegratorConfig tight = cfg;
    tight.rel_tol *= 0.01;
    tight.abs_tol *= 0.01;
    RawTrajectory b = integrate(rhs, t0, init, tight);
    if (!a.termination.completed() || !b.termination.completed())
        throw NumericError("richardson_check: integration did not complete");
    const std::size_t n = std::min(a.states.size(), b.states.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, (a.states[i] - b.states[i]).norm());
    return worst;
}

/// One sample of the flow with its optimality diagnostics attached.
struct TrajectorySample {
    SystemState state;
    Diagnostics diag;
    double energy = 0.0; // filled post hoc by the energy audit
    bool energy_set = false;
};

/// Flow-level trajectory: states plus derived diagnostics.
struct Trajectory {
    std::vector<TrajectorySample> samples;
    Termination termination;
    IntegratorConfig config;

    double speed(std::size_t i) const {
        const SystemState& s = samples[i].state;
        return std::sqrt(s.vx.squaredNorm() + s.vy.squaredNorm() +
                         s.vlam.squaredNorm());
    }
};

inline Trajectory make_trajectory(const SeparableProblem& p, const KktPoint& k,
                                  const RawTrajectory& raw,
                                  const IntegratorConfig& cfg) {
    Trajectory traj;
    traj.termination = raw.termination;
    traj.config = cfg;
    traj.samples.reserve(raw.times.size());
    for (std::size_t i = 0; i < raw.times.size(); ++i) {
        TrajectorySample s;
        s.state = SystemState::unflatten(raw.times[i], raw.states[i], p.n1, p.n2, p.m);
        s.diag = gap_and_feasibility(p, k, s.state.x, s.state.y);
        traj.samples.push_back(std::move(s));
    }
    return traj;
}

} // namespace pdflow

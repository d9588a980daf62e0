#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pdflow/damping.hpp"
#include "pdflow/dynamics.hpp"
#include "pdflow/errors.hpp"
#include "pdflow/integrate.hpp"
#include "pdflow/lyapunov.hpp"

namespace pdflow {

enum class Basis { LogT, LogP };

/// Least-squares slope of log(value) against log(t) or log(p(t)).
struct RateFit {
    double exponent = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    Basis basis = Basis::LogT;
    int used_samples = 0;
    int clamped_samples = 0;
};

/// Exponents the applicable theorem guarantees (upper bounds on decay order).
struct TheoreticalRates {
    double gap_exponent = 0.0;
    double feas_exponent = 0.0;
    double speed_exponent = 0.0;
    Basis basis = Basis::LogT;
    // Speeds only bounded for every exponent strictly inside an interval.
    bool speed_open_bound = false;
    std::string source;
};

inline TheoreticalRates theoretical_rates(const RegimeDescriptor& d) {
    if (!d.valid()) throw ContractError("theoretical_rates: invalid regime");
    TheoreticalRates tr;
    switch (d.kind) {
        case RegimeDescriptor::Kind::GeneralGammaCaseI:
        case RegimeDescriptor::Kind::GeneralGammaCaseII: {
            const bool power_r1 = d.alpha > 0.0 && d.r == 1.0;
            if (power_r1) {
                tr.basis = Basis::LogT;
                const double a = d.alpha;
                if (a > 3.0) {
                    tr.gap_exponent = -2.0;
                    tr.feas_exponent = -1.0;
                    tr.speed_exponent = -1.0;
                    tr.source = "power damping, alpha > 3";
                } else {
                    tr.gap_exponent = -2.0 * a / 3.0;
                    tr.feas_exponent = -a / 3.0;
                    tr.speed_exponent = -a / 3.0;
                    tr.speed_open_bound = a >= 3.0;
                    tr.source = "power damping, alpha <= 3";
                }
            } else {
                tr.basis = Basis::LogP;
                const double b =
                    d.kind == RegimeDescriptor::Kind::GeneralGammaCaseII ? 1.0 / 3.0
                                                                         : d.beta;
                tr.gap_exponent = -2.0 * b;
                tr.feas_exponent = -b;
                tr.speed_exponent = -b;
                tr.speed_open_bound =
                    d.kind == RegimeDescriptor::Kind::GeneralGammaCaseII;
                tr.source = "general damping, p(t) basis";
            }
            return tr;
        }
        case RegimeDescriptor::Kind::PowerNeg:
            tr.basis = Basis::LogT;
            tr.gap_exponent = -(d.r + 1.0);
            tr.feas_exponent = -(d.r + 1.0) / 2.0;
            tr.speed_exponent = -(d.r + 1.0) / 2.0;
            tr.source = "slow power damping";
            return tr;
        case RegimeDescriptor::Kind::PowerPos:
            tr.basis = Basis::LogT;
            tr.gap_exponent = -2.0 * d.r;
            tr.feas_exponent = -d.r;
            tr.speed_exponent = -d.r;
            tr.source = "fast power damping";
            return tr;
        default:
            throw ContractError("theoretical_rates: invalid regime");
    }
}

/// OLS fit of log(value) vs the chosen log basis over [t_lo, t_hi].
/// Values clamped to numerical zero (< 1e-16) end the usable window.
inline RateFit fit_decay_exponent(const std::vector<double>& times,
                                  const std::vector<double>& values, double t_lo,
                                  double t_hi, Basis basis,
                                  const DampingSchedule* schedule = nullptr) {
    if (times.size() != values.size())
        throw ContractError("fit_decay_exponent: size mismatch");
    if (basis == Basis::LogP && !schedule)
        throw ContractError("fit_decay_exponent: LogP basis needs the schedule");
    RateFit fit;
    fit.basis = basis;
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        if (t < t_lo || t > t_hi) continue;
        if (values[i] < 1e-16) {
            ++fit.clamped_samples;
            break; // decay beyond measurable range; stop at first clamped sample
        }
        const double x =
            basis == Basis::LogT ? std::log(t) : std::log(schedule->p_factor(t));
        xs.push_back(x);
        ys.push_back(std::log(values[i]));
    }
    if (xs.size() < 20)
        throw InsufficientDataError("fit_decay_exponent: fewer than 20 usable samples");

    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    fit.exponent = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.exponent * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (fit.intercept + fit.exponent * xs[i]);
        ss_res += e * e;
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.used_samples = static_cast<int>(xs.size());
    return fit;
}

/// Cumulative trapezoid of w(t) q(t) over the samples plus a heuristic
/// boundedness verdict: bounded iff the last decade adds <= 1% of the total.
struct TailIntegral {
    std::vector<double> cumulative;
    double total = 0.0;
    double last_decade_fraction = 0.0;
    bool bounded = false;
};

inline TailIntegral tail_integral(const std::vector<double>& times,
                                  const std::function<double(double)>& weight,
                                  const std::vector<double>& values) {
    if (times.size() != values.size() || times.size() < 2)
        throw ContractError("tail_integral: bad input sizes");
    TailIntegral out;
    out.cumulative.reserve(times.size());
    double acc = 0.0;
    double prev = weight(times[0]) * values[0];
    out.cumulative.push_back(0.0);
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double cur = weight(times[i]) * values[i];
        acc += 0.5 * (prev + cur) * (times[i] - times[i - 1]);
        out.cumulative.push_back(acc);
        prev = cur;
    }
    out.total = acc;
    const double t_hi = times.back();
    const double t_cut = t_hi / 10.0;
    double at_cut = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] <= t_cut) at_cut = out.cumulative[i];
    const double decade = acc - at_cut;
    out.last_decade_fraction = acc > 0.0 ? decade / acc : 0.0;
    out.bounded = out.last_decade_fraction <= 0.01;
    return out;
}

/// Weighted perturbation integral of the applicable robustness theorem,
/// estimated over [t0, 1e4 t0] with a tail-decade finiteness heuristic.
struct PerturbationBudget {
    double value = 0.0;
    double last_decade_fraction = 0.0;
    bool finite = false;
};

inline PerturbationBudget perturbation_budget(const Perturbation& pert,
                                              const DampingSchedule& s,
                                              const EnergyParams& ep,
                                              int grid_size = 4096) {
    PerturbationBudget out;
    if (pert.null) {
        out.finite = true;
        return out;
    }
    auto weight = [&](double t) {
        switch (ep.variant) {
            case EnergyParams::Variant::GeneralGamma:
                return std::pow(s.p_factor(t), ep.beta);
            case EnergyParams::Variant::PowerNeg:
                return std::pow(t, (ep.r + 1.0) / 2.0);
            case EnergyParams::Variant::PowerPos:
                return std::pow(t, ep.r);
        }
        return 0.0;
    };
    const std::vector<double> grid = log_grid(s.t0(), 1e4 * s.t0(), grid_size);
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) vals[i] = pert.norm(grid[i]);
    const TailIntegral ti = tail_integral(grid, weight, vals);
    out.value = ti.total;
    out.last_decade_fraction = ti.last_decade_fraction;
    out.finite = ti.bounded;
    return out;
}

} // namespace pdflow

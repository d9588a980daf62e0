#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pdflow/damping.hpp"
#include "pdflow/dynamics.hpp"
#include "pdflow/integrate.hpp"
#include "pdflow/problem.hpp"

namespace pdflow {

/// Selects which Lyapunov energy applies and with what parameters.
struct EnergyParams {
    enum class Variant { GeneralGamma, PowerNeg, PowerPos };
    Variant variant = Variant::GeneralGamma;
    double beta = 1.0 / 3.0;  // GeneralGamma
    double beta0 = 2.0 / 3.0; // GeneralGamma
    double r = 0.0;           // Power*
    double r0 = 1.0;          // Power*
    double alpha = 1.0;       // Power*

    static EnergyParams general(double beta, double beta0) {
        if (beta <= 0.0 || beta > 1.0 / 3.0)
            throw ContractError("EnergyParams: beta must lie in (0, 1/3]");
        if (beta0 < 2.0 * beta || beta0 > 1.0 - beta)
            throw ContractError("EnergyParams: beta0 outside [2 beta, 1 - beta]");
        EnergyParams e;
        e.variant = Variant::GeneralGamma;
        e.beta = beta;
        e.beta0 = beta0;
        return e;
    }
    static EnergyParams power_neg(double r, double r0, double alpha) {
        if (r <= -1.0 || r > 0.0)
            throw ContractError("EnergyParams: PowerNeg needs r in (-1, 0]");
        if (r0 <= (1.0 + r) / 2.0)
            throw ContractError("EnergyParams: PowerNeg needs r0 > (1+r)/2");
        EnergyParams e;
        e.variant = Variant::PowerNeg;
        e.r = r;
        e.r0 = r0;
        e.alpha = alpha;
        return e;
    }
    static EnergyParams power_pos(double r, double r0, double alpha) {
        if (r <= 0.0 || r >= 1.0)
            throw ContractError("EnergyParams: PowerPos needs r in (0, 1)");
        if (r0 <= r) throw ContractError("EnergyParams: PowerPos needs r0 > r");
        EnergyParams e;
        e.variant = Variant::PowerPos;
        e.r = r;
        e.r0 = r0;
        e.alpha = alpha;
        return e;
    }

    static EnergyParams from_regime(const RegimeDescriptor& d) {
        switch (d.kind) {
            case RegimeDescriptor::Kind::GeneralGammaCaseI:
            case RegimeDescriptor::Kind::GeneralGammaCaseII:
                return general(d.beta, d.beta0);
            case RegimeDescriptor::Kind::PowerNeg:
                return power_neg(d.r, d.r0, d.alpha);
            case RegimeDescriptor::Kind::PowerPos:
                return power_pos(d.r, d.r0, d.alpha);
            default:
                throw ContractError("cannot build energy params from invalid regime");
        }
    }

    double rho() const {
        return variant == Variant::PowerNeg ? (r + 1.0) / 2.0 : r;
    }
};

/// The velocity weight inside the energy: p(t)^beta or t^rho.
inline double energy_weight(const EnergyParams& ep, const DampingSchedule& s,
                            double t) {
    if (ep.variant == EnergyParams::Variant::GeneralGamma)
        return std::pow(s.p_factor(t), ep.beta);
    return std::pow(t, ep.rho());
}

/// Coefficient pair (theta, eta) of the energy at time t.
inline std::pair<double, double> theta_eta(const EnergyParams& ep,
                                           const DampingSchedule& s, double t) {
    switch (ep.variant) {
        case EnergyParams::Variant::GeneralGamma: {
            const GammaEval g = s.eval(t);
            const double pb = std::pow(s.p_factor(t), ep.beta);
            const double theta = ep.beta0 * pb * g.gamma;
            const double eta =
                -ep.beta0 * pb * pb *
                ((ep.beta0 + 2.0 * ep.beta - 1.0) * g.gamma * g.gamma + g.dgamma);
            return {theta, eta};
        }
        case EnergyParams::Variant::PowerNeg: {
            const double theta = 2.0 * ep.r0 * std::pow(t, (ep.r - 1.0) / 2.0);
            const double eta =
                2.0 * ep.r0 * (ep.alpha - (2.0 * ep.r0 + ep.r) * std::pow(t, ep.r - 1.0));
            return {theta, eta};
        }
        case EnergyParams::Variant::PowerPos: {
            const double tr1 = std::pow(t, ep.r - 1.0);
            const double theta = 2.0 * ep.r0 * tr1;
            const double eta =
                2.0 * ep.r0 * tr1 * ((1.0 - 2.0 * ep.r - 2.0 * ep.r0) * tr1 + ep.alpha);
            return {theta, eta};
        }
    }
    throw ContractError("unreachable energy variant");
}

/// Time derivatives of (theta, eta), closed form per variant.
inline std::pair<double, double> theta_eta_dot(const EnergyParams& ep,
                                               const DampingSchedule& s, double t) {
    switch (ep.variant) {
        case EnergyParams::Variant::GeneralGamma: {
            const GammaEval g = s.eval(t);
            const double pb = std::pow(s.p_factor(t), ep.beta);
            const double dtheta =
                ep.beta0 * pb * (ep.beta * g.gamma * g.gamma + g.dgamma);
            const double deta =
                -ep.beta0 * pb * pb *
                (2.0 * ep.beta * (ep.beta0 + 2.0 * ep.beta - 1.0) * g.gamma * g.gamma *
                     g.gamma +
                 (6.0 * ep.beta + 2.0 * ep.beta0 - 2.0) * g.gamma * g.dgamma +
                 g.ddgamma);
            return {dtheta, deta};
        }
        case EnergyParams::Variant::PowerNeg: {
            const double dtheta = ep.r0 * (ep.r - 1.0) * std::pow(t, (ep.r - 3.0) / 2.0);
            const double deta = -(4.0 * ep.r0 * ep.r0 + 2.0 * ep.r0 * ep.r) *
                                (ep.r - 1.0) * std::pow(t, ep.r - 2.0);
            return {dtheta, deta};
        }
        case EnergyParams::Variant::PowerPos: {
            const double dtheta = 2.0 * ep.r0 * (ep.r - 1.0) * std::pow(t, ep.r - 2.0);
            const double deta =
                2.0 * ep.r0 * (ep.r - 1.0) * std::pow(t, ep.r - 2.0) *
                ((2.0 - 4.0 * ep.r - 4.0 * ep.r0) * std::pow(t, ep.r - 1.0) + ep.alpha);
            return {dtheta, deta};
        }
    }
    throw ContractError("unreachable energy variant");
}

/// The variant's guaranteed lower bound on eta, valid beyond the regime's t1.
inline double eta_lower_bound(const EnergyParams& ep, const DampingSchedule& s,
                              double t) {
    switch (ep.variant) {
        case EnergyParams::Variant::GeneralGamma: {
            const GammaEval g = s.eval(t);
            const double p2b = std::pow(s.p_factor(t), 2.0 * ep.beta);
            return ep.beta0 * (1.0 - ep.beta - ep.beta0) * p2b * g.gamma * g.gamma;
        }
        case EnergyParams::Variant::PowerNeg:
            return ep.r0 * ep.alpha;
        case EnergyParams::Variant::PowerPos:
            return ep.r0 * ep.alpha * std::pow(t, ep.r - 1.0);
    }
    throw ContractError("unreachable energy variant");
}

/// The scalar Lyapunov energy at a state: weighted gap plus momentum and
/// anchoring terms in each of the three blocks.
inline double energy(const EnergyParams& ep, const SeparableProblem& p,
                     const KktPoint& k, const DampingSchedule& s,
                     const SystemState& st) {
    const double w = energy_weight(ep, s, st.t);
    const auto [theta, eta] = theta_eta(ep, s, st.t);
    const Diagnostics d = gap_and_feasibility(p, k, st.x, st.y);
    const Vec dx = st.x - k.x;
    const Vec dy = st.y - k.y;
    const Vec dl = st.lam - k.lambda;
    double e = w * w * d.gap;
    e += 0.5 * (theta * dx + w * st.vx).squaredNorm() + 0.5 * eta * dx.squaredNorm();
    e += 0.5 * (theta * dy + w * st.vy).squaredNorm() + 0.5 * eta * dy.squaredNorm();
    e += 0.5 * (theta * dl + w * st.vlam).squaredNorm() + 0.5 * eta * dl.squaredNorm();
    return e;
}

inline std::vector<double> energy_series(const EnergyParams& ep,
                                         const SeparableProblem& p, const KktPoint& k,
                                         const DampingSchedule& s,
                                         const Trajectory& traj) {
    std::vector<double> out;
    out.reserve(traj.samples.size());
    for (const auto& smp : traj.samples) out.push_back(energy(ep, p, k, s, smp.state));
    return out;
}

/// Perturbed energy: the plain energy minus the accumulated inner products
/// of the momentum terms with the weighted perturbation, trapezoid rule on
/// the sample grid.
inline std::vector<double> perturbed_energy(const EnergyParams& ep,
                                            const SeparableProblem& p,
                                            const KktPoint& k,
                                            const DampingSchedule& s,
                                            const Trajectory& traj,
                                            const Perturbation& pert) {
    std::vector<double> out;
    out.reserve(traj.samples.size());
    double acc = 0.0;
    double prev_t = 0.0, prev_integrand = 0.0;
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const SystemState& st = traj.samples[i].state;
        double integrand = 0.0;
        if (!pert.null) {
            const double w = energy_weight(ep, s, st.t);
            const auto [theta, eta] = theta_eta(ep, s, st.t);
            (void)eta;
            const Vec mx = theta * (st.x - k.x) + w * st.vx;
            const Vec my = theta * (st.y - k.y) + w * st.vy;
            integrand = mx.dot(w * pert.eps_x(st.t)) + my.dot(w * pert.eps_y(st.t));
        }
        if (i > 0) acc += 0.5 * (integrand + prev_integrand) * (st.t - prev_t);
        prev_t = st.t;
        prev_integrand = integrand;
        out.push_back(energy(ep, p, k, s, st) - acc);
    }
    return out;
}

/// Residual report for the algebraic identities the energy proof relies on.
struct IdentityReport {
    double coupling_residual = 0.0;     // w^2 - theta w delta, relative
    double cancellation_residual = 0.0; // the V2 coefficient, relative
    double sign_worst = 0.0;            // max of theta dtheta + deta/2 (<= 0 required)
    double eta_margin_worst = 0.0;      // min of eta - lower bound beyond t1
    double theta_min = 0.0;
    bool sign_ok() const { return sign_worst <= 1e-11; }
};

/// Evaluates the cancellation and sign conditions on a log grid. The
/// coupling kind must match the energy variant.
inline IdentityReport identity_audit(const EnergyParams& ep, const DampingSchedule& s,
                                     const CouplingRule& c, double t_lo, double t_hi,
                                     int grid_size = 256,
                                     std::optional<double> t1 = std::nullopt) {
    const bool general = ep.variant == EnergyParams::Variant::GeneralGamma;
    if (general && c.kind != CouplingRule::Kind::ReciprocalGamma)
        throw ContractError("GeneralGamma energy requires reciprocal coupling");
    if (!general && c.kind != CouplingRule::Kind::LinearInT)
        throw ContractError("power-law energy requires linear-in-t coupling");
    if (general && c.beta0 != ep.beta0)
        throw ContractError("coupling beta0 does not match energy params");
    if (!general && c.r0 != ep.r0)
        throw ContractError("coupling r0 does not match energy params");

    IdentityReport rep;
    rep.eta_margin_worst = std::numeric_limits<double>::infinity();
    rep.sign_worst = -std::numeric_limits<double>::infinity();
    rep.theta_min = std::numeric_limits<double>::infinity();
    const double onset = t1.value_or(t_lo);

    for (double t : log_grid(t_lo, t_hi, grid_size)) {
        const double w = energy_weight(ep, s, t);
        const auto [theta, eta] = theta_eta(ep, s, t);
        const auto [dtheta, deta] = theta_eta_dot(ep, s, t);
        const double delta = c.eval(s, t);

        // w^2 = theta w delta
        const double lhs = w * w;
        const double rhs = theta * w * delta;
        rep.coupling_residual = std::max(
            rep.coupling_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

        // coefficient of the mixed position-velocity term
        double coeff, scale;
        if (general) {
            const double gamma = s.eval(t).gamma;
            const double lin = theta + (ep.beta - 1.0) * w * gamma;
            coeff = theta * lin + dtheta * w + eta;
            scale = std::max({std::abs(theta * lin), std::abs(dtheta * w),
                              std::abs(eta), 1.0});
        } else {
            const double rho = ep.rho();
            const double lin = theta + rho * std::pow(t, rho - 1.0) -
                               ep.alpha * std::pow(t, rho - ep.r);
            coeff = theta * lin + eta + w * dtheta;
            scale = std::max({std::abs(theta * lin), std::abs(w * dtheta),
                              std::abs(eta), 1.0});
        }
        rep.cancellation_residual =
            std::max(rep.cancellation_residual, std::abs(coeff) / scale);

        // sign condition theta dtheta + deta/2 <= 0, reported relative
        const double sign_val = theta * dtheta + 0.5 * deta;
        const double sign_scale =
            std::max({std::abs(theta * dtheta), 0.5 * std::abs(deta), 1.0});
        rep.sign_worst = std::max(rep.sign_worst, sign_val / sign_scale);

        rep.theta_min = std::min(rep.theta_min, theta);
        if (t >= onset)
            rep.eta_margin_worst =
                std::min(rep.eta_margin_worst, eta - eta_lower_bound(ep, s, t));
    }
    return rep;
}

struct MonotonicityReport {
    bool monotone = true;
    std::ptrdiff_t first_violation = -1; // sample index of the first increase
};

/// E(t_{k+1}) <= E(t_k) (1 + rel_slack) + 1e-12 E(t_0) for all k.
inline MonotonicityReport monotonicity_audit(const std::vector<double>& energy_seq,
                                             double rel_slack) {
    if (energy_seq.empty()) throw ContractError("empty energy sequence");
    MonotonicityReport rep;
    const double abs_slack = 1e-12 * energy_seq.front();
    for (std::size_t k = 0; k + 1 < energy_seq.size(); ++k) {
        if (energy_seq[k + 1] > energy_seq[k] * (1.0 + rel_slack) + abs_slack) {
            rep.monotone = false;
            rep.first_violation = static_cast<std::ptrdiff_t>(k + 1);
            break;
        }
    }
    return rep;
}

} // namespace pdflow

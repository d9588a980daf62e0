#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pdflow/errors.hpp"

namespace pdflow {

struct GammaEval {
    double gamma;
    double dgamma;
    double ddgamma;
};

/// Log-spaced grid of n points over [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    const double ratio = std::log(hi / lo);
    for (int i = 0; i < n; ++i)
        g[i] = lo * std::exp(ratio * static_cast<double>(i) / (n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

/// Viscous damping coefficient gamma(t) with derivatives and the
/// integrating factor p(t) = exp(int_{t0}^t gamma).
class DampingSchedule {
  public:
    struct PowerLaw {
        double alpha; // gamma = alpha / t^r
        double r;     // r in (-1, 1]
    };
    struct LogPower {
        double r; // gamma = 1 / (t (ln t)^r), r in [0, 1]
    };
    struct Custom {
        std::function<double(double)> gamma;
        std::function<double(double)> dgamma;
        std::function<double(double)> ddgamma;
        bool declared_nonincreasing = false;
    };

    static DampingSchedule power_law(double alpha, double r, double t0) {
        if (alpha <= 0.0) throw RegimeError("power-law damping needs alpha > 0");
        if (r <= -1.0 || r > 1.0) throw RegimeError("power-law exponent must lie in (-1, 1]");
        if (r < 1.0 && t0 < 1.0) throw RegimeError("power-law with r < 1 needs t0 >= 1");
        if (t0 <= 0.0) throw RegimeError("t0 must be positive");
        DampingSchedule s;
        s.family_ = PowerLaw{alpha, r};
        s.t0_ = t0;
        if (r >= 0.0) s.spot_check_nonincreasing();
        return s;
    }

    static DampingSchedule log_power(double r, double t0) {
        if (r < 0.0 || r > 1.0) throw RegimeError("log-power exponent must lie in [0, 1]");
        if (t0 < std::exp(1.0)) throw RegimeError("log-power damping needs t0 >= e");
        DampingSchedule s;
        s.family_ = LogPower{r};
        s.t0_ = t0;
        s.spot_check_nonincreasing();
        return s;
    }

    static DampingSchedule custom(std::function<double(double)> g,
                                  std::function<double(double)> dg,
                                  std::function<double(double)> ddg, double t0,
                                  bool declared_nonincreasing = false) {
        if (t0 <= 0.0) throw RegimeError("t0 must be positive");
        DampingSchedule s;
        s.family_ = Custom{std::move(g), std::move(dg), std::move(ddg),
                           declared_nonincreasing};
        s.t0_ = t0;
        if (declared_nonincreasing) s.spot_check_nonincreasing();
        return s;
    }

    double t0() const { return t0_; }

    bool is_power_law() const { return std::holds_alternative<PowerLaw>(family_); }
    bool is_log_power() const { return std::holds_alternative<LogPower>(family_); }
    bool is_custom() const { return std::holds_alternative<Custom>(family_); }

    const PowerLaw* power_law_params() const { return std::get_if<PowerLaw>(&family_); }
    const LogPower* log_power_params() const { return std::get_if<LogPower>(&family_); }

    /// gamma(t) alone, skipping the derivative evaluations on the hot path.
    double gamma_at(double t) const {
        if (t < t0_) throw DomainError("gamma queried below t0");
        // the acceptance-relevant exponents are all half-integers; avoid the
        // generic pow for them
        auto powr = [](double base, double r) {
            if (r == 0.0) return 1.0;
            if (r == 1.0) return base;
            if (r == -1.0) return 1.0 / base;
            if (r == 0.5) return std::sqrt(base);
            if (r == -0.5) return 1.0 / std::sqrt(base);
            return std::pow(base, r);
        };
        double g;
        if (const auto* pl = std::get_if<PowerLaw>(&family_)) {
            g = pl->alpha * powr(t, -pl->r);
        } else if (const auto* lp = std::get_if<LogPower>(&family_)) {
            g = 1.0 / (t * powr(std::log(t), lp->r));
        } else {
            g = std::get<Custom>(family_).gamma(t);
        }
        if (!(g > 0.0) || !std::isfinite(g))
            throw NumericError("gamma(t) must be positive and finite");
        return g;
    }

    GammaEval eval(double t) const {
        if (t < t0_) throw DomainError("gamma queried below t0");
        GammaEval e{};
        if (const auto* pl = std::get_if<PowerLaw>(&family_)) {
            const double a = pl->alpha, r = pl->r;
            e.gamma = a * std::pow(t, -r);
            e.dgamma = -a * r * std::pow(t, -r - 1.0);
            e.ddgamma = a * r * (r + 1.0) * std::pow(t, -r - 2.0);
        } else if (const auto* lp = std::get_if<LogPower>(&family_)) {
            const double r = lp->r;
            const double L = std::log(t);
            e.gamma = 1.0 / (t * std::pow(L, r));
            e.dgamma = -(L + r) / (t * t * std::pow(L, r + 1.0));
            e.ddgamma = (2.0 * L * L + 3.0 * r * L + r * (r + 1.0)) /
                        (t * t * t * std::pow(L, r + 2.0));
        } else {
            const auto& c = std::get<Custom>(family_);
            e.gamma = c.gamma(t);
            e.dgamma = c.dgamma(t);
            e.ddgamma = c.ddgamma(t);
        }
        if (!(e.gamma > 0.0) || !std::isfinite(e.gamma))
            throw NumericError("gamma(t) must be positive and finite");
        return e;
    }

    /// p(t) = exp(int_{t0}^t gamma). Closed forms for the built-in families,
    /// cached adaptive Simpson for custom schedules.
    double p_factor(double t) const {
        if (t < t0_) throw DomainError("p(t) queried below t0");
        if (const auto* pl = std::get_if<PowerLaw>(&family_)) {
            if (pl->r == 1.0) return std::pow(t / t0_, pl->alpha);
            const double e = 1.0 - pl->r;
            return std::exp(pl->alpha * (std::pow(t, e) - std::pow(t0_, e)) / e);
        }
        if (const auto* lp = std::get_if<LogPower>(&family_)) {
            if (lp->r == 1.0) return std::log(t) / std::log(t0_);
            const double e = 1.0 - lp->r;
            return std::exp((std::pow(std::log(t), e) - std::pow(std::log(t0_), e)) / e);
        }
        return std::exp(integral_gamma(t));
    }

    /// Whether int_{t0}^inf gamma diverges. Analytic for the built-in families.
    /// For custom schedules this is a tail-growth heuristic, flagged as such.
    bool integral_diverges(bool* heuristic = nullptr) const {
        if (heuristic) *heuristic = false;
        if (is_power_law() || is_log_power()) return true;
        if (heuristic) *heuristic = true;
        return p_factor(1e6 * t0_) > 1e3;
    }

  private:
    DampingSchedule() = default;

    void spot_check_nonincreasing() const {
        for (double t : log_grid(t0_, 1e4 * t0_, 64))
            if (eval(t).dgamma > 1e-14)
                throw ContractError("damping schedule is not nonincreasing");
    }

    // Adaptive Simpson for int_{t0}^t gamma with monotone checkpoints so a
    // sweep of increasing times pays one incremental panel each.
    double integral_gamma(double t) const {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        double base_t = t0_, base_val = 0.0;
        auto it = cache_.upper_bound(t);
        if (it != cache_.begin()) {
            --it;
            base_t = it->first;
            base_val = it->second;
        }
        if (t == base_t) return base_val;
        const auto& c = std::get<Custom>(family_);
        const double inc = adaptive_simpson(c.gamma, base_t, t, 1e-12, 40);
        const double val = base_val + inc;
        cache_[t] = val;
        return val;
    }

    static double adaptive_simpson(const std::function<double(double)>& f, double a,
                                   double b, double tol, int depth) {
        const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
        const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        return simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
    }

    static double simpson_rec(const std::function<double(double)>& f, double a,
                              double b, double fa, double fm, double fb,
                              double whole, double tol, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double err = left + right - whole;
        if (depth <= 0) throw NumericError("quadrature failed to converge");
        if (std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
        return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
               simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }

    std::variant<PowerLaw, LogPower, Custom> family_;
    double t0_ = 1.0;
    mutable std::mutex cache_mutex_;
    mutable std::map<double, double> cache_;

  public:
    DampingSchedule(const DampingSchedule& o) : family_(o.family_), t0_(o.t0_) {}
    DampingSchedule& operator=(const DampingSchedule& o) {
        family_ = o.family_;
        t0_ = o.t0_;
        cache_.clear();
        return *this;
    }
};

/// The coupling factor delta(t) multiplying velocity cross-terms.
struct CouplingRule {
    enum class Kind { ReciprocalGamma, LinearInT };
    Kind kind = Kind::ReciprocalGamma;
    double beta0 = 2.0 / 3.0; // delta = 1/(beta0 gamma)
    double r0 = 1.0;          // delta = t/(2 r0)

    static CouplingRule reciprocal(double beta0) {
        if (beta0 <= 0.0 || beta0 >= 1.0)
            throw ContractError("reciprocal coupling needs beta0 in (0, 1)");
        return CouplingRule{Kind::ReciprocalGamma, beta0, 0.0};
    }
    static CouplingRule linear_in_t(double r0) {
        if (r0 <= 0.0) throw ContractError("linear coupling needs r0 > 0");
        return CouplingRule{Kind::LinearInT, 0.0, r0};
    }

    double eval(const DampingSchedule& s, double t) const {
        if (kind == Kind::ReciprocalGamma) {
            const double g = s.eval(t).gamma;
            if (g <= 0.0) throw NumericError("delta undefined: gamma(t) <= 0");
            return 1.0 / (beta0 * g);
        }
        return t / (2.0 * r0);
    }
};

inline double delta_eval(const CouplingRule& c, const DampingSchedule& s, double t) {
    return c.eval(s, t);
}

/// Certificate for the curvature growth condition ddgamma >= 2 beta^2 gamma^3.
struct GrowthCertificate {
    double beta = 0.0;
    bool holds = false;
    double worst_margin = 0.0; // min over grid of ddgamma - 2 beta^2 gamma^3
};

inline GrowthCertificate check_growth(const DampingSchedule& s, double beta,
                                      int grid_size = 256) {
    if (beta <= 0.0 || beta > 1.0 / 3.0)
        throw ContractError("growth condition requires beta in (0, 1/3]");
    GrowthCertificate cert;
    cert.beta = beta;
    cert.worst_margin = std::numeric_limits<double>::infinity();
    for (double t : log_grid(s.t0(), 1e6 * s.t0(), grid_size)) {
        const GammaEval e = s.eval(t);
        cert.worst_margin = std::min(
            cert.worst_margin, e.ddgamma - 2.0 * beta * beta * e.gamma * e.gamma * e.gamma);
    }
    cert.holds = cert.worst_margin >= -1e-14;
    // gamma = alpha/t admits the exact criterion alpha*beta <= 1.
    if (const auto* pl = s.power_law_params(); pl && pl->r == 1.0)
        cert.holds = pl->alpha * beta <= 1.0 + 1e-12;
    return cert;
}

/// dgamma <= -beta gamma^2 on a log grid (consequence of the growth condition).
inline bool lemma_a1_check(const DampingSchedule& s, double beta,
                           int grid_size = 256) {
    for (double t : log_grid(s.t0(), 1e6 * s.t0(), grid_size)) {
        const GammaEval e = s.eval(t);
        if (e.dgamma + beta * e.gamma * e.gamma > 1e-14) return false;
    }
    return true;
}

/// Which theorem's parameter conditions a (gamma, delta, energy) setup meets.
struct RegimeDescriptor {
    enum class Kind {
        GeneralGammaCaseI,  // beta < 1/3, beta0 in (2 beta, 1 - beta)
        GeneralGammaCaseII, // beta = 1/3, beta0 = 2/3
        PowerNeg,           // gamma = alpha/t^r, r in (-1, 0], r0 > (1+r)/2
        PowerPos,           // gamma = alpha/t^r, r in (0, 1), r0 > r
        Invalid,
    };
    Kind kind = Kind::Invalid;
    std::string reason;
    double beta = 0.0;
    double beta0 = 0.0;
    double r = 0.0;
    double r0 = 0.0;
    double alpha = 0.0;
    double t0 = 1.0;
    // Smallest time at which the section-3 alpha lower bound holds.
    double t1 = 1.0;
    bool alpha_bound_at_t0 = false;

    bool valid() const { return kind != Kind::Invalid; }
    bool is_general() const {
        return kind == Kind::GeneralGammaCaseI || kind == Kind::GeneralGammaCaseII;
    }
};

namespace detail {
// inf{t >= t0 : alpha > coeff * t^(r-1)}, found by bisection.
inline double alpha_bound_onset(double alpha, double coeff, double r, double t0) {
    auto margin = [&](double t) { return alpha - coeff * std::pow(t, r - 1.0); };
    if (margin(t0) > 0.0) return t0;
    double lo = t0, hi = t0;
    while (margin(hi) <= 0.0) {
        hi *= 2.0;
        if (hi > 1e18) throw NumericError("alpha bound never satisfied");
    }
    for (int i = 0; i < 200 && (hi - lo) > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (margin(mid) > 0.0 ? hi : lo) = mid;
    }
    return hi;
}
} // namespace detail

/// Classifies a configuration against the parameter conditions of the
/// convergence theorems. `beta` is required for reciprocal coupling.
inline RegimeDescriptor validate_regime(const DampingSchedule& s,
                                        const CouplingRule& c,
                                        std::optional<double> beta = std::nullopt) {
    RegimeDescriptor d;
    d.t0 = s.t0();
    d.t1 = s.t0();

    if (c.kind == CouplingRule::Kind::ReciprocalGamma) {
        if (!beta) {
            d.reason = "reciprocal coupling requires beta";
            return d;
        }
        d.beta = *beta;
        d.beta0 = c.beta0;
        if (const auto* pl = s.power_law_params()) {
            d.alpha = pl->alpha;
            d.r = pl->r;
        }
        if (d.beta <= 0.0 || d.beta > 1.0 / 3.0) {
            d.reason = "beta must lie in (0, 1/3]";
            return d;
        }
        const GrowthCertificate g = check_growth(s, d.beta);
        if (!g.holds) {
            d.reason = "growth condition ddgamma >= 2 beta^2 gamma^3 fails";
            return d;
        }
        const bool case2 = d.beta == 1.0 / 3.0 && d.beta0 == 2.0 / 3.0;
        if (case2) {
            d.kind = RegimeDescriptor::Kind::GeneralGammaCaseII;
        } else if (d.beta < 1.0 / 3.0 && d.beta0 > 2.0 * d.beta &&
                   d.beta0 < 1.0 - d.beta) {
            d.kind = RegimeDescriptor::Kind::GeneralGammaCaseI;
        } else {
            d.reason = "beta0 outside (2 beta, 1 - beta)";
            return d;
        }
        d.alpha_bound_at_t0 = true;
        return d;
    }

    // Linear-in-t coupling pairs with gamma = alpha/t^r, r in (-1, 1).
    const auto* pl = s.power_law_params();
    if (!pl) {
        d.reason = "linear coupling requires a power-law damping schedule";
        return d;
    }
    d.alpha = pl->alpha;
    d.r = pl->r;
    d.r0 = c.r0;
    if (d.r >= 1.0) {
        d.reason = "power regimes require r < 1";
        return d;
    }
    double coeff = 0.0;
    if (d.r <= 0.0) {
        if (d.r0 <= (1.0 + d.r) / 2.0) {
            d.reason = "r0 <= (1+r)/2";
            return d;
        }
        d.kind = RegimeDescriptor::Kind::PowerNeg;
        coeff = 4.0 * d.r0 + d.r + 1.0;
    } else {
        if (d.r0 <= d.r) {
            d.reason = "r0 <= r";
            return d;
        }
        d.kind = RegimeDescriptor::Kind::PowerPos;
        coeff = 4.0 * d.r0 + 2.0 * d.r;
    }
    d.t1 = detail::alpha_bound_onset(d.alpha, coeff, d.r, d.t0);
    d.alpha_bound_at_t0 = d.t1 == d.t0;
    return d;
}

} // namespace pdflow

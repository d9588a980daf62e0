#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "pdflow/damping.hpp"
#include "pdflow/problem.hpp"

namespace pdflow {

/// First-order reduction of the second-order flow. Layout is fixed as
/// (x, y, lambda, vx, vy, vlambda) for the integrator and serialization.
struct SystemState {
    double t = 0.0;
    Vec x, y, lam;
    Vec vx, vy, vlam;

    static SystemState zero(double t, int n1, int n2, int m) {
        SystemState s;
        s.t = t;
        s.x = Vec::Zero(n1);
        s.y = Vec::Zero(n2);
        s.lam = Vec::Zero(m);
        s.vx = Vec::Zero(n1);
        s.vy = Vec::Zero(n2);
        s.vlam = Vec::Zero(m);
        return s;
    }

    Vec flatten() const {
        Vec v(2 * (x.size() + y.size() + lam.size()));
        v << x, y, lam, vx, vy, vlam;
        return v;
    }

    static SystemState unflatten(double t, const Vec& v, int n1, int n2, int m) {
        SystemState s;
        s.t = t;
        s.x = v.segment(0, n1);
        s.y = v.segment(n1, n2);
        s.lam = v.segment(n1 + n2, m);
        s.vx = v.segment(n1 + n2 + m, n1);
        s.vy = v.segment(2 * n1 + n2 + m, n2);
        s.vlam = v.segment(2 * n1 + 2 * n2 + m, m);
        return s;
    }

    bool finite() const {
        return x.allFinite() && y.allFinite() && lam.allFinite() && vx.allFinite() &&
               vy.allFinite() && vlam.allFinite();
    }
};

/// External forcing on the primal rows. The common scalar case is recovered
/// by broadcasting a scalar signal across all components.
struct Perturbation {
    std::function<Vec(double)> eps_x;
    std::function<Vec(double)> eps_y;
    bool null = false;

    static Perturbation none(int n1, int n2) {
        Perturbation p;
        p.eps_x = [n1](double) { return Vec(Vec::Zero(n1)); };
        p.eps_y = [n2](double) { return Vec(Vec::Zero(n2)); };
        p.null = true;
        return p;
    }

    static Perturbation scalar_broadcast(std::function<double(double)> c, int n1,
                                         int n2) {
        Perturbation p;
        p.eps_x = [c, n1](double t) { return Vec(c(t) * Vec::Ones(n1)); };
        p.eps_y = [c, n2](double t) { return Vec(c(t) * Vec::Ones(n2)); };
        return p;
    }

    double norm(double t) const {
        if (null) return 0.0;
        return std::sqrt(eps_x(t).squaredNorm() + eps_y(t).squaredNorm());
    }
};

/// Time derivative of the state under the inertial primal-dual flow,
/// optionally perturbed on the primal acceleration rows.
inline SystemState vector_field(const SeparableProblem& p, const DampingSchedule& s,
                                const CouplingRule& c, const Perturbation* pert,
                                const SystemState& st) {
    p.require_point(st.x, st.y);
    const double gamma = s.eval(st.t).gamma;
    const double delta = c.eval(s, st.t);
    const Vec residual = p.A * st.x + p.B * st.y - p.b;
    const Vec lam_ex = st.lam + delta * st.vlam;

    SystemState d;
    d.t = st.t;
    d.x = st.vx;
    d.y = st.vy;
    d.lam = st.vlam;
    d.vx = -gamma * st.vx - p.grad_f(st.x) - p.A.transpose() * (lam_ex + residual);
    d.vy = -gamma * st.vy - p.grad_g(st.y) - p.B.transpose() * (lam_ex + residual);
    d.vlam = -gamma * st.vlam + p.A * (st.x + delta * st.vx) +
             p.B * (st.y + delta * st.vy) - p.b;
    if (pert && !pert->null) {
        d.vx += pert->eps_x(st.t);
        d.vy += pert->eps_y(st.t);
    }
    if (!d.finite())
        throw NumericError("vector field produced a non-finite value");
    return d;
}

namespace detail {

// Allocation-light evaluator for the flattened field. The integrator calls
// this millions of times for the strongly coupled regimes, so the state is
// never materialized as a SystemState and the scratch vectors are reused.
struct FlowRhs {
    SeparableProblem p;
    DampingSchedule s;
    CouplingRule c;
    Perturbation pert;
    bool forced = false;
    mutable Vec residual, xbuf, ybuf;

    Vec operator()(double t, const Vec& v) const {
        const int n1 = p.n1, n2 = p.n2, m = p.m;
        if (v.size() != 2 * (n1 + n2 + m))
            throw ContractError("rhs: state dimension mismatch");

        const double gamma = s.gamma_at(t);
        const double delta = c.kind == CouplingRule::Kind::ReciprocalGamma
                                 ? 1.0 / (c.beta0 * gamma)
                                 : t / (2.0 * c.r0);

        Vec out(v.size());
        if (p.quadratic_oracles) {
            // scalar loops over the small blocks; Eigen expression setup
            // dominates the arithmetic at these sizes
            const double* X = v.data();
            const double* Y = X + n1;
            const double* L = Y + n2;
            const double* VX = L + m;
            const double* VY = VX + n1;
            const double* VL = VY + n2;
            double* OX = out.data();
            double* OY = OX + n1;
            double* OL = OY + n2;
            double* OVX = OL + m;
            double* OVY = OVX + n1;
            double* OVL = OVY + n2;
            const double* A = p.A.data(); // column-major
            const double* B = p.B.data();
            const double* bb = p.b.data();
            double* R = residual.data();

            for (int i = 0; i < n1; ++i) OX[i] = VX[i];
            for (int i = 0; i < n2; ++i) OY[i] = VY[i];
            for (int k = 0; k < m; ++k) {
                OL[k] = VL[k];
                // R accumulates lambda + delta vlam + (Ax + By - b)
                R[k] = L[k] + delta * VL[k] - bb[k];
                OVL[k] = -gamma * VL[k] - bb[k];
            }
            for (int j = 0; j < n1; ++j) {
                const double xj = X[j], xdj = X[j] + delta * VX[j];
                const double* col = A + static_cast<std::ptrdiff_t>(j) * m;
                for (int k = 0; k < m; ++k) {
                    R[k] += col[k] * xj;
                    OVL[k] += col[k] * xdj;
                }
            }
            for (int j = 0; j < n2; ++j) {
                const double yj = Y[j], ydj = Y[j] + delta * VY[j];
                const double* col = B + static_cast<std::ptrdiff_t>(j) * m;
                for (int k = 0; k < m; ++k) {
                    R[k] += col[k] * yj;
                    OVL[k] += col[k] * ydj;
                }
            }
            const double* Pm = p.hess_f.data();
            const double* qv = p.lin_f.data();
            for (int i = 0; i < n1; ++i) {
                double a = -gamma * VX[i] - qv[i];
                for (int j = 0; j < n1; ++j)
                    a -= Pm[static_cast<std::ptrdiff_t>(j) * n1 + i] * X[j];
                const double* col = A + static_cast<std::ptrdiff_t>(i) * m;
                for (int k = 0; k < m; ++k) a -= col[k] * R[k];
                OVX[i] = a;
            }
            const double* Rm = p.hess_g.data();
            const double* sv = p.lin_g.data();
            for (int i = 0; i < n2; ++i) {
                double a = -gamma * VY[i] - sv[i];
                for (int j = 0; j < n2; ++j)
                    a -= Rm[static_cast<std::ptrdiff_t>(j) * n2 + i] * Y[j];
                const double* col = B + static_cast<std::ptrdiff_t>(i) * m;
                for (int k = 0; k < m; ++k) a -= col[k] * R[k];
                OVY[i] = a;
            }
        } else {
            const auto x = v.segment(0, n1);
            const auto y = v.segment(n1, n2);
            const auto lam = v.segment(n1 + n2, m);
            const auto vx = v.segment(n1 + n2 + m, n1);
            const auto vy = v.segment(2 * n1 + n2 + m, n2);
            const auto vlam = v.segment(2 * n1 + 2 * n2 + m, m);
            residual.noalias() = p.A * x;
            residual.noalias() += p.B * y;
            residual -= p.b;
            // lambda + delta*vlam + residual feeds both primal rows
            residual += lam + delta * vlam;
            out.segment(0, n1) = vx;
            out.segment(n1, n2) = vy;
            out.segment(n1 + n2, m) = vlam;
            auto dvx = out.segment(n1 + n2 + m, n1);
            auto dvy = out.segment(2 * n1 + n2 + m, n2);
            auto dvlam = out.segment(2 * n1 + 2 * n2 + m, m);
            xbuf = x;
            ybuf = y;
            dvx = -gamma * vx - p.grad_f(xbuf);
            dvy = -gamma * vy - p.grad_g(ybuf);
            dvx.noalias() -= p.A.transpose() * residual;
            dvy.noalias() -= p.B.transpose() * residual;
            dvlam = -gamma * vlam - p.b;
            dvlam.noalias() += p.A * (x + delta * vx);
            dvlam.noalias() += p.B * (y + delta * vy);
        }
        if (forced) {
            out.segment(n1 + n2 + m, n1) += pert.eps_x(t);
            out.segment(2 * n1 + n2 + m, n2) += pert.eps_y(t);
        }
        if (!out.allFinite())
            throw NumericError("vector field produced a non-finite value");
        return out;
    }
};

} // namespace detail

/// Flattened right-hand side for the generic integrator. Inputs are copied,
/// so the returned callable owns everything it needs.
inline std::function<Vec(double, const Vec&)> make_rhs(const SeparableProblem& p,
                                                       const DampingSchedule& s,
                                                       const CouplingRule& c,
                                                       const Perturbation* pert) {
    detail::FlowRhs rhs{p, s, c,
                        pert ? *pert : Perturbation::none(p.n1, p.n2),
                        pert && !pert->null};
    rhs.residual = Vec::Zero(p.m);
    rhs.xbuf = Vec::Zero(p.n1);
    rhs.ybuf = Vec::Zero(p.n2);
    return rhs;
}

} // namespace pdflow

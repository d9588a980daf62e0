#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <utility>

#include "pdflow/errors.hpp"

namespace pdflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Residual norms and optimality measures at a point (x, y).
struct Diagnostics {
    double gap = 0.0;            // L(x,y,lam*) - L(x*,y*,lam*), clamped at 0
    double feasibility = 0.0;    // ||Ax + By - b||
    double stationarity_x = 0.0; // ||grad f(x) + A^T lam||
    double stationarity_y = 0.0; // ||grad g(y) + B^T lam||
    double primal_residual = 0.0;
};

/// min f(x) + g(y)  s.t.  Ax + By = b, with f, g smooth convex.
struct SeparableProblem {
    int n1 = 0;
    int n2 = 0;
    int m = 0;
    std::function<double(const Vec&)> f_val;
    std::function<Vec(const Vec&)> grad_f;
    std::function<double(const Vec&)> g_val;
    std::function<Vec(const Vec&)> grad_g;
    Mat A;
    Mat B;
    Vec b;

    // Dense quadratic oracles mirrored out of the std::functions so the
    // integrator's right-hand side can skip the type-erased calls; set by
    // make_quadratic_problem, ignored for hand-built problems.
    bool quadratic_oracles = false;
    Mat hess_f, hess_g;
    Vec lin_f, lin_g;

    void require_consistent() const {
        if (A.rows() != m || A.cols() != n1 || B.rows() != m || B.cols() != n2 ||
            b.size() != m)
            throw ContractError("SeparableProblem: inconsistent dimensions");
        if (!f_val || !grad_f || !g_val || !grad_g)
            throw ContractError("SeparableProblem: missing oracle");
    }

    void require_point(const Vec& x, const Vec& y) const {
        if (x.size() != n1 || y.size() != n2)
            throw ContractError("point dimension does not match problem");
    }
};

/// Solution certificate: satisfies the stationarity and feasibility system.
struct KktPoint {
    Vec x;
    Vec y;
    Vec lambda;
};

inline double augmented_lagrangian(const SeparableProblem& p, const Vec& x,
                                   const Vec& y, const Vec& lam) {
    p.require_point(x, y);
    if (lam.size() != p.m)
        throw ContractError("multiplier dimension does not match problem");
    const Vec residual = p.A * x + p.B * y - p.b;
    return p.f_val(x) + p.g_val(y) + lam.dot(residual) + 0.5 * residual.squaredNorm();
}

inline Diagnostics kkt_residuals(const SeparableProblem& p, const Vec& x,
                                 const Vec& y, const Vec& lam) {
    p.require_point(x, y);
    if (lam.size() != p.m)
        throw ContractError("multiplier dimension does not match problem");
    Diagnostics d;
    d.stationarity_x = (p.grad_f(x) + p.A.transpose() * lam).norm();
    d.stationarity_y = (p.grad_g(y) + p.B.transpose() * lam).norm();
    d.primal_residual = (p.A * x + p.B * y - p.b).norm();
    return d;
}

inline void verify_kkt(const SeparableProblem& p, const KktPoint& k,
                       double tol = 1e-10) {
    const Diagnostics d = kkt_residuals(p, k.x, k.y, k.lambda);
    if (d.stationarity_x > tol || d.stationarity_y > tol || d.primal_residual > tol)
        throw CertificateError("KKT certificate exceeds tolerance");
}

/// Lagrangian gap and feasibility relative to a verified KKT point.
/// The gap is clamped at 0 when within -1e-12 of it; larger negative
/// values indicate an invalid certificate and are reported as-is.
inline Diagnostics gap_and_feasibility(const SeparableProblem& p, const KktPoint& k,
                                       const Vec& x, const Vec& y) {
    Diagnostics d = kkt_residuals(p, x, y, k.lambda);
    d.feasibility = d.primal_residual;
    const double saddle = augmented_lagrangian(p, k.x, k.y, k.lambda);
    double gap = augmented_lagrangian(p, x, y, k.lambda) - saddle;
    if (gap < 0.0 && gap > -1e-12) gap = 0.0;
    d.gap = gap;
    return d;
}

/// Quadratic instance data, kept for serialization and oracle rebuilds.
struct QuadraticData {
    Mat P;
    Vec q;
    Mat R;
    Vec s;
};

struct ProblemInstance {
    SeparableProblem problem;
    KktPoint kkt;
    QuadraticData quadratic;
};

/// Builds f(x) = 1/2 x^T P x + q^T x, g(y) = 1/2 y^T R y + s^T y and the
/// KKT point from a direct dense solve of the stationarity/feasibility system.
inline ProblemInstance make_quadratic_problem(const Mat& P, const Vec& q,
                                              const Mat& R, const Vec& s,
                                              const Mat& A, const Mat& B,
                                              const Vec& b) {
    const int n1 = static_cast<int>(P.rows());
    const int n2 = static_cast<int>(R.rows());
    const int m = static_cast<int>(A.rows());
    if (P.cols() != n1 || R.cols() != n2 || q.size() != n1 || s.size() != n2 ||
        A.cols() != n1 || B.rows() != m || B.cols() != n2 || b.size() != m)
        throw ContractError("make_quadratic_problem: inconsistent dimensions");
    if (!P.isApprox(P.transpose(), 1e-12) || !R.isApprox(R.transpose(), 1e-12))
        throw FactoryError("make_quadratic_problem: P and R must be symmetric");

    ProblemInstance inst;
    inst.quadratic = {P, q, R, s};
    SeparableProblem& p = inst.problem;
    p.n1 = n1;
    p.n2 = n2;
    p.m = m;
    p.A = A;
    p.B = B;
    p.b = b;
    p.quadratic_oracles = true;
    p.hess_f = P;
    p.hess_g = R;
    p.lin_f = q;
    p.lin_g = s;
    p.f_val = [P, q](const Vec& x) { return 0.5 * x.dot(P * x) + q.dot(x); };
    p.grad_f = [P, q](const Vec& x) { return Vec(P * x + q); };
    p.g_val = [R, s](const Vec& y) { return 0.5 * y.dot(R * y) + s.dot(y); };
    p.grad_g = [R, s](const Vec& y) { return Vec(R * y + s); };

    // [ P  0  A^T ] [x]   [-q]
    // [ 0  R  B^T ] [y] = [-s]
    // [ A  B  0   ] [l]   [ b]
    const int n = n1 + n2 + m;
    Mat K = Mat::Zero(n, n);
    K.block(0, 0, n1, n1) = P;
    K.block(0, n1 + n2, n1, m) = A.transpose();
    K.block(n1, n1, n2, n2) = R;
    K.block(n1, n1 + n2, n2, m) = B.transpose();
    K.block(n1 + n2, 0, m, n1) = A;
    K.block(n1 + n2, n1, m, n2) = B;
    Vec rhs(n);
    rhs.head(n1) = -q;
    rhs.segment(n1, n2) = -s;
    rhs.tail(m) = b;

    Eigen::PartialPivLU<Mat> lu(K);
    const Vec sol = lu.solve(rhs);
    if (!sol.allFinite() || (K * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
        throw FactoryError("make_quadratic_problem: KKT system singular or inconsistent");

    inst.kkt.x = sol.head(n1);
    inst.kkt.y = sol.segment(n1, n2);
    inst.kkt.lambda = sol.tail(m);
    verify_kkt(p, inst.kkt, 1e-10);
    return inst;
}

/// Checks the gradient oracles against central differences on random probes.
inline bool validate_gradients(const SeparableProblem& p, std::mt19937& rng,
                               int probes = 8, double step = 1e-5,
                               double rel_tol = 1e-6) {
    std::normal_distribution<double> dist(0.0, 1.0);
    auto check = [&](int n, const std::function<double(const Vec&)>& val,
                     const std::function<Vec(const Vec&)>& grad) {
        for (int k = 0; k < probes; ++k) {
            Vec z(n);
            for (int i = 0; i < n; ++i) z[i] = dist(rng);
            const Vec g = grad(z);
            for (int i = 0; i < n; ++i) {
                Vec zp = z, zm = z;
                zp[i] += step;
                zm[i] -= step;
                const double fd = (val(zp) - val(zm)) / (2.0 * step);
                if (std::abs(fd - g[i]) > rel_tol * (1.0 + std::abs(g[i])))
                    return false;
            }
        }
        return true;
    };
    return check(p.n1, p.f_val, p.grad_f) && check(p.n2, p.g_val, p.grad_g);
}

} // namespace pdflow

#include <doctest.h>

#include <cmath>
#include <random>

#include "pdflow/problem.hpp"

using namespace pdflow;

namespace {

// P=R=I2, q=s=0, A=B=I2, b=(1,1). Solution x*=y*=(1/2,1/2), lam*=(-1/2,-1/2).
ProblemInstance p1() {
    const Mat I = Mat::Identity(2, 2);
    Vec b(2);
    b << 1.0, 1.0;
    return make_quadratic_problem(I, Vec::Zero(2), I, Vec::Zero(2), I, I, b);
}

} // namespace

TEST_CASE("quadratic factory recovers the hand-solved saddle point of P1") {
    const ProblemInstance inst = p1();
    CHECK(inst.kkt.x(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(inst.kkt.x(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(inst.kkt.y(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(inst.kkt.y(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(inst.kkt.lambda(0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(inst.kkt.lambda(1) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("factory with b=0 and no linear terms yields the origin") {
    const Mat I = Mat::Identity(2, 2);
    const ProblemInstance inst = make_quadratic_problem(
        I, Vec::Zero(2), I, Vec::Zero(2), I, I, Vec::Zero(2));
    CHECK(inst.kkt.x.norm() <= 1e-12);
    CHECK(inst.kkt.y.norm() <= 1e-12);
    CHECK(inst.kkt.lambda.norm() <= 1e-12);
}

TEST_CASE("factory P2 certificate satisfies the stationarity system to 1e-10") {
    Mat P(2, 2), R = Mat::Identity(2, 2), A = Mat::Identity(2, 2), B(2, 2);
    P << 1, 0, 0, 2;
    B << 1, 1, 0, 1;
    Vec q(2), b(2);
    q << 1, 0;
    b << 1, 2;
    const ProblemInstance inst =
        make_quadratic_problem(P, q, R, Vec::Zero(2), A, B, b);
    const Diagnostics d =
        kkt_residuals(inst.problem, inst.kkt.x, inst.kkt.y, inst.kkt.lambda);
    CHECK(d.stationarity_x <= 1e-10);
    CHECK(d.stationarity_y <= 1e-10);
    CHECK(d.primal_residual <= 1e-10);
}

TEST_CASE("factory rejects bad inputs") {
    const Mat I = Mat::Identity(2, 2);
    Mat S(2, 2);
    S << 1, 2, 3, 4; // not symmetric
    CHECK_THROWS_AS(make_quadratic_problem(S, Vec::Zero(2), I, Vec::Zero(2), I, I,
                                           Vec::Zero(2)),
                    FactoryError);
    // A=B=0 with b != 0: infeasible, KKT system inconsistent
    Vec b(2);
    b << 1, 1;
    CHECK_THROWS_AS(make_quadratic_problem(I, Vec::Zero(2), I, Vec::Zero(2),
                                           Mat::Zero(2, 2), Mat::Zero(2, 2), b),
                    FactoryError);
    CHECK_THROWS_AS(make_quadratic_problem(I, Vec::Zero(3), I, Vec::Zero(2), I, I,
                                           Vec::Zero(2)),
                    ContractError);
}

TEST_CASE("augmented lagrangian at a feasible point drops the penalty terms") {
    const ProblemInstance inst = p1();
    Vec lam(2);
    lam << 3.7, -1.2; // arbitrary multiplier
    const double lhs = augmented_lagrangian(inst.problem, inst.kkt.x, inst.kkt.y, lam);
    const double fg =
        inst.problem.f_val(inst.kkt.x) + inst.problem.g_val(inst.kkt.y);
    CHECK(lhs == doctest::Approx(fg).epsilon(1e-14));
}

TEST_CASE("augmented lagrangian of P1 at the origin with lam=0 is 1") {
    const ProblemInstance inst = p1();
    const double v = augmented_lagrangian(inst.problem, Vec::Zero(2), Vec::Zero(2),
                                          Vec::Zero(2));
    // 0 + 0 + 0 + ||b||^2/2 = 1
    CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("augmented lagrangian at the saddle matches the direct KKT solve value") {
    const ProblemInstance inst = p1();
    const double v = augmented_lagrangian(inst.problem, inst.kkt.x, inst.kkt.y,
                                          inst.kkt.lambda);
    // f(x*)+g(y*) recomputed from the oracle certificate
    const double expect = 0.5 * inst.kkt.x.squaredNorm() + 0.5 * inst.kkt.y.squaredNorm();
    CHECK(v == doctest::Approx(expect).epsilon(1e-14));
    CHECK(expect == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("augmented lagrangian rejects dimension mismatch") {
    const ProblemInstance inst = p1();
    CHECK_THROWS_AS(
        augmented_lagrangian(inst.problem, Vec::Zero(3), Vec::Zero(2), Vec::Zero(2)),
        ContractError);
    CHECK_THROWS_AS(
        augmented_lagrangian(inst.problem, Vec::Zero(2), Vec::Zero(2), Vec::Zero(1)),
        ContractError);
}

TEST_CASE("kkt residuals vanish at the certificate and equal ||b|| at the origin") {
    const ProblemInstance inst = p1();
    const Diagnostics at_star =
        kkt_residuals(inst.problem, inst.kkt.x, inst.kkt.y, inst.kkt.lambda);
    CHECK(at_star.stationarity_x <= 1e-12);
    CHECK(at_star.stationarity_y <= 1e-12);
    CHECK(at_star.primal_residual <= 1e-12);

    const Diagnostics at_zero =
        kkt_residuals(inst.problem, Vec::Zero(2), Vec::Zero(2), Vec::Zero(2));
    CHECK(at_zero.primal_residual == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("kkt residuals at random points match a term-by-term recomputation") {
    const ProblemInstance inst = p1();
    std::mt19937 rng(0x5EED);
    std::normal_distribution<double> dist(0.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x(2), y(2), lam(2);
        for (int i = 0; i < 2; ++i) {
            x[i] = dist(rng);
            y[i] = dist(rng);
            lam[i] = dist(rng);
        }
        const Diagnostics d = kkt_residuals(inst.problem, x, y, lam);
        // independent recomputation in long double, component by component
        long double sx = 0, sy = 0, pr = 0;
        for (int i = 0; i < 2; ++i) {
            // grad f = x, grad g = y, A = B = I for P1
            const long double rx = (long double)x[i] + (long double)lam[i];
            const long double ry = (long double)y[i] + (long double)lam[i];
            const long double rp =
                (long double)x[i] + (long double)y[i] - 1.0L;
            sx += rx * rx;
            sy += ry * ry;
            pr += rp * rp;
        }
        CHECK(d.stationarity_x ==
              doctest::Approx((double)std::sqrt(sx)).epsilon(1e-13));
        CHECK(d.stationarity_y ==
              doctest::Approx((double)std::sqrt(sy)).epsilon(1e-13));
        CHECK(d.primal_residual ==
              doctest::Approx((double)std::sqrt(pr)).epsilon(1e-13));
    }
}

TEST_CASE("gap and feasibility vanish at the saddle point") {
    const ProblemInstance inst = p1();
    const Diagnostics d =
        gap_and_feasibility(inst.problem, inst.kkt, inst.kkt.x, inst.kkt.y);
    CHECK(d.gap == 0.0);
    CHECK(d.feasibility <= 1e-12);
}

TEST_CASE("gap at the origin cross-checks against two lagrangian evaluations") {
    const ProblemInstance inst = p1();
    const Diagnostics d =
        gap_and_feasibility(inst.problem, inst.kkt, Vec::Zero(2), Vec::Zero(2));
    CHECK(d.feasibility == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    const double expect =
        augmented_lagrangian(inst.problem, Vec::Zero(2), Vec::Zero(2),
                             inst.kkt.lambda) -
        augmented_lagrangian(inst.problem, inst.kkt.x, inst.kkt.y, inst.kkt.lambda);
    CHECK(d.gap == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("gap dominates half the squared feasibility on random points") {
    const ProblemInstance inst = p1();
    std::mt19937 rng(0x5EED);
    std::normal_distribution<double> dist(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vec x(2), y(2);
        for (int i = 0; i < 2; ++i) {
            x[i] = dist(rng);
            y[i] = dist(rng);
        }
        const Diagnostics d = gap_and_feasibility(inst.problem, inst.kkt, x, y);
        CHECK(d.gap >= 0.5 * d.feasibility * d.feasibility - 1e-9);
        CHECK(d.gap >= 0.0);
    }
}

TEST_CASE("value oracles are midpoint convex along random probe pairs") {
    const ProblemInstance inst = p1();
    std::mt19937 rng(0x5EED);
    std::normal_distribution<double> dist(0.0, 3.0);
    Vec lam(2);
    lam << 0.3, -0.7;
    auto L = [&](const Vec& x, const Vec& y) {
        return augmented_lagrangian(inst.problem, x, y, lam);
    };
    for (int trial = 0; trial < 50; ++trial) {
        Vec x1(2), y1(2), x2(2), y2(2);
        for (int i = 0; i < 2; ++i) {
            x1[i] = dist(rng);
            y1[i] = dist(rng);
            x2[i] = dist(rng);
            y2[i] = dist(rng);
        }
        const double mid = L(0.5 * (x1 + x2), 0.5 * (y1 + y2));
        CHECK(mid <= 0.5 * (L(x1, y1) + L(x2, y2)) + 1e-9);
    }
}

TEST_CASE("gradient oracles of the built-in families pass finite differences") {
    std::mt19937 rng(0x5EED);
    CHECK(validate_gradients(p1().problem, rng));

    Mat P(2, 2), B(2, 2);
    P << 1, 0, 0, 2;
    B << 1, 1, 0, 1;
    Vec q(2), b(2);
    q << 1, 0;
    b << 1, 2;
    const ProblemInstance p2 = make_quadratic_problem(
        P, q, Mat::Identity(2, 2), Vec::Zero(2), Mat::Identity(2, 2), B, b);
    CHECK(validate_gradients(p2.problem, rng));
}

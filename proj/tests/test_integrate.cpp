#include <doctest.h>

#include <cmath>

#include "pdflow/integrate.hpp"

using namespace pdflow;

namespace {

ProblemInstance p1() {
    const Mat I = Mat::Identity(2, 2);
    Vec b(2);
    b << 1.0, 1.0;
    return make_quadratic_problem(I, Vec::Zero(2), I, Vec::Zero(2), I, I, b);
}

} // namespace

TEST_CASE("zero field keeps the state constant at every sample") {
    const Rhs rhs = [](double, const Vec& v) { return Vec(Vec::Zero(v.size())); };
    Vec init(3);
    init << 1.0, -2.0, 0.5;
    IntegratorConfig cfg;
    cfg.t_end = 10.0;
    cfg.spacing = IntegratorConfig::Spacing::Linear;
    cfg.samples = 50;
    const RawTrajectory out = integrate(rhs, 1.0, init, cfg);
    REQUIRE(out.termination.completed());
    REQUIRE(out.times.size() == 50);
    // dense-output weights leave a few ulps of noise at interior samples
    for (const Vec& y : out.states) CHECK((y - init).norm() <= 1e-14);
    CHECK(richardson_check(rhs, 1.0, init, cfg) <= 1e-14);
}

TEST_CASE("harmonic oscillator returns to its start after one period") {
    const Rhs rhs = [](double, const Vec& v) {
        Vec d(2);
        d << v[1], -v[0];
        return d;
    };
    Vec init(2);
    init << 1.0, 0.0;
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-10;
    cfg.abs_tol = 1e-12;
    cfg.t_end = 2.0 * M_PI;
    cfg.spacing = IntegratorConfig::Spacing::Linear;
    cfg.samples = 100;
    const RawTrajectory out = integrate(rhs, 0.0, init, cfg);
    REQUIRE(out.termination.completed());
    CHECK(std::abs(out.states.back()[0] - 1.0) <= 1e-8);
    CHECK(std::abs(out.states.back()[1]) <= 1e-8);
    // interior samples against the cosine/sine solution
    for (std::size_t i = 0; i < out.times.size(); ++i) {
        CHECK(out.states[i][0] ==
              doctest::Approx(std::cos(out.times[i])).epsilon(1e-6));
        CHECK(out.states[i][1] ==
              doctest::Approx(-std::sin(out.times[i])).epsilon(1e-6));
    }
    CHECK(richardson_check(rhs, 0.0, init, cfg) <= 1e-7);
}

TEST_CASE("linear sample grids are reproduced bitwise") {
    const Rhs rhs = [](double, const Vec& v) { return Vec(-v); };
    Vec init(1);
    init << 1.0;
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    cfg.spacing = IntegratorConfig::Spacing::Linear;
    cfg.samples = 37;
    const double t0 = 1.0;
    const RawTrajectory out = integrate(rhs, t0, init, cfg);
    REQUIRE(out.termination.completed());
    REQUIRE(out.times.size() == 37);
    const double spacing = (cfg.t_end - t0) / (cfg.samples - 1);
    for (int i = 0; i < 36; ++i) CHECK(out.times[i] == t0 + i * spacing);
    CHECK(out.times.back() == cfg.t_end);
}

TEST_CASE("finite-time blow-up is reported as a non-finite termination") {
    const Rhs rhs = [](double, const Vec& v) {
        Vec d(1);
        d << v[0] * v[0];
        return d;
    };
    Vec init(1);
    init << 10.0; // y' = y^2 escapes at t = 1.1
    IntegratorConfig cfg;
    cfg.t_end = 3.0;
    cfg.spacing = IntegratorConfig::Spacing::Linear;
    cfg.cap_step_by_time = false;
    const RawTrajectory out = integrate(rhs, 1.0, init, cfg);
    CHECK_FALSE(out.termination.completed());
}

TEST_CASE("invalid configurations are rejected up front") {
    IntegratorConfig cfg;
    cfg.t_end = 0.5;
    CHECK_THROWS_AS(cfg.require_valid(1.0), ContractError);
    cfg.t_end = 2.0;
    cfg.rel_tol = 0.0;
    CHECK_THROWS_AS(cfg.require_valid(1.0), ContractError);
    cfg.rel_tol = 1e-8;
    cfg.h_init = 10.0;
    CHECK_THROWS_AS(cfg.require_valid(1.0), ContractError);
}

TEST_CASE("primal-dual flow feasibility decays over the long run") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(4.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(0.6);
    const Rhs rhs = make_rhs(inst.problem, s, c, nullptr);
    const SystemState init = SystemState::zero(1.0, 2, 2, 2);
    IntegratorConfig cfg;
    cfg.t_end = 500.0;
    const RawTrajectory raw = integrate(rhs, 1.0, init.flatten(), cfg);
    REQUIRE(raw.termination.completed());
    const Trajectory traj = make_trajectory(inst.problem, inst.kkt, raw, cfg);

    double feas50 = -1.0, feas500 = -1.0;
    for (const auto& smp : traj.samples) {
        if (feas50 < 0.0 && smp.state.t >= 50.0) feas50 = smp.diag.feasibility;
        feas500 = smp.diag.feasibility;
    }
    CHECK(feas500 < feas50);
    // self-convergence: tighter tolerances barely move the trajectory
    CHECK(richardson_check(rhs, 1.0, init.flatten(), cfg) <= 1e-5);
}

TEST_CASE("adaptive and fixed-step integrations of the flow agree") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(4.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(0.6);
    const Rhs rhs = make_rhs(inst.problem, s, c, nullptr);
    const Vec init = SystemState::zero(1.0, 2, 2, 2).flatten();

    IntegratorConfig ad;
    ad.t_end = 20.0;
    ad.spacing = IntegratorConfig::Spacing::Linear;
    ad.samples = 100;
    IntegratorConfig fx = ad;
    fx.method = IntegratorConfig::Method::RK4Fixed;
    fx.h = 1e-3;

    const RawTrajectory a = integrate(rhs, 1.0, init, ad);
    const RawTrajectory f = integrate(rhs, 1.0, init, fx);
    REQUIRE(a.termination.completed());
    REQUIRE(f.termination.completed());
    REQUIRE(a.times.size() == f.times.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.times.size(); ++i)
        worst = std::max(worst, (a.states[i] - f.states[i]).norm());
    CHECK(worst <= 1e-5);
}

TEST_CASE("fixed-step integration converges at fourth order") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(4.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(0.6);
    const Rhs rhs = make_rhs(inst.problem, s, c, nullptr);
    const Vec init = SystemState::zero(1.0, 2, 2, 2).flatten();

    IntegratorConfig ref;
    ref.t_end = 10.0;
    ref.rel_tol = 1e-12;
    ref.abs_tol = 1e-14;
    ref.spacing = IntegratorConfig::Spacing::Linear;
    ref.samples = 2;
    const Vec truth = integrate(rhs, 1.0, init, ref).states.back();

    auto rk4_err = [&](double h) {
        IntegratorConfig fx = ref;
        fx.method = IntegratorConfig::Method::RK4Fixed;
        fx.h = h;
        return (integrate(rhs, 1.0, init, fx).states.back() - truth).norm();
    };
    const double e1 = rk4_err(0.02);
    const double e2 = rk4_err(0.01);
    CHECK(e1 / e2 >= 12.0);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "pdflow/dynamics.hpp"

using namespace pdflow;

namespace {

ProblemInstance p1() {
    const Mat I = Mat::Identity(2, 2);
    Vec b(2);
    b << 1.0, 1.0;
    return make_quadratic_problem(I, Vec::Zero(2), I, Vec::Zero(2), I, I, b);
}

double field_norm(const SystemState& d) {
    return std::sqrt(d.x.squaredNorm() + d.y.squaredNorm() + d.lam.squaredNorm() +
                     d.vx.squaredNorm() + d.vy.squaredNorm() + d.vlam.squaredNorm());
}

} // namespace

TEST_CASE("a resting KKT point is an equilibrium of the flow") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(2.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(2.0 / 3.0);
    SystemState st = SystemState::zero(3.0, 2, 2, 2);
    st.x = inst.kkt.x;
    st.y = inst.kkt.y;
    st.lam = inst.kkt.lambda;
    const SystemState d = vector_field(inst.problem, s, c, nullptr, st);
    CHECK(field_norm(d) <= 1e-12);
}

TEST_CASE("accelerations at the origin match the hand evaluation") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(2.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(2.0 / 3.0);
    const SystemState st = SystemState::zero(1.0, 2, 2, 2);
    const SystemState d = vector_field(inst.problem, s, c, nullptr, st);
    // grad f = 0, lam = 0, residual = -b, so vx' = -A^T(-b) = b, same for y,
    // and lam' row is A x + B y - b = -b.
    CHECK(d.vx(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.vx(1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.vy(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.vy(1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.vlam(0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(d.vlam(1) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(d.x.norm() == 0.0);
    CHECK(d.y.norm() == 0.0);
    CHECK(d.lam.norm() == 0.0);
}

TEST_CASE("perturbation shifts only the primal acceleration rows") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(2.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(2.0 / 3.0);
    const Perturbation pert = Perturbation::scalar_broadcast(
        [](double t) { return std::exp(-t); }, 2, 2);

    std::mt19937 rng(0x5EED);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        SystemState st = SystemState::zero(2.0 + trial, 2, 2, 2);
        for (int i = 0; i < 2; ++i) {
            st.x[i] = dist(rng);
            st.y[i] = dist(rng);
            st.lam[i] = dist(rng);
            st.vx[i] = dist(rng);
            st.vy[i] = dist(rng);
            st.vlam[i] = dist(rng);
        }
        const SystemState base = vector_field(inst.problem, s, c, nullptr, st);
        const SystemState forced = vector_field(inst.problem, s, c, &pert, st);
        const double e = std::exp(-st.t);
        // adding then subtracting the forcing term leaves rounding at ~1e-16
        CHECK((forced.vx - base.vx - e * Vec::Ones(2)).norm() <= 1e-13);
        CHECK((forced.vy - base.vy - e * Vec::Ones(2)).norm() <= 1e-13);
        CHECK((forced.vlam - base.vlam).norm() == 0.0);
        CHECK((forced.x - base.x).norm() == 0.0);
        CHECK((forced.lam - base.lam).norm() == 0.0);
    }
}

TEST_CASE("field is affine in multiplier and velocities for quadratic problems") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(2.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(2.0 / 3.0);
    std::mt19937 rng(0x5EED);
    std::normal_distribution<double> dist(0.0, 1.0);

    auto rand_state = [&](double t) {
        SystemState st = SystemState::zero(t, 2, 2, 2);
        for (int i = 0; i < 2; ++i) {
            st.x[i] = dist(rng);
            st.y[i] = dist(rng);
            st.lam[i] = dist(rng);
            st.vx[i] = dist(rng);
            st.vy[i] = dist(rng);
            st.vlam[i] = dist(rng);
        }
        return st;
    };
    for (int trial = 0; trial < 5; ++trial) {
        const double t = 3.0;
        SystemState a = rand_state(t), b = rand_state(t);
        // superposition in (lam, vx, vy, vlam) with the position blocks fixed
        SystemState mid = a;
        mid.lam = 0.5 * (a.lam + b.lam);
        mid.vx = 0.5 * (a.vx + b.vx);
        mid.vy = 0.5 * (a.vy + b.vy);
        mid.vlam = 0.5 * (a.vlam + b.vlam);
        SystemState b_pos = b;
        b_pos.x = a.x;
        b_pos.y = a.y;
        const SystemState da = vector_field(inst.problem, s, c, nullptr, a);
        const SystemState db = vector_field(inst.problem, s, c, nullptr, b_pos);
        const SystemState dm = vector_field(inst.problem, s, c, nullptr, mid);
        CHECK((dm.vx - 0.5 * (da.vx + db.vx)).norm() <= 1e-10);
        CHECK((dm.vy - 0.5 * (da.vy + db.vy)).norm() <= 1e-10);
        CHECK((dm.vlam - 0.5 * (da.vlam + db.vlam)).norm() <= 1e-10);
    }
}

TEST_CASE("flatten and unflatten round-trip the fixed layout") {
    SystemState st = SystemState::zero(5.0, 2, 3, 1);
    st.x << 1, 2;
    st.y << 3, 4, 5;
    st.lam << 6;
    st.vx << 7, 8;
    st.vy << 9, 10, 11;
    st.vlam << 12;
    const Vec v = st.flatten();
    for (int i = 0; i < 12; ++i) CHECK(v[i] == double(i + 1));
    const SystemState back = SystemState::unflatten(5.0, v, 2, 3, 1);
    CHECK((back.x - st.x).norm() == 0.0);
    CHECK((back.vy - st.vy).norm() == 0.0);
    CHECK(back.t == 5.0);
}

TEST_CASE("non-finite perturbation output is rejected") {
    const ProblemInstance inst = p1();
    const auto s = DampingSchedule::power_law(2.0, 1.0, 1.0);
    const auto c = CouplingRule::reciprocal(2.0 / 3.0);
    const Perturbation bad = Perturbation::scalar_broadcast(
        [](double) { return std::numeric_limits<double>::quiet_NaN(); }, 2, 2);
    const SystemState st = SystemState::zero(1.0, 2, 2, 2);
    CHECK_THROWS_AS(vector_field(inst.problem, s, c, &bad, st), NumericError);
}

TEST_CASE("null perturbation norm is exactly zero") {
    const Perturbation none = Perturbation::none(2, 2);
    CHECK(none.norm(17.0) == 0.0);
    const Perturbation p = Perturbation::scalar_broadcast(
        [](double) { return 0.5; }, 2, 2);
    CHECK(p.norm(1.0) == doctest::Approx(0.5 * 2.0).epsilon(1e-15));
}

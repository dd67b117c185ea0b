#include "ndlod/coeffs.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ndlod;

namespace {

double fd_derivative(const std::function<double(double)>& f, double t, double h = 1e-6)
{
    return (f(t + h) - f(t - h)) / (2.0 * h);
}

} // namespace

TEST_CASE("monoscale matrix values follow the sign pattern")
{
    const auto f = builtin_field("monoscale");
    const Mat2 a = f.A(0.25, 0.25);
    CHECK(a[0][0] == 2.0);
    CHECK(a[1][1] == 2.0);
    CHECK(a[0][1] == 1.0);
    CHECK(a[1][0] == 1.0);
    const Mat2 b = f.A(0.25, -0.25);
    CHECK(b[0][1] == -1.0);
    CHECK(b[1][0] == -1.0);
}

TEST_CASE("layered matrix at the period start")
{
    const auto f = builtin_field("layered");
    // pi x2 / eps = 0 mod pi: sin = 0, cos^2 = 1
    const Mat2 a = f.A(0.3, 0.0);
    CHECK(a[0][0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(a[0][1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(a[1][1] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("checkerboard equals monoscale composed with x/eps")
{
    const auto cb = builtin_field("checkerboard", 0.03125);
    const auto mono = builtin_field("monoscale");
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const double x = dist(rng), y = dist(rng);
        const Mat2 a = cb.A(x, y);
        const Mat2 b = mono.A(x / 0.03125, y / 0.03125);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(a[i][j] == b[i][j]);
    }
}

TEST_CASE("unknown names are rejected")
{
    CHECK_THROWS_AS(builtin_field("perlin"), std::invalid_argument);
    CHECK_THROWS_AS(builtin_rhs("zero"), std::invalid_argument);
}

TEST_CASE("exact solution vanishes on the boundary")
{
    const auto r = builtin_rhs("monoscale_exact");
    REQUIRE(r.exact.has_value());
    CHECK(r.exact->u(1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    for (double t : {-1.0, -0.4, 0.2, 1.0}) {
        CHECK(r.exact->u(1.0, t) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(r.exact->u(t, -1.0) == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("g' and g'' match central finite differences at t = 0.5")
{
    const auto r = builtin_rhs("monoscale_exact");
    // 1D factors probed through the 2D record on the line y = 0.5
    auto g = [](double t) { return t * (1.0 - std::exp(1.0 - std::fabs(t))); };
    const double g_half = g(0.5);

    auto u_line = [&](double t) { return r.exact->u(t, 0.5); };
    const double du_fd = fd_derivative(u_line, 0.5);
    const double du = r.exact->grad(0.5, 0.5)[0];
    CHECK(du == doctest::Approx(du_fd).epsilon(1e-6));
    CHECK(du / g_half ==
          doctest::Approx(1.0 - std::exp(0.5) + 0.5 * std::exp(0.5)).epsilon(1e-12));

    auto ux_line = [&](double t) { return r.exact->grad(t, 0.5)[0]; };
    const double d2u_fd = fd_derivative(ux_line, 0.5);
    const double d2u = r.exact->hess(0.5, 0.5)[0][0];
    CHECK(d2u == doctest::Approx(d2u_fd).epsilon(1e-6));
    CHECK(d2u / g_half == doctest::Approx(std::exp(0.5) * 1.5).epsilon(1e-12));
}

TEST_CASE("hessian record matches finite differences of u away from the axes")
{
    const auto r = builtin_rhs("monoscale_exact");
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(0.1, 0.9);
    for (int k = 0; k < 10; ++k) {
        const double x = dist(rng), y = -dist(rng);
        const double h = 1e-5;
        const auto& ex = *r.exact;
        const double uxx = (ex.u(x + h, y) - 2 * ex.u(x, y) + ex.u(x - h, y)) / (h * h);
        const double uyy = (ex.u(x, y + h) - 2 * ex.u(x, y) + ex.u(x, y - h)) / (h * h);
        const double uxy = (ex.u(x + h, y + h) - ex.u(x + h, y - h) - ex.u(x - h, y + h) +
                            ex.u(x - h, y - h)) /
                           (4 * h * h);
        CHECK(ex.hess(x, y)[0][0] == doctest::Approx(uxx).epsilon(1e-4));
        CHECK(ex.hess(x, y)[1][1] == doctest::Approx(uyy).epsilon(1e-4));
        CHECK(ex.hess(x, y)[0][1] == doctest::Approx(uxy).epsilon(1e-4));
    }
}

TEST_CASE("f is A : D2u for the manufactured solution")
{
    const auto r = builtin_rhs("monoscale_exact");
    const auto f = builtin_field("monoscale");
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> dist(-0.95, 0.95);
    for (int k = 0; k < 50; ++k) {
        const double x = dist(rng), y = dist(rng);
        const Mat2 a = f.A(x, y);
        const Mat2 h = r.exact->hess(x, y);
        const double want = a[0][0] * h[0][0] + 2 * a[0][1] * h[0][1] + a[1][1] * h[1][1];
        CHECK(r.f(x, y) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("multiscale rhs value at (0, 1)")
{
    const auto r = builtin_rhs("multiscale");
    CHECK(r.f(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cordes monoscale: delta = 3/5, zeta = (1, 3), gamma = 0.4")
{
    const auto f = builtin_field("monoscale");
    const auto rep = cordes_analyze(f);
    CHECK(rep.case_tag == CordesCase::C1);
    CHECK(rep.delta == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(rep.delta_sampled == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(rep.zeta1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.zeta2 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rep.lambda == 0.0);
    CHECK(rep.gamma(0.25, 0.25) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(rep.gamma(-0.3, 0.6) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(rep.gamma_min == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(rep.gamma_max == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("cordes layered: certified constants reported, samples verified")
{
    const auto f = builtin_field("layered");
    const auto rep = cordes_analyze(f);
    CHECK(rep.delta == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.zeta1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.zeta2 == doctest::Approx(4.0).epsilon(1e-12));
    // the sampled estimates are tighter than the certified bounds
    CHECK(rep.delta_sampled == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(rep.zeta1_sampled == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep.zeta2_sampled == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(rep.gamma(0.1, 0.0) > 0.0);
}

TEST_CASE("case C2 with hand-computed delta and gamma")
{
    CoefficientField f;
    f.name = "c2-toy";
    f.A = [](double, double) { return Mat2{{{1.0, 0.0}, {0.0, 1.0}}}; };
    f.b = [](double, double) { return Vec2{1.0, 0.0}; };
    f.c = [](double, double) { return 1.0; };
    const auto rep = cordes_analyze(f, {}, 1.0);
    CHECK(rep.case_tag == CordesCase::C2);
    // (tr A + c)^2 / (|A|^2 + |b|^2/2 + c^2) = 9 / 3.5
    CHECK(rep.delta == doctest::Approx(9.0 / 3.5 - 2.0).epsilon(1e-12));
    CHECK(rep.lambda == 1.0);
    CHECK(rep.gamma(0.0, 0.0) == doctest::Approx(3.0 / 3.5).epsilon(1e-12));
    CHECK_THROWS_AS(cordes_analyze(f), std::invalid_argument); // lambda required
}

TEST_CASE("C2 violation is reported")
{
    CoefficientField f;
    f.name = "c2-bad";
    f.A = [](double, double) { return Mat2{{{1.0, 0.0}, {0.0, 1.0}}}; };
    f.b = [](double, double) { return Vec2{10.0, 0.0}; };
    f.c = [](double, double) { return 0.0; };
    CHECK_THROWS_AS(cordes_analyze(f, {}, 1.0), std::runtime_error);
}

TEST_CASE("negative trace is reported")
{
    CoefficientField f;
    f.name = "indefinite";
    f.A = [](double, double) { return Mat2{{{-1.0, 0.0}, {0.0, -1.0}}}; };
    CHECK_THROWS_AS(cordes_analyze(f), std::runtime_error);
}

TEST_CASE("scaling A by s > 0 keeps delta and scales gamma by 1/s")
{
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (const char* name : {"monoscale", "layered"}) {
        const auto base = builtin_field(name);
        const double s = 2.75;
        CoefficientField scaled;
        scaled.name = std::string(name) + "-scaled";
        auto baseA = base.A;
        scaled.A = [baseA, s](double x, double y) {
            Mat2 a = baseA(x, y);
            for (auto& row : a)
                for (auto& v : row) v *= s;
            return a;
        };
        SamplerSpec small;
        small.grid_n = 64;
        const auto r0 = cordes_analyze(base, small);
        const auto r1 = cordes_analyze(scaled, small);
        CHECK(r1.delta_sampled == doctest::Approx(r0.delta_sampled).epsilon(1e-9));
        for (int k = 0; k < 100; ++k) {
            const double x = dist(rng), y = dist(rng);
            CHECK(r1.gamma(x, y) == doctest::Approx(r0.gamma(x, y) / s).epsilon(1e-12));
        }
    }
}

#include "ndlod/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ndlod;

namespace {

std::string slurp(const std::string& path)
{
    std::ifstream is(path);
    REQUIRE(is);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string tmp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("ell rule")
{
    CHECK(ell_rule(2) == 1);
    CHECK(ell_rule(4) == 2);
    CHECK(ell_rule(8) == 3);
    CHECK(ell_rule(16) == 4);
    CHECK(ell_rule(3) == 2);
}

TEST_CASE("eoc basics")
{
    CHECK(eoc({0.8, 0.2}, {0.5, 0.25})[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(eoc({1.0, 1.0}, {0.5, 0.25})[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(eoc({1.0, -1.0}, {0.5, 0.25}), std::invalid_argument);
    CHECK_THROWS_AS(eoc({1.0}, {0.5}), std::invalid_argument);
    CHECK_THROWS_AS(eoc({1.0, 0.5}, {0.5, 0.3}), std::invalid_argument);
}

TEST_CASE("eoc on the reference convergence data")
{
    const std::vector<double> errs = {0.875010776211538,    0.123939198807901,
                                      0.019160461308044,    0.00515147759317401,
                                      0.000719643048281913, 0.000127494348369801};
    const std::vector<double> hs = {0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625};
    const auto rates = eoc(errs, hs);
    const double want[5] = {2.819668, 2.693428, 1.895074, 2.839633, 2.496848};
    REQUIRE(rates.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(rates[k] == doctest::Approx(want[k]).epsilon(1e-5));
}

TEST_CASE("spec validation")
{
    StudySpec s;
    s.coarse_n = {2, 4};
    s.fine_n = 32;
    CHECK_NOTHROW(validate_spec(s));

    s.fine_n = 48; // 48/2 = 24, not a power of two
    CHECK_THROWS_AS(validate_spec(s), std::invalid_argument);

    s.fine_n = 256;
    s.field = "checkerboard";
    s.rhs = "multiscale";
    s.compare = CompareMode::FineReference;
    s.epsilon = 1.0 / 48.0; // not an integer multiple of the fine cell side
    CHECK_THROWS_AS(validate_spec(s), std::invalid_argument);
    s.epsilon = 1.0 / 32.0;
    CHECK_NOTHROW(validate_spec(s));

    s.field = "nope";
    CHECK_THROWS_AS(validate_spec(s), std::invalid_argument);
}

TEST_CASE("small monoscale study: dominance, CSV shape, determinism")
{
    StudySpec s;
    s.field = "monoscale";
    s.rhs = "monoscale_exact";
    s.coarse_n = {2, 4};
    s.fine_n = 32;
    s.record_timings = false;
    s.out = tmp_path("ndlod_study_a.csv");

    RunOptions opts;
    opts.threads = 1;
    const ErrorReport rep = run_convergence_study(s, opts);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].H == doctest::Approx(0.5));
    CHECK(rep.rows[1].H == doctest::Approx(0.25));
    for (const auto& r : rep.rows) {
        CHECK(r.lod.l2 < r.fem.l2);
        CHECK(r.lod.h1 < r.fem.h1);
        CHECK(r.lod.h2 < r.fem.h2);
        CHECK(r.seconds == 0.0);
    }
    CHECK(std::isnan(rep.rows[0].eoc_lod[0]));
    CHECK(rep.rows[1].eoc_lod[0] ==
          doctest::Approx(std::log2(rep.rows[0].lod.l2 / rep.rows[1].lod.l2)).epsilon(1e-12));

    const std::string a = slurp(s.out);
    CHECK(a.rfind("H,ell,lod_l2,lod_h1,lod_h2,fem_l2,fem_h1,fem_h2,"
                  "eoc_lod_l2,eoc_lod_h1,eoc_lod_h2,seconds\n",
                  0) == 0);
    CHECK(std::count(a.begin(), a.end(), '\n') == 3);

    // rerun with a different thread count: byte-identical CSV
    s.out = tmp_path("ndlod_study_b.csv");
    RunOptions opts4;
    opts4.threads = 4;
    run_convergence_study(s, opts4);
    const std::string b = slurp(s.out);
    CHECK(a == b);

    // companion gnuplot files, one per curve
    for (const char* name : {"lod_l2", "lod_h1", "lod_h2", "fem_l2", "fem_h1", "fem_h2"}) {
        const std::string dat = tmp_path(std::string("ndlod_study_b_") + name + ".dat");
        CHECK(std::filesystem::exists(dat));
        std::filesystem::remove(dat);
    }
    std::filesystem::remove(tmp_path("ndlod_study_a.csv"));
    std::filesystem::remove(tmp_path("ndlod_study_b.csv"));
    for (const char* name : {"lod_l2", "lod_h1", "lod_h2", "fem_l2", "fem_h1", "fem_h2"})
        std::filesystem::remove(tmp_path(std::string("ndlod_study_a_") + name + ".dat"));
}

TEST_CASE("FEM errors agree with an independent quadrature oracle")
{
    // independent path: locate the element of each sample point by grid
    // arithmetic and integrate with a privately tabulated rule
    const auto field = builtin_field("monoscale");
    const auto rhs = builtin_rhs("monoscale_exact");
    const auto rep = cordes_analyze(field);
    const int n = 8;
    auto mesh = uniform_mesh(n);
    const FineSolution sol = solve_fine(assemble(mesh, field, rep.gamma, rhs.f));
    const ErrorNorms e = error_norms(sol, *rhs.exact);

    const double pts[6][3] = {
        {0.445948490915965, 0.445948490915965, 0.223381589678011},
        {0.445948490915965, 0.108103018168070, 0.223381589678011},
        {0.108103018168070, 0.445948490915965, 0.223381589678011},
        {0.091576213509771, 0.091576213509771, 0.109951743655322},
        {0.091576213509771, 0.816847572980459, 0.109951743655322},
        {0.816847572980459, 0.091576213509771, 0.109951743655322},
    };
    const double h = 2.0 / n;
    double num = 0.0, den = 0.0;
    for (int cj = 0; cj < n; ++cj) {
        for (int ci = 0; ci < n; ++ci) {
            const double x0 = -1.0 + ci * h, y0 = -1.0 + cj * h;
            // two triangles per cell: (0,0),(h,0),(h,h) and (0,0),(h,h),(0,h)
            for (int half = 0; half < 2; ++half) {
                double px[3] = {x0, x0 + h, x0 + h}, py[3] = {y0, y0, y0 + h};
                if (half == 1) {
                    px[1] = x0 + h;
                    py[1] = y0 + h;
                    px[2] = x0;
                    py[2] = y0 + h;
                }
                const double area = 0.5 * h * h;
                auto uh = [&](double x, double y) {
                    // nodal interpolation via the structured grid
                    const int vi[3] = {cj * (n + 1) + ci, half == 0 ? cj * (n + 1) + ci + 1
                                                                    : (cj + 1) * (n + 1) + ci + 1,
                                       half == 0 ? (cj + 1) * (n + 1) + ci + 1 : (cj + 1) * (n + 1) + ci};
                    // barycentric coordinates on this triangle
                    const double det = (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0]);
                    const double l1 = ((x - px[0]) * (py[2] - py[0]) - (y - py[0]) * (px[2] - px[0])) / det;
                    const double l2 = ((y - py[0]) * (px[1] - px[0]) - (x - px[0]) * (py[1] - py[0])) / det;
                    return (1 - l1 - l2) * sol.u[vi[0]] + l1 * sol.u[vi[1]] + l2 * sol.u[vi[2]];
                };
                for (const auto& q : pts) {
                    const double l1 = q[0], l2 = q[1], w = q[2] * area;
                    const double x = (1 - l1 - l2) * px[0] + l1 * px[1] + l2 * px[2];
                    const double y = (1 - l1 - l2) * py[0] + l1 * py[1] + l2 * py[2];
                    const double d = uh(x, y) - rhs.exact->u(x, y);
                    num += w * d * d;
                    den += w * rhs.exact->u(x, y) * rhs.exact->u(x, y);
                }
            }
        }
    }
    CHECK(std::sqrt(num / den) == doctest::Approx(e.l2).epsilon(1e-8));
}

TEST_CASE("localization study smoke: decay and ideal floor")
{
    LocalizationSpec s;
    s.coarse_n = 4;
    s.fine_n = 32;
    s.ells = {0, 1, 2};
    s.record_timings = false;
    RunOptions opts;
    opts.threads = 1;
    const LocalizationReport rep = run_localization_study(s, opts);
    REQUIRE(rep.rows.size() == 3);
    // near-monotone decay of the error toward the ideal floor
    for (size_t k = 1; k < rep.rows.size(); ++k)
        CHECK(rep.rows[k].vs_reference.h1 <= rep.rows[k - 1].vs_reference.h1 * 1.05);
    // large ell reproduces the full-domain correctors exactly
    LocalizationSpec s2 = s;
    s2.ells = {8};
    const LocalizationReport rep2 = run_localization_study(s2, opts);
    CHECK(rep2.rows[0].basis_dist < 1e-9);
    CHECK(rep2.rows[0].sol_dist < 1e-9);
}

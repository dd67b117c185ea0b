// nondivlod command line: Cordes reports, the mixed FEM baseline, single
// LOD runs and full convergence/localization studies.
#include "ndlod/cli_config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace {

using namespace ndlod;

std::string default_cache_dir(bool no_cache)
{
    if (no_cache) return "";
    if (const char* env = std::getenv("NONDIV_LOD_CACHE_DIR"); env && *env) return env;
    return ".lodcache";
}

void print_cordes(const CoefficientField& field, const CordesReport& rep)
{
    std::printf("field: %s\n", field.name.c_str());
    if (field.epsilon > 0.0) std::printf("epsilon = %.9g\n", field.epsilon);
    std::printf("case: %s\n", rep.case_tag == CordesCase::C1 ? "C1" : "C2");
    std::printf("delta = %.9g\n", rep.delta);
    std::printf("lambda = %.9g\n", rep.lambda);
    std::printf("zeta1 = %.9g\n", rep.zeta1);
    std::printf("zeta2 = %.9g\n", rep.zeta2);
    std::printf("delta_sampled = %.9g\n", rep.delta_sampled);
    std::printf("zeta1_sampled = %.9g\n", rep.zeta1_sampled);
    std::printf("zeta2_sampled = %.9g\n", rep.zeta2_sampled);
    std::printf("worst_ratio = %.9g\n", rep.worst_ratio);
    std::printf("gamma_range = [%.9g, %.9g]\n", rep.gamma_min, rep.gamma_max);
}

void print_rows(const ErrorReport& rep)
{
    std::printf("%-12s %-4s %-12s %-12s %-12s %-12s %-12s %-12s\n", "H", "ell", "lod_l2", "lod_h1",
                "lod_h2", "fem_l2", "fem_h1", "fem_h2");
    for (const auto& r : rep.rows)
        std::printf("%-12.6g %-4d %-12.6g %-12.6g %-12.6g %-12.6g %-12.6g %-12.6g\n", r.H, r.ell,
                    r.lod.l2, r.lod.h1, r.lod.h2, r.fem.l2, r.fem.h1, r.fem.h2);
}

StudySpec preset(const std::string& name, bool full_scale)
{
    StudySpec s;
    if (name == "monoscale") {
        s.field = "monoscale";
        s.rhs = "monoscale_exact";
        s.compare = CompareMode::Exact;
        s.coarse_n = full_scale ? std::vector<int>{2, 4, 8, 16, 32, 64} : std::vector<int>{2, 4, 8, 16};
        s.fine_n = full_scale ? 512 : 256;
    } else if (name == "checkerboard") {
        s.field = "checkerboard";
        s.rhs = "multiscale";
        s.compare = CompareMode::FineReference;
        s.coarse_n = full_scale ? std::vector<int>{2, 4, 8, 16, 32, 64} : std::vector<int>{2, 4, 8, 16};
        s.fine_n = full_scale ? 1024 : 256;
        s.epsilon = full_scale ? std::ldexp(1.0, -7) : std::ldexp(1.0, -5);
    } else if (name == "layered") {
        s.field = "layered";
        s.rhs = "multiscale";
        s.compare = CompareMode::FineReference;
        s.coarse_n = full_scale ? std::vector<int>{2, 4, 8, 16, 32, 64} : std::vector<int>{2, 4, 8, 16};
        s.fine_n = full_scale ? 512 : 256;
        s.epsilon = full_scale ? std::ldexp(1.0, -6) : std::ldexp(1.0, -5);
    } else {
        throw std::invalid_argument("unknown study '" + name + "' (monoscale, checkerboard, layered, "
                                    "localization, or a config file path)");
    }
    s.out = name + ".csv";
    return s;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"nondivlod: multiscale solver for nondivergence-form elliptic PDEs"};
    app.require_subcommand(1);

    int threads = 0;
    bool no_cache = false;
    app.add_option("--threads", threads, "corrector task pool size (default: all cores)");
    app.add_flag("--no-cache", no_cache, "disable the corrector basis cache");

    // cordes
    auto* sc_cordes = app.add_subcommand("cordes", "print the Cordes report of a coefficient field");
    std::string cordes_field;
    double cordes_eps = 0.0, cordes_lambda = 0.0;
    sc_cordes->add_option("field", cordes_field, "monoscale | checkerboard | layered")->required();
    sc_cordes->add_option("--epsilon", cordes_eps, "override the oscillation period");
    sc_cordes->add_option("--lambda", cordes_lambda, "lambda for case C2 fields");

    // shared study-ish options
    std::string field = "monoscale", rhs, out, compare_str, coarse_list, ell_list, epsilon_str;
    int fine_n = 0;
    bool full_scale = false;

    auto add_common = [&](CLI::App* sc, bool with_full) {
        sc->add_option("--field", field, "coefficient field");
        sc->add_option("--rhs", rhs, "right-hand side");
        sc->add_option("--coarse", coarse_list, "coarse cells-per-side list, e.g. 2,4,8,16");
        sc->add_option("--fine", fine_n, "fine cells per side");
        sc->add_option("--ell", ell_list, "localization radii ('auto' or list)");
        sc->add_option("--epsilon", epsilon_str, "oscillation period (p/q, 2^-k or decimal)");
        sc->add_option("--compare", compare_str, "exact | fine-reference");
        sc->add_option("--out", out, "output CSV path");
        if (with_full) sc->add_flag("--full-scale", full_scale, "run the paper-exact configuration");
    };

    auto* sc_fem = app.add_subcommand("fem", "run the mixed FEM baseline only");
    add_common(sc_fem, false);
    auto* sc_lod = app.add_subcommand("lod", "run one (H, ell) LOD pipeline");
    add_common(sc_lod, false);
    auto* sc_study = app.add_subcommand("study", "run a convergence or localization study");
    std::string study_name;
    sc_study->add_option("name", study_name, "monoscale | checkerboard | layered | localization | config path")
        ->required();
    add_common(sc_study, true);

    // global flags may follow the subcommand
    for (auto* sc : {sc_cordes, sc_fem, sc_lod, sc_study}) sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    RunOptions opts;
    opts.threads = threads;
    opts.cache_dir = default_cache_dir(no_cache);

    auto apply_overrides = [&](StudySpec& s) {
        if (sc_study->count("--field")) s.field = field;
        if (!rhs.empty()) s.rhs = rhs;
        if (!coarse_list.empty()) s.coarse_n = parse_int_list(coarse_list);
        if (fine_n > 0) s.fine_n = fine_n;
        if (!ell_list.empty()) s.ell = ell_list == "auto" ? std::vector<int>{} : parse_int_list(ell_list);
        if (!epsilon_str.empty()) s.epsilon = parse_epsilon(epsilon_str);
        if (!compare_str.empty()) {
            if (compare_str == "exact")
                s.compare = CompareMode::Exact;
            else if (compare_str == "fine-reference")
                s.compare = CompareMode::FineReference;
            else
                throw std::invalid_argument("--compare must be 'exact' or 'fine-reference'");
        }
        if (!out.empty()) s.out = out;
    };

    try {
        if (sc_cordes->parsed()) {
            const CoefficientField f = builtin_field(cordes_field, cordes_eps);
            print_cordes(f, cordes_analyze(f, {}, cordes_lambda));
            return 0;
        }

        if (sc_fem->parsed() || sc_lod->parsed()) {
            StudySpec s;
            s.field = field;
            s.rhs = !rhs.empty() ? rhs : (field == "monoscale" ? "monoscale_exact" : "multiscale");
            s.compare = field == "monoscale" ? CompareMode::Exact : CompareMode::FineReference;
            s.coarse_n = coarse_list.empty() ? std::vector<int>{8} : parse_int_list(coarse_list);
            s.fine_n = fine_n > 0 ? fine_n : 256;
            s.out = out;
            if (!epsilon_str.empty()) s.epsilon = parse_epsilon(epsilon_str);
            if (!ell_list.empty() && ell_list != "auto") s.ell = parse_int_list(ell_list);
            if (!compare_str.empty()) s.compare = compare_str == "exact" ? CompareMode::Exact
                                                                         : CompareMode::FineReference;
            if (sc_fem->parsed()) {
                // baseline only: coarse solves against the exact solution or
                // one fine reference; reported through the study table with
                // the LOD columns left empty
                validate_spec(s);
                const CoefficientField f = builtin_field(s.field, s.epsilon);
                const Rhs r = builtin_rhs(s.rhs);
                const CordesReport cordes = cordes_analyze(f);
                FineSolution ref;
                MeshPtr fine;
                if (s.compare == CompareMode::FineReference) {
                    fine = uniform_mesh(s.fine_n);
                    ref = solve_fine(assemble(fine, f, cordes.gamma, r.f));
                }
                std::printf("%-12s %-12s %-12s %-12s\n", "H", "fem_l2", "fem_h1", "fem_h2");
                for (int n : s.coarse_n) {
                    MeshPtr coarse = uniform_mesh(n);
                    FineSolution fem = solve_fine(assemble(coarse, f, cordes.gamma, r.f));
                    ErrorNorms e;
                    if (s.compare == CompareMode::Exact) {
                        e = error_norms(fem, *r.exact);
                    } else {
                        // prolongation needs a nested fine mesh
                        MeshPtr nested = coarse;
                        while (nested->n < s.fine_n) nested = refine(nested, 1);
                        FineSolution nref = solve_fine(assemble(nested, f, cordes.gamma, r.f));
                        e = error_norms(fem, nref);
                    }
                    std::printf("%-12.6g %-12.6g %-12.6g %-12.6g\n", 1.0 / n, e.l2, e.h1, e.h2);
                }
                return 0;
            }
            ErrorReport rep = run_convergence_study(s, opts);
            print_rows(rep);
            return 0;
        }

        // study
        if (study_name == "localization") {
            LocalizationSpec ls;
            if (!field.empty() && sc_study->count("--field")) ls.field = field;
            if (!rhs.empty()) ls.rhs = rhs;
            if (!coarse_list.empty()) ls.coarse_n = parse_int_list(coarse_list).at(0);
            if (fine_n > 0) ls.fine_n = fine_n;
            if (!ell_list.empty() && ell_list != "auto") ls.ells = parse_int_list(ell_list);
            if (!epsilon_str.empty()) ls.epsilon = parse_epsilon(epsilon_str);
            ls.out = out.empty() ? "localization.csv" : out;
            LocalizationReport rep = run_localization_study(ls, opts);
            std::printf("%-4s %-12s %-12s %-12s %-12s %-12s\n", "ell", "l2", "h1", "h2", "basis_dist",
                        "sol_dist");
            for (const auto& r : rep.rows)
                std::printf("%-4d %-12.6g %-12.6g %-12.6g %-12.6g %-12.6g\n", r.ell, r.vs_reference.l2,
                            r.vs_reference.h1, r.vs_reference.h2, r.basis_dist, r.sol_dist);
            std::printf("ideal floor: l2=%.6g h1=%.6g h2=%.6g\n", rep.ideal_vs_reference.l2,
                        rep.ideal_vs_reference.h1, rep.ideal_vs_reference.h2);
            std::printf("fitted_h1_slope = %.6g per ell step\n", rep.fitted_h1_slope);
            return 0;
        }

        StudySpec s;
        if (std::filesystem::exists(study_name) &&
            (study_name.find('/') != std::string::npos || study_name.find('.') != std::string::npos)) {
            s = parse_config(study_name);
        } else {
            s = preset(study_name, full_scale);
        }
        apply_overrides(s);
        validate_spec(s);
        ErrorReport rep = run_convergence_study(s, opts);
        print_rows(rep);
        if (!s.out.empty()) std::printf("wrote %s\n", s.out.c_str());
        return 0;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 2;
    }
}

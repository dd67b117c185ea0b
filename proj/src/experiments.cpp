#include "ndlod/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>

namespace ndlod {

namespace {

double now_seconds()
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

bool is_pow2_multiple(int fine, int coarse)
{
    if (fine % coarse != 0) return false;
    int r = fine / coarse;
    while (r % 2 == 0) r /= 2;
    return r == 1;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

std::string cache_key(const std::string& field, double eps, const std::string& rhs, int coarse_n,
                      int fine_n, int ell)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", eps);
    return "field=" + field + ";eps=" + buf + ";rhs=" + rhs + ";coarse=" + std::to_string(coarse_n) +
           ";fine=" + std::to_string(fine_n) + ";ell=" + std::to_string(ell);
}

CorrectorBasis basis_cached(int ell, const MixedSystem& sys, const QoiSet& qois,
                            const RunOptions& opts, const LodOptions& lopts, const std::string& key)
{
    if (!opts.cache_dir.empty()) {
        if (auto b = load_basis(opts.cache_dir, key, qois.coarse, qois.fine)) return std::move(*b);
    }
    CorrectorBasis b = compute_basis(ell, sys, qois, lopts);
    if (!opts.cache_dir.empty()) save_basis(b, opts.cache_dir, key);
    return b;
}

// Does any QoI patch at this (coarse, ell) reach the full-domain path?
bool any_full_patch(const Mesh2D& coarse, int ell, double frac)
{
    const int nt = coarse.num_triangles();
    for (int e = 0; e < coarse.num_edges(); ++e) {
        std::vector<int> seed = {coarse.edges[e].tri[0]};
        if (coarse.edges[e].tri[1] >= 0) seed.push_back(coarse.edges[e].tri[1]);
        if (static_cast<double>(patch(coarse, seed, ell).size()) >= frac * nt) return true;
    }
    return false;
}

} // namespace

int ell_rule(int coarse_n)
{
    if (coarse_n < 1) throw std::invalid_argument("ell_rule: coarse_n must be >= 1");
    return static_cast<int>(std::ceil(std::log2(static_cast<double>(coarse_n)) - 1e-12));
}

void validate_spec(const StudySpec& spec)
{
    if (spec.coarse_n.empty()) throw std::invalid_argument("study: empty coarse size list");
    for (int n : spec.coarse_n) {
        if (n < 2) throw std::invalid_argument("study: coarse_n must be >= 2");
        if (!is_pow2_multiple(spec.fine_n, n) || spec.fine_n < 2 * n)
            throw std::invalid_argument("study: fine_n = " + std::to_string(spec.fine_n) +
                                        " does not dyadically refine coarse_n = " + std::to_string(n));
    }
    if (!spec.ell.empty() && spec.ell.size() != spec.coarse_n.size())
        throw std::invalid_argument("study: ell list length must match coarse_n list");
    const CoefficientField field = builtin_field(spec.field, spec.epsilon); // rejects unknown names
    builtin_rhs(spec.rhs);
    if (field.epsilon > 0.0) {
        const double cells = field.epsilon * spec.fine_n / 2.0; // fine cell side is 2/fine_n
        if (std::fabs(cells - std::round(cells)) > 1e-9 || cells < 1.0 - 1e-9)
            throw std::invalid_argument("study: oscillation period epsilon must be an integer "
                                        "multiple of the fine cell side");
    }
    if (spec.compare == CompareMode::Exact && !builtin_rhs(spec.rhs).exact)
        throw std::invalid_argument("study: compare=exact needs an rhs with an exact solution");
}

ErrorReport run_convergence_study(const StudySpec& spec, const RunOptions& opts)
{
    validate_spec(spec);
    ErrorReport report;
    report.spec = spec;

    const CoefficientField field = builtin_field(spec.field, spec.epsilon);
    const Rhs rhs = builtin_rhs(spec.rhs);
    const CordesReport cordes = cordes_analyze(field);

    std::vector<int> ns = spec.coarse_n;
    std::sort(ns.begin(), ns.end()); // rows computed fine-to-coarse mesh chain order

    // one refinement chain from the coarsest study mesh down to the fine
    // mesh; every study size must appear on it so the fine system and the
    // reference solve are shared
    std::vector<MeshPtr> chain;
    chain.push_back(uniform_mesh(ns.front()));
    while (chain.back()->n < spec.fine_n) chain.push_back(refine(chain.back(), 1));
    auto mesh_of = [&](int n) -> MeshPtr {
        for (const auto& m : chain)
            if (m->n == n) return m;
        throw std::invalid_argument("study: coarse size " + std::to_string(n) +
                                    " is not on the refinement chain of " + std::to_string(ns.front()));
    };
    const MeshPtr fine = chain.back();

    const MixedSystem fine_sys = assemble(fine, field, cordes.gamma, rhs.f);

    LodOptions lopts;
    lopts.threads = opts.threads;

    // one factorization of the fine operator serves the full-domain
    // corrector groups of every H and the reference solve
    std::optional<Factorization> global_fact;
    bool needs_global = false;
    for (int n : ns)
        needs_global = needs_global ||
                       any_full_patch(*mesh_of(n),
                                      spec.ell.empty()
                                          ? ell_rule(n)
                                          : spec.ell[std::find(spec.coarse_n.begin(), spec.coarse_n.end(), n) -
                                                     spec.coarse_n.begin()],
                                      lopts.full_domain_fraction);
    if (needs_global) {
        global_fact.emplace(fine_sys.matrix);
        lopts.global_factorization = &*global_fact;
    }

    FineSolution reference;
    if (spec.compare == CompareMode::FineReference) {
        if (global_fact) {
            std::vector<double> x = global_fact->solve(fine_sys.load);
            reference = solution_from_dofs(fine, fine_sys.dofs, x);
            reference.residual = relative_residual(fine_sys.matrix, x, fine_sys.load);
        } else {
            reference = solve_fine(fine_sys);
        }
    }

    for (size_t k = 0; k < ns.size(); ++k) {
        const int n = ns[k];
        const double t0 = now_seconds();
        const MeshPtr coarse = mesh_of(n);
        const int ell = spec.ell.empty() ? ell_rule(n)
                                         : spec.ell[std::find(spec.coarse_n.begin(), spec.coarse_n.end(), n) -
                                                    spec.coarse_n.begin()];

        StudyRow row;
        row.H = 1.0 / n;
        row.ell = ell;

        const MixedSystem coarse_sys = assemble(coarse, field, cordes.gamma, rhs.f);
        const FineSolution fem = solve_fine(coarse_sys);
        row.fem = spec.compare == CompareMode::Exact ? error_norms(fem, *rhs.exact)
                                                     : error_norms(fem, reference);

        const QoiSet qois = build_qois(coarse, fine, fine_sys.dofs);
        const CorrectorBasis basis = basis_cached(
            ell, fine_sys, qois, opts, lopts,
            cache_key(spec.field, field.epsilon, spec.rhs, n, spec.fine_n, ell));
        report.max_constraint_residual =
            std::max(report.max_constraint_residual, basis.max_constraint_residual);
        const LodSolution lod = solve_lod(basis, fine_sys);
        row.lod = spec.compare == CompareMode::Exact ? error_norms(lod.reconstruction, *rhs.exact)
                                                     : error_norms(lod.reconstruction, reference);

        row.seconds = spec.record_timings ? now_seconds() - t0 : 0.0;
        report.rows.push_back(row);
    }

    // rows sorted by decreasing H
    std::sort(report.rows.begin(), report.rows.end(),
              [](const StudyRow& a, const StudyRow& b) { return a.H > b.H; });
    for (size_t k = 0; k < report.rows.size(); ++k) {
        StudyRow& r = report.rows[k];
        if (k == 0) {
            r.eoc_lod[0] = r.eoc_lod[1] = r.eoc_lod[2] = std::nan("");
        } else {
            const StudyRow& p = report.rows[k - 1];
            const double step = std::log2(p.H / r.H);
            r.eoc_lod[0] = std::log2(p.lod.l2 / r.lod.l2) / step;
            r.eoc_lod[1] = std::log2(p.lod.h1 / r.lod.h1) / step;
            r.eoc_lod[2] = std::log2(p.lod.h2 / r.lod.h2) / step;
        }
    }

    if (!spec.out.empty()) {
        write_csv(report, spec.out);
        std::string stem = spec.out;
        if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
        write_dat_files(report, stem);
    }
    return report;
}

LocalizationReport run_localization_study(const LocalizationSpec& spec, const RunOptions& opts)
{
    LocalizationReport report;
    report.spec = spec;
    if (!std::is_sorted(spec.ells.begin(), spec.ells.end()))
        throw std::invalid_argument("localization study: ell list must be increasing");

    const CoefficientField field = builtin_field(spec.field, spec.epsilon);
    const Rhs rhs = builtin_rhs(spec.rhs);
    const CordesReport cordes = cordes_analyze(field);

    std::vector<MeshPtr> chain;
    chain.push_back(uniform_mesh(spec.coarse_n));
    while (chain.back()->n < spec.fine_n) chain.push_back(refine(chain.back(), 1));
    const MeshPtr coarse = chain.front(), fine = chain.back();
    if (fine->n != spec.fine_n)
        throw std::invalid_argument("localization study: fine_n must dyadically refine coarse_n");

    const MixedSystem fine_sys = assemble(fine, field, cordes.gamma, rhs.f);
    const QoiSet qois = build_qois(coarse, fine, fine_sys.dofs);
    LodOptions lopts;
    lopts.threads = opts.threads;
    const Factorization global_fact(fine_sys.matrix);
    lopts.global_factorization = &global_fact;

    FineSolution reference;
    {
        std::vector<double> x = global_fact.solve(fine_sys.load);
        reference = solution_from_dofs(fine, fine_sys.dofs, x);
        reference.residual = relative_residual(fine_sys.matrix, x, fine_sys.load);
    }

    const CorrectorBasis ideal = basis_cached(
        kFullDomain, fine_sys, qois, opts, lopts,
        cache_key(spec.field, field.epsilon, spec.rhs, spec.coarse_n, spec.fine_n, -1));
    report.max_constraint_residual = ideal.max_constraint_residual;
    const LodSolution ideal_sol = solve_lod(ideal, fine_sys);
    report.ideal_vs_reference = error_norms(ideal_sol.reconstruction, reference);
    const std::vector<double> ideal_dofs = dof_vector(fine_sys.dofs, ideal_sol.reconstruction);

    auto norm2 = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    const int nd = fine_sys.dofs.total();

    for (int ell : spec.ells) {
        const double t0 = now_seconds();
        LocalizationRow row;
        row.ell = ell;
        const CorrectorBasis basis = basis_cached(
            ell, fine_sys, qois, opts, lopts,
            cache_key(spec.field, field.epsilon, spec.rhs, spec.coarse_n, spec.fine_n, ell));
        report.max_constraint_residual =
            std::max(report.max_constraint_residual, basis.max_constraint_residual);
        for (int i = 0; i < qois.size(); ++i) {
            std::vector<double> d = basis.items[i].trial.dense(nd);
            const std::vector<double> gi = ideal.items[i].trial.dense(nd);
            for (int k = 0; k < nd; ++k) d[k] -= gi[k];
            const double denom = norm2(gi);
            row.basis_dist = std::max(row.basis_dist, norm2(d) / (denom > 0 ? denom : 1.0));
        }
        const LodSolution sol = solve_lod(basis, fine_sys);
        row.vs_reference = error_norms(sol.reconstruction, reference);
        std::vector<double> d = dof_vector(fine_sys.dofs, sol.reconstruction);
        for (int k = 0; k < nd; ++k) d[k] -= ideal_dofs[k];
        row.sol_dist = norm2(d) / norm2(ideal_dofs);
        row.seconds = spec.record_timings ? now_seconds() - t0 : 0.0;
        report.rows.push_back(row);
    }

    // least-squares slope of ln(h1 error) over the rows before the floor
    const double floor = report.ideal_vs_reference.h1;
    std::vector<double> xs, ys;
    for (const auto& r : report.rows)
        if (r.vs_reference.h1 > 2.0 * floor) {
            xs.push_back(r.ell);
            ys.push_back(std::log(r.vs_reference.h1));
        }
    if (xs.size() < 2 && report.rows.size() >= 2) {
        xs = {static_cast<double>(report.rows[0].ell), static_cast<double>(report.rows[1].ell)};
        ys = {std::log(report.rows[0].vs_reference.h1), std::log(report.rows[1].vs_reference.h1)};
    }
    if (xs.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            sx += xs[k];
            sy += ys[k];
            sxx += xs[k] * xs[k];
            sxy += xs[k] * ys[k];
        }
        const double n = static_cast<double>(xs.size());
        report.fitted_h1_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }

    if (!spec.out.empty()) write_csv(report, spec.out);
    return report;
}

std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& Hs)
{
    if (errors.size() != Hs.size() || errors.size() < 2)
        throw std::invalid_argument("eoc: need equal-length lists with at least two entries");
    for (size_t k = 0; k + 1 < Hs.size(); ++k)
        if (std::fabs(Hs[k] / Hs[k + 1] - 2.0) > 1e-9)
            throw std::invalid_argument("eoc: H must decrease by factor 2");
    std::vector<double> rates;
    for (size_t k = 0; k + 1 < errors.size(); ++k) {
        if (errors[k] <= 0.0 || errors[k + 1] <= 0.0)
            throw std::invalid_argument("eoc: errors must be positive");
        rates.push_back(std::log2(errors[k] / errors[k + 1]));
    }
    return rates;
}

void write_csv(const ErrorReport& report, const std::string& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    os << "H,ell,lod_l2,lod_h1,lod_h2,fem_l2,fem_h1,fem_h2,"
          "eoc_lod_l2,eoc_lod_h1,eoc_lod_h2,seconds\n";
    for (const auto& r : report.rows) {
        os << fmt(r.H) << "," << r.ell << "," << fmt(r.lod.l2) << "," << fmt(r.lod.h1) << ","
           << fmt(r.lod.h2) << "," << fmt(r.fem.l2) << "," << fmt(r.fem.h1) << "," << fmt(r.fem.h2)
           << "," << fmt(r.eoc_lod[0]) << "," << fmt(r.eoc_lod[1]) << "," << fmt(r.eoc_lod[2]) << ","
           << fmt(r.seconds) << "\n";
    }
}

void write_dat_files(const ErrorReport& report, const std::string& stem)
{
    const char* names[6] = {"lod_l2", "lod_h1", "lod_h2", "fem_l2", "fem_h1", "fem_h2"};
    for (int c = 0; c < 6; ++c) {
        std::ofstream os(stem + "_" + names[c] + ".dat", std::ios::trunc);
        if (!os) throw std::runtime_error("write_dat_files: cannot open output");
        for (const auto& r : report.rows) {
            const ErrorNorms& e = c < 3 ? r.lod : r.fem;
            const double v = c % 3 == 0 ? e.l2 : (c % 3 == 1 ? e.h1 : e.h2);
            os << fmt(r.H) << " " << fmt(v) << "\n";
        }
    }
}

void write_csv(const LocalizationReport& report, const std::string& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    os << "ell,l2,h1,h2,basis_dist,sol_dist,seconds\n";
    for (const auto& r : report.rows) {
        os << r.ell << "," << fmt(r.vs_reference.l2) << "," << fmt(r.vs_reference.h1) << ","
           << fmt(r.vs_reference.h2) << "," << fmt(r.basis_dist) << "," << fmt(r.sol_dist) << ","
           << fmt(r.seconds) << "\n";
    }
}

} // namespace ndlod

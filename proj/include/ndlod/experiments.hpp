// Convergence and localization studies: the three built-in coefficient
// studies, experimental orders of convergence, and result tables.
#pragma once

#include "ndlod/lod.hpp"

#include <string>
#include <vector>

namespace ndlod {

enum class CompareMode { Exact, FineReference };

struct StudySpec {
    std::string field = "monoscale";
    std::string rhs = "monoscale_exact";
    std::vector<int> coarse_n = {2, 4, 8, 16}; // H = 1/n
    int fine_n = 256;
    std::vector<int> ell;     // empty: ell = ceil(|log2 H|) per coarse size
    double epsilon = 0.0;     // 0: field default
    CompareMode compare = CompareMode::Exact;
    std::string out;          // CSV path; empty writes nothing
    bool record_timings = true; // false pins the seconds column to zero
};

/// Default localization radius for H = 1/n.
int ell_rule(int coarse_n);

/// Enforces the documented invariants (dyadic nesting, oscillation period
/// resolved by the fine mesh, known names); throws on violation.
void validate_spec(const StudySpec& spec);

struct RunOptions {
    int threads = 0;
    std::string cache_dir; // empty disables the corrector cache
};

struct StudyRow {
    double H = 0.0;
    int ell = 0;
    ErrorNorms lod, fem;
    double eoc_lod[3] = {0, 0, 0}; // vs previous row; nan on the first
    double seconds = 0.0;
};

struct ErrorReport {
    StudySpec spec;
    std::vector<StudyRow> rows; // sorted by decreasing H
    double max_constraint_residual = 0.0; // across all corrector bases
};

/// Per coarse size: mixed FEM baseline on the coarse mesh and the LOD
/// pipeline at ell(H); errors vs the exact solution or vs one fine
/// reference solve shared by all rows.
ErrorReport run_convergence_study(const StudySpec& spec, const RunOptions& opts = {});

struct LocalizationSpec {
    std::string field = "monoscale";
    std::string rhs = "monoscale_exact";
    double epsilon = 0.0;
    int coarse_n = 8;
    int fine_n = 128;
    std::vector<int> ells = {0, 1, 2, 3, 4, 5, 6};
    std::string out;
    bool record_timings = true;
};

struct LocalizationRow {
    int ell = 0;
    ErrorNorms vs_reference;
    double basis_dist = 0.0; // max_i relative dof-norm distance to the full-domain corrector
    double sol_dist = 0.0;   // relative dof-norm distance to the full-domain LOD solution
    double seconds = 0.0;
};

struct LocalizationReport {
    LocalizationSpec spec;
    std::vector<LocalizationRow> rows;
    ErrorNorms ideal_vs_reference; // full-domain correctors (the error floor)
    double fitted_h1_slope = 0.0;  // least-squares slope of ln(h1 error) per ell step, before the floor
    double max_constraint_residual = 0.0;
};

LocalizationReport run_localization_study(const LocalizationSpec& spec, const RunOptions& opts = {});

/// rate_k = log2(e_{k-1}/e_k); requires equal lengths >= 2, positive
/// errors, H halving step by step.
std::vector<double> eoc(const std::vector<double>& errors, const std::vector<double>& Hs);

void write_csv(const ErrorReport& report, const std::string& path);
void write_dat_files(const ErrorReport& report, const std::string& stem);
void write_csv(const LocalizationReport& report, const std::string& path);

} // namespace ndlod

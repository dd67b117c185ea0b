// Localized trial/test corrector bases from constrained saddle-point
// problems on element patches, the coarse Petrov-Galerkin system, and the
// reconstructed fine-scale approximation.
#pragma once

#include "ndlod/mixed_fem.hpp"
#include "ndlod/qoi.hpp"
#include "ndlod/sparse.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ndlod {

/// Pass as ell to remove localization (patches grow to the full domain).
inline constexpr int kFullDomain = std::numeric_limits<int>::max();

enum class CorrectorSide { Trial, Test };

/// Sparse fine-dof vector; dofs outside the patch image never appear.
struct PatchVector {
    std::vector<int> dof;
    std::vector<double> val;

    std::vector<double> dense(int n) const;
};

struct CorrectorPair {
    std::vector<int> patch_elems; // N^ell(Omega_i) on the coarse mesh
    std::vector<int> mult_qoi;    // constraints active on the patch
    PatchVector trial, test;
    std::vector<double> trial_mult, test_mult; // multipliers, aligned with mult_qoi
};

struct CorrectorBasis {
    int ell = 0;
    MeshPtr coarse, fine;
    std::vector<CorrectorPair> items; // one per QoI
    double max_constraint_residual = 0.0;
};

struct LodSolution {
    std::vector<double> coeffs; // coarse coefficients c
    FineSolution reconstruction;
    int ell = 0;
    double pg_residual = 0.0; // max | test_j . (M x - b) |
};

struct LodOptions {
    int threads = 0;             // 0 = hardware concurrency
    // Patches covering at least this fraction of the coarse mesh are
    // widened to the full domain so they can share one factorization.
    // Enlarged patches only reduce the localization error.
    double full_domain_fraction = 0.8;
    // Optional externally owned factorization of the fine operator, reused
    // by full-domain corrector groups (and shareable across ell values).
    const Factorization* global_factorization = nullptr;
};

/// One localized corrector: restricts the fine operator to the dofs
/// interior to the fine image of N^ell(Omega_i) (boundary conditions of
/// the domain apply on its boundary part), adds the QoI constraints whose
/// entities lie in the closed patch, and solves the bordered system with
/// constraint right-hand side e_i. The test side solves against the
/// transposed operator.
CorrectorPair corrector(int i, int ell, CorrectorSide side, const MixedSystem& fine_system,
                        const QoiSet& qois, const LodOptions& opts = {});

/// All correctors, both sides. Solves are grouped by patch set so each
/// distinct patch is factorized once; groups run in parallel and results
/// are merged in index order.
CorrectorBasis compute_basis(int ell, const MixedSystem& fine_system, const QoiSet& qois,
                             const LodOptions& opts = {});

/// Coarse matrix K = V^T M U via triple_product, coarse load g = V^T b,
/// dense solve of K c = g, reconstruction sum_i c_i u_i.
LodSolution solve_lod(const CorrectorBasis& basis, const MixedSystem& fine_system);

/// Basis cache: the key string is stored in the file and verified on load.
bool save_basis(const CorrectorBasis& basis, const std::string& dir, const std::string& key);
std::optional<CorrectorBasis> load_basis(const std::string& dir, const std::string& key,
                                         MeshPtr coarse, MeshPtr fine);

} // namespace ndlod

// Coefficient fields A (plus optional b, c), the built-in examples with
// their right-hand sides, and the Cordes condition analyzer.
#pragma once

#include "ndlod/mesh.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>

namespace ndlod {

using Mat2 = std::array<std::array<double, 2>, 2>;
using Vec2 = std::array<double, 2>;

/// Constants a field is known to satisfy (from its construction), as
/// opposed to values estimated by sampling. The analyzer verifies them.
struct CertifiedConstants {
    double delta = 0.0;
    double zeta1 = 0.0;
    double zeta2 = 0.0;
};

struct CoefficientField {
    std::string name;
    std::function<Mat2(double, double)> A;
    std::function<Vec2(double, double)> b; // zero in all built-ins
    std::function<double(double, double)> c;
    double epsilon = 0.0; // oscillation period in domain units, 0 if none
    std::optional<CertifiedConstants> certified;

    bool has_lower_order_terms() const;
};

/// Exact solution record: u and its derivatives as point evaluators.
struct ExactSolution {
    std::function<double(double, double)> u;
    std::function<Vec2(double, double)> grad;
    std::function<Mat2(double, double)> hess;
};

struct Rhs {
    std::string name;
    std::function<double(double, double)> f;
    std::optional<ExactSolution> exact;
};

/// Built-in coefficients: "monoscale" (sign-pattern off-diagonal),
/// "checkerboard" (monoscale at scale eps, default 2^-7) and "layered"
/// (continuous x2-periodic field, default eps 2^-6). Pass epsilon > 0 to
/// override the default period for desk-scale runs.
CoefficientField builtin_field(const std::string& name, double epsilon = 0.0);

/// Built-in right-hand sides: "monoscale_exact" (manufactured from the
/// monoscale field, carries the exact solution) and "multiscale".
Rhs builtin_rhs(const std::string& name);

struct SamplerSpec {
    int grid_n = 512;          // tensor grid of (grid_n+1)^2 points on the closed square
    MeshPtr mesh;              // optional: adds the mesh's element midpoints
};

enum class CordesCase { C1, C2 };

struct CordesReport {
    CordesCase case_tag = CordesCase::C1;
    // headline constants: certified values when the field carries them,
    // sampled estimates otherwise
    double delta = 0.0;
    double zeta1 = 0.0, zeta2 = 0.0;
    // sampled estimates (delta_sampled is the largest delta valid on the
    // sample set, i.e. min of the Cordes ratio minus n-1 resp. n)
    double delta_sampled = 0.0;
    double zeta1_sampled = 0.0, zeta2_sampled = 0.0;
    double lambda = 0.0;       // 0 in case C1
    double worst_ratio = 0.0;  // max over samples of the Cordes quotient
    std::function<double(double, double)> gamma;
    double gamma_min = 0.0, gamma_max = 0.0;
};

/// Verifies the Cordes condition by dense sampling and builds the
/// renormalization gamma. Case C2 requires lambda > 0. Fails if the
/// sampled delta is <= 0, if tr A <= 0 anywhere, or if certified
/// constants are contradicted by the samples.
CordesReport cordes_analyze(const CoefficientField& field, const SamplerSpec& sampler = {},
                            double lambda = 0.0);

} // namespace ndlod

// Quantities of interest on the coarse mesh, realized as linear
// functionals over fine-mesh mixed dofs: edge-averaged normal fluxes of
// the gradient variable and nodal values at interior coarse vertices.
#pragma once

#include "ndlod/mesh.hpp"
#include "ndlod/mixed_fem.hpp"

#include <vector>

namespace ndlod {

enum class QoiKind { Edge, Vertex };

struct Qoi {
    QoiKind kind;
    int entity = -1;            // coarse edge index, or coarse vertex index
    std::vector<int> dof;       // sparse coefficient row over fine dofs
    std::vector<double> weight;
    std::vector<int> support;   // coarse elements touching the entity (Omega_i), sorted
};

/// Ordered functional set: the N1 coarse edges first, then the N2 interior
/// coarse vertices, matching the labeling q_1..q_N.
struct QoiSet {
    MeshPtr coarse, fine;
    int n_edge = 0, n_vertex = 0;
    std::vector<Qoi> items;

    int size() const { return static_cast<int>(items.size()); }
};

/// Edge functionals integrate the piecewise-affine q . nu exactly along
/// each coarse edge (trapezoidal weights over the fine vertices on it,
/// divided by the edge length); vertex functionals take the nodal u value.
/// Requires fine to be a refinement of coarse.
QoiSet build_qois(MeshPtr coarse, MeshPtr fine, const DofMap& fine_dofs);

/// Applies all N functionals to a fine dof vector.
std::vector<double> apply_qois(const QoiSet& set, const std::vector<double>& x);

} // namespace ndlod

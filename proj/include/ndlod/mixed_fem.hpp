// Stabilized mixed non-symmetric FEM: unknown pair (u, q) of continuous
// piecewise affines, u vanishing on the boundary, q with vanishing
// tangential boundary trace. The gradient variable q carries the
// derivative information of the solution.
#pragma once

#include "ndlod/coeffs.hpp"
#include "ndlod/mesh.hpp"
#include "ndlod/sparse.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ndlod {

/// Degrees of freedom on the square: interior vertices carry one u-dof and
/// two q-dofs; boundary non-corner vertices keep only the normal q
/// component; corners carry nothing. Global ordering is [u-block | q-block].
struct DofMap {
    int nu = 0, nq = 0;
    std::vector<int> u_of_vertex;                  // -1 when eliminated
    std::vector<std::array<int, 2>> q_of_vertex;   // local q indices, -1 when eliminated

    int total() const { return nu + nq; }
    int u(int v) const { return u_of_vertex[v]; }
    int q(int v, int c) const
    {
        const int d = q_of_vertex[v][c];
        return d < 0 ? -1 : nu + d;
    }
};

DofMap build_dofmap(const Mesh2D& mesh);

/// Assembled block operator over [u | q] with the load vector. The u-rows
/// hold (grad u, grad z) - (q, grad z); the q-rows hold
/// a~(q,v) + 1/2 (rot q, rot v) and never touch u-columns.
struct MixedSystem {
    MeshPtr mesh;
    DofMap dofs;
    SparseMatrix matrix;
    std::vector<double> load;
    std::string quadrature = "edge-midpoint-3";
};

/// Element-wise assembly with coefficient products A(x) gamma(x) and loads
/// f(x) gamma(x) integrated by the 3-point edge-midpoint rule; boundary
/// conditions are imposed by dof elimination. Rejects fields with
/// lower-order terms and meshes without interior vertices.
MixedSystem assemble(MeshPtr mesh, const CoefficientField& field,
                     const std::function<double(double, double)>& gamma,
                     const std::function<double(double, double)>& f);

/// Nodal representation of a mixed solution; eliminated dofs are zero.
struct FineSolution {
    MeshPtr mesh;
    std::vector<double> u;       // per vertex
    std::vector<double> qx, qy;  // per vertex
    double residual = 0.0;       // relative residual of the assembled system
};

/// Factors the q-block, solves for q, then solves the u-block Poisson-type
/// system. Singular blocks are reported with context.
FineSolution solve_fine(const MixedSystem& system);

std::vector<double> dof_vector(const DofMap& dofs, const FineSolution& sol);
FineSolution solution_from_dofs(MeshPtr mesh, const DofMap& dofs, const std::vector<double>& x);

struct ErrorNorms {
    double l2 = 0.0; // relative L2 error of u
    double h1 = 0.0; // relative L2 error of the gradient variable q
    double h2 = 0.0; // relative broken H1 error of q (D_NC q)
};

ErrorNorms error_norms(const FineSolution& sol, const ExactSolution& exact);

/// Reference may live on the same mesh or on a refinement of sol's mesh;
/// sol is prolonged before comparing. Incompatible meshes are rejected.
ErrorNorms error_norms(const FineSolution& sol, const FineSolution& reference);

/// P1 prolongation of a solution onto a refinement of its mesh.
FineSolution prolong_solution(const FineSolution& sol, MeshPtr finer);

} // namespace ndlod

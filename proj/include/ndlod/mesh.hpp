// Structured triangulations of the square (-1,1)^2 with red-refinement
// hierarchies and element-patch queries.
#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

namespace ndlod {

struct Edge {
    int v0 = -1, v1 = -1;      // v0 < v1 in lexicographic coordinate order
    double nx = 0.0, ny = 0.0; // unit normal, 90deg CCW rotation of the tangent v0->v1
    double length = 0.0;
    int tri[2] = {-1, -1};     // incident triangles, tri[1] = -1 on the boundary
};

/// Triangulation of (-1,1)^2. Immutable after construction; refined meshes
/// keep a shared_ptr chain to their ancestors so coarse entities can be
/// traced into fine ones without geometric tolerances.
struct Mesh2D {
    int n = 0; // cells per side; the harness reports H = 1/n
    std::vector<double> vx, vy;
    std::vector<std::array<int, 3>> tris; // counterclockwise vertex triples
    std::vector<std::array<int, 3>> tri_edges; // edge k sits between vertices k, k+1
    std::vector<Edge> edges;
    std::vector<bool> vertex_boundary;
    std::vector<double> tri_area; // H_T = sqrt(tri_area[t])

    // vertex -> incident triangles, CSR layout
    std::vector<int> v2t_ptr, v2t;

    // refinement links (empty on root meshes)
    std::shared_ptr<const Mesh2D> parent;
    std::vector<int> tri_parent;           // child tri -> parent tri
    std::vector<int> vertex_parent_vertex; // child vtx -> parent vtx, or -1
    std::vector<int> vertex_parent_edge;   // child vtx -> parent edge it bisects, or -1
    std::vector<std::array<int, 2>> parent_edge_children; // parent edge -> child edges
    std::vector<int> parent_edge_midpoint;                // parent edge -> child vtx

    int num_vertices() const { return static_cast<int>(vx.size()); }
    int num_triangles() const { return static_cast<int>(tris.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }
    int num_interior_vertices() const;

    std::array<double, 2> vertex(int v) const { return {vx[v], vy[v]}; }
    std::array<double, 2> centroid(int t) const;
};

using MeshPtr = std::shared_ptr<const Mesh2D>;

/// n x n grid of square cells, each split along the lower-left to
/// upper-right diagonal. Rejects n = 0.
MeshPtr uniform_mesh(int n);

/// k rounds of uniform red refinement (each triangle into 4 by edge
/// midpoints). k = 0 returns the input mesh.
MeshPtr refine(MeshPtr mesh, int k);

/// N^ell(seed): ell rounds of vertex-adjacency growth of a triangle set.
/// N^0(seed) = seed. Result is sorted. Invalid seed indices are rejected.
std::vector<int> patch(const Mesh2D& mesh, const std::vector<int>& seed, int ell);

/// Walks the parent chain from `fine` up to `coarse`; throws if `fine` is
/// not a refinement of `coarse`. Returns the chain coarse-first.
std::vector<const Mesh2D*> refinement_chain(const Mesh2D& coarse, const Mesh2D& fine);

/// fine tri -> index of the coarse ancestor triangle.
std::vector<int> ancestor_triangles(const Mesh2D& coarse, const Mesh2D& fine);

/// Fine vertices lying on a coarse edge, ordered from edge.v0 to edge.v1.
/// Purely topological (descends the edge-bisection records).
std::vector<int> fine_vertices_on_coarse_edge(const Mesh2D& coarse, const Mesh2D& fine,
                                              int coarse_edge);

/// Index of a coarse vertex in the fine mesh (refinement preserves indices;
/// this validates the nesting).
int coarse_vertex_in_fine(const Mesh2D& coarse, const Mesh2D& fine, int v);

/// Line-oriented text dump: VERTICES / TRIANGLES / EDGES sections.
void dump_mesh(const Mesh2D& mesh, std::ostream& out);

} // namespace ndlod

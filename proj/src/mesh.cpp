#include "ndlod/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace ndlod {

namespace {

// Finalizes the derived tables of a mesh whose vertices and triangles are
// already set: edges with canonical orientation, incidences, areas, flags.
void build_topology(Mesh2D& m)
{
    const int nt = m.num_triangles();
    const int nv = m.num_vertices();

    m.tri_edges.assign(nt, {-1, -1, -1});
    m.edges.clear();

    std::unordered_map<std::int64_t, int> edge_id;
    edge_id.reserve(static_cast<size_t>(nt) * 2);
    auto key = [nv](int a, int b) {
        if (a > b) std::swap(a, b);
        return static_cast<std::int64_t>(a) * nv + b;
    };

    for (int t = 0; t < nt; ++t) {
        for (int k = 0; k < 3; ++k) {
            int a = m.tris[t][k];
            int b = m.tris[t][(k + 1) % 3];
            auto [it, inserted] = edge_id.try_emplace(key(a, b), m.num_edges());
            if (inserted) {
                Edge e;
                // lexicographically smaller endpoint first (by coordinates)
                if (std::pair(m.vx[b], m.vy[b]) < std::pair(m.vx[a], m.vy[a])) std::swap(a, b);
                e.v0 = a;
                e.v1 = b;
                const double tx = m.vx[b] - m.vx[a];
                const double ty = m.vy[b] - m.vy[a];
                e.length = std::hypot(tx, ty);
                e.nx = -ty / e.length;
                e.ny = tx / e.length;
                e.tri[0] = t;
                m.edges.push_back(e);
            } else {
                m.edges[it->second].tri[1] = t;
            }
            m.tri_edges[t][k] = it->second;
        }
    }

    m.vertex_boundary.assign(nv, false);
    for (const Edge& e : m.edges) {
        if (e.tri[1] < 0) {
            m.vertex_boundary[e.v0] = true;
            m.vertex_boundary[e.v1] = true;
        }
    }

    m.tri_area.resize(nt);
    for (int t = 0; t < nt; ++t) {
        const auto& tr = m.tris[t];
        const double ax = m.vx[tr[1]] - m.vx[tr[0]], ay = m.vy[tr[1]] - m.vy[tr[0]];
        const double bx = m.vx[tr[2]] - m.vx[tr[0]], by = m.vy[tr[2]] - m.vy[tr[0]];
        const double det = ax * by - ay * bx;
        if (det <= 0.0) throw std::runtime_error("mesh: triangle " + std::to_string(t) + " not counterclockwise");
        m.tri_area[t] = 0.5 * det;
    }

    m.v2t_ptr.assign(nv + 1, 0);
    for (const auto& tr : m.tris)
        for (int v : tr) ++m.v2t_ptr[v + 1];
    for (int v = 0; v < nv; ++v) m.v2t_ptr[v + 1] += m.v2t_ptr[v];
    m.v2t.resize(m.v2t_ptr[nv]);
    std::vector<int> fill(m.v2t_ptr.begin(), m.v2t_ptr.end() - 1);
    for (int t = 0; t < nt; ++t)
        for (int v : m.tris[t]) m.v2t[fill[v]++] = t;
}

MeshPtr refine_once(const MeshPtr& coarse)
{
    const Mesh2D& c = *coarse;
    auto fine = std::make_shared<Mesh2D>();
    Mesh2D& f = *fine;
    f.n = 2 * c.n;
    f.parent = coarse;

    const int nvc = c.num_vertices();
    const int nec = c.num_edges();
    f.vx = c.vx;
    f.vy = c.vy;
    f.vertex_parent_vertex.resize(nvc);
    for (int v = 0; v < nvc; ++v) f.vertex_parent_vertex[v] = v;
    f.vertex_parent_edge.assign(nvc, -1);
    f.parent_edge_midpoint.resize(nec);
    for (int e = 0; e < nec; ++e) {
        const Edge& ed = c.edges[e];
        f.parent_edge_midpoint[e] = f.num_vertices();
        f.vx.push_back(0.5 * (c.vx[ed.v0] + c.vx[ed.v1]));
        f.vy.push_back(0.5 * (c.vy[ed.v0] + c.vy[ed.v1]));
        f.vertex_parent_vertex.push_back(-1);
        f.vertex_parent_edge.push_back(e);
    }

    f.tris.reserve(static_cast<size_t>(c.num_triangles()) * 4);
    f.tri_parent.reserve(f.tris.capacity());
    for (int t = 0; t < c.num_triangles(); ++t) {
        const auto& tr = c.tris[t];
        const int m01 = f.parent_edge_midpoint[c.tri_edges[t][0]];
        const int m12 = f.parent_edge_midpoint[c.tri_edges[t][1]];
        const int m20 = f.parent_edge_midpoint[c.tri_edges[t][2]];
        f.tris.push_back({tr[0], m01, m20});
        f.tris.push_back({m01, tr[1], m12});
        f.tris.push_back({m20, m12, tr[2]});
        f.tris.push_back({m01, m12, m20});
        for (int k = 0; k < 4; ++k) f.tri_parent.push_back(t);
    }

    build_topology(f);

    // child edges of each parent edge, ordered v0-side first
    f.parent_edge_children.assign(nec, {-1, -1});
    std::unordered_map<std::int64_t, int> edge_of;
    edge_of.reserve(f.edges.size());
    const int nvf = f.num_vertices();
    auto key = [nvf](int a, int b) {
        if (a > b) std::swap(a, b);
        return static_cast<std::int64_t>(a) * nvf + b;
    };
    for (int e = 0; e < f.num_edges(); ++e) edge_of[key(f.edges[e].v0, f.edges[e].v1)] = e;
    for (int e = 0; e < nec; ++e) {
        const Edge& ed = c.edges[e];
        const int mid = f.parent_edge_midpoint[e];
        f.parent_edge_children[e] = {edge_of.at(key(ed.v0, mid)), edge_of.at(key(mid, ed.v1))};
    }
    return fine;
}

} // namespace

int Mesh2D::num_interior_vertices() const
{
    int k = 0;
    for (bool b : vertex_boundary)
        if (!b) ++k;
    return k;
}

std::array<double, 2> Mesh2D::centroid(int t) const
{
    const auto& tr = tris[t];
    return {(vx[tr[0]] + vx[tr[1]] + vx[tr[2]]) / 3.0, (vy[tr[0]] + vy[tr[1]] + vy[tr[2]]) / 3.0};
}

MeshPtr uniform_mesh(int n)
{
    if (n < 1) throw std::invalid_argument("uniform_mesh: n must be >= 1");
    auto mesh = std::make_shared<Mesh2D>();
    Mesh2D& m = *mesh;
    m.n = n;
    const int nv = n + 1;
    m.vx.resize(static_cast<size_t>(nv) * nv);
    m.vy.resize(m.vx.size());
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nv; ++i) {
            m.vx[static_cast<size_t>(j) * nv + i] = -1.0 + 2.0 * i / n;
            m.vy[static_cast<size_t>(j) * nv + i] = -1.0 + 2.0 * j / n;
        }
    }
    m.tris.reserve(static_cast<size_t>(n) * n * 2);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int v00 = j * nv + i;
            const int v10 = j * nv + i + 1;
            const int v01 = (j + 1) * nv + i;
            const int v11 = (j + 1) * nv + i + 1;
            m.tris.push_back({v00, v10, v11}); // below the diagonal
            m.tris.push_back({v00, v11, v01}); // above
        }
    }
    build_topology(m);
    return mesh;
}

MeshPtr refine(MeshPtr mesh, int k)
{
    if (!mesh) throw std::invalid_argument("refine: null mesh");
    if (k < 0) throw std::invalid_argument("refine: k must be >= 0");
    for (int i = 0; i < k; ++i) mesh = refine_once(mesh);
    return mesh;
}

std::vector<int> patch(const Mesh2D& mesh, const std::vector<int>& seed, int ell)
{
    if (seed.empty()) throw std::invalid_argument("patch: empty seed");
    const int nt = mesh.num_triangles();
    std::vector<char> in(nt, 0);
    std::vector<int> cur;
    cur.reserve(seed.size());
    for (int t : seed) {
        if (t < 0 || t >= nt) throw std::invalid_argument("patch: invalid triangle index");
        if (!in[t]) {
            in[t] = 1;
            cur.push_back(t);
        }
    }
    std::vector<int> frontier = cur;
    for (int round = 0; round < ell && !frontier.empty(); ++round) {
        std::vector<int> next;
        for (int t : frontier) {
            for (int v : mesh.tris[t]) {
                for (int p = mesh.v2t_ptr[v]; p < mesh.v2t_ptr[v + 1]; ++p) {
                    const int u = mesh.v2t[p];
                    if (!in[u]) {
                        in[u] = 1;
                        cur.push_back(u);
                        next.push_back(u);
                    }
                }
            }
        }
        frontier = std::move(next);
    }
    std::sort(cur.begin(), cur.end());
    return cur;
}

std::vector<const Mesh2D*> refinement_chain(const Mesh2D& coarse, const Mesh2D& fine)
{
    std::vector<const Mesh2D*> chain;
    const Mesh2D* m = &fine;
    while (m != nullptr) {
        chain.push_back(m);
        if (m == &coarse) break;
        m = m->parent.get();
    }
    if (chain.empty() || chain.back() != &coarse)
        throw std::invalid_argument("refinement_chain: fine mesh is not a refinement of coarse mesh");
    std::reverse(chain.begin(), chain.end());
    return chain;
}

std::vector<int> ancestor_triangles(const Mesh2D& coarse, const Mesh2D& fine)
{
    auto chain = refinement_chain(coarse, fine);
    std::vector<int> anc(fine.num_triangles());
    for (int t = 0; t < fine.num_triangles(); ++t) anc[t] = t;
    for (size_t level = chain.size(); level-- > 1;) {
        const Mesh2D* m = chain[level];
        for (auto& a : anc) a = m->tri_parent[a];
    }
    return anc;
}

std::vector<int> fine_vertices_on_coarse_edge(const Mesh2D& coarse, const Mesh2D& fine,
                                              int coarse_edge)
{
    auto chain = refinement_chain(coarse, fine);
    // descend the edge through each refinement level, keeping v0->v1 order
    std::vector<int> verts = {coarse.edges[coarse_edge].v0, coarse.edges[coarse_edge].v1};
    std::vector<int> segs = {coarse_edge}; // edges of chain[level] covering the coarse edge
    for (size_t level = 1; level < chain.size(); ++level) {
        const Mesh2D* m = chain[level];
        std::vector<int> nverts, nsegs;
        nverts.reserve(verts.size() * 2);
        nsegs.reserve(segs.size() * 2);
        for (size_t s = 0; s < segs.size(); ++s) {
            nverts.push_back(verts[s]);
            nverts.push_back(m->parent_edge_midpoint[segs[s]]);
            const auto& ch = m->parent_edge_children[segs[s]];
            // ch[0] touches the parent's v0; orient to our traversal direction
            const int pa = chain[level - 1]->edges[segs[s]].v0;
            if (verts[s] == pa) {
                nsegs.push_back(ch[0]);
                nsegs.push_back(ch[1]);
            } else {
                nsegs.push_back(ch[1]);
                nsegs.push_back(ch[0]);
            }
        }
        nverts.push_back(verts.back());
        verts = std::move(nverts);
        segs = std::move(nsegs);
    }
    return verts;
}

int coarse_vertex_in_fine(const Mesh2D& coarse, const Mesh2D& fine, int v)
{
    refinement_chain(coarse, fine); // validates nesting
    // refinement keeps ancestor vertex indices
    if (v < 0 || v >= coarse.num_vertices() || fine.vx[v] != coarse.vx[v] || fine.vy[v] != coarse.vy[v])
        throw std::invalid_argument("coarse_vertex_in_fine: bad vertex");
    return v;
}

void dump_mesh(const Mesh2D& mesh, std::ostream& out)
{
    out << "VERTICES " << mesh.num_vertices() << "\n";
    out.precision(17);
    for (int v = 0; v < mesh.num_vertices(); ++v)
        out << v << " " << mesh.vx[v] << " " << mesh.vy[v] << "\n";
    out << "TRIANGLES " << mesh.num_triangles() << "\n";
    for (int t = 0; t < mesh.num_triangles(); ++t)
        out << t << " " << mesh.tris[t][0] << " " << mesh.tris[t][1] << " " << mesh.tris[t][2] << "\n";
    out << "EDGES " << mesh.num_edges() << "\n";
    for (int e = 0; e < mesh.num_edges(); ++e)
        out << e << " " << mesh.edges[e].v0 << " " << mesh.edges[e].v1 << " "
            << (mesh.edges[e].tri[1] < 0 ? 1 : 0) << "\n";
}

} // namespace ndlod

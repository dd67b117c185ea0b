#include "ndlod/qoi.hpp"

#include <stdexcept>

namespace ndlod {

QoiSet build_qois(MeshPtr coarse, MeshPtr fine, const DofMap& fine_dofs)
{
    refinement_chain(*coarse, *fine); // rejects non-nested pairs

    QoiSet set;
    set.coarse = coarse;
    set.fine = fine;
    const Mesh2D& c = *coarse;

    for (int e = 0; e < c.num_edges(); ++e) {
        const Edge& ed = c.edges[e];
        Qoi q;
        q.kind = QoiKind::Edge;
        q.entity = e;
        q.support = {ed.tri[0]};
        if (ed.tri[1] >= 0) q.support.push_back(ed.tri[1]);
        std::sort(q.support.begin(), q.support.end());

        const std::vector<int> verts = fine_vertices_on_coarse_edge(c, *fine, e);
        const int m = static_cast<int>(verts.size()) - 1; // segments, uniform length
        for (int k = 0; k <= m; ++k) {
            const double w = (k == 0 || k == m ? 0.5 : 1.0) / m;
            for (int comp = 0; comp < 2; ++comp) {
                const double nu = comp == 0 ? ed.nx : ed.ny;
                const int d = fine_dofs.q(verts[k], comp);
                // eliminated dofs are identically zero on the discrete space
                if (d >= 0 && nu != 0.0) {
                    q.dof.push_back(d);
                    q.weight.push_back(w * nu);
                }
            }
        }
        set.items.push_back(std::move(q));
        ++set.n_edge;
    }

    for (int v = 0; v < c.num_vertices(); ++v) {
        if (c.vertex_boundary[v]) continue;
        Qoi q;
        q.kind = QoiKind::Vertex;
        q.entity = v;
        for (int p = c.v2t_ptr[v]; p < c.v2t_ptr[v + 1]; ++p) q.support.push_back(c.v2t[p]);
        std::sort(q.support.begin(), q.support.end());
        const int fv = coarse_vertex_in_fine(c, *fine, v);
        const int d = fine_dofs.u(fv);
        if (d < 0) throw std::logic_error("build_qois: interior coarse vertex has no fine u-dof");
        q.dof.push_back(d);
        q.weight.push_back(1.0);
        set.items.push_back(std::move(q));
        ++set.n_vertex;
    }
    return set;
}

std::vector<double> apply_qois(const QoiSet& set, const std::vector<double>& x)
{
    std::vector<double> out(set.size(), 0.0);
    for (int i = 0; i < set.size(); ++i) {
        const Qoi& q = set.items[i];
        double s = 0.0;
        for (size_t k = 0; k < q.dof.size(); ++k) {
            if (q.dof[k] >= static_cast<int>(x.size()))
                throw std::invalid_argument("apply_qois: dof vector too short");
            s += q.weight[k] * x[q.dof[k]];
        }
        out[i] = s;
    }
    return out;
}

} // namespace ndlod

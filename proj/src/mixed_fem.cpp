#include "ndlod/mixed_fem.hpp"

#include <cmath>
#include <stdexcept>

namespace ndlod {

namespace {

struct TriGeom {
    double area;
    double gx[3], gy[3]; // P1 basis gradients, constant per element
    double px[3], py[3];
};

TriGeom tri_geom(const Mesh2D& m, int t)
{
    TriGeom g;
    const auto& tr = m.tris[t];
    for (int k = 0; k < 3; ++k) {
        g.px[k] = m.vx[tr[k]];
        g.py[k] = m.vy[tr[k]];
    }
    const double ax = g.px[1] - g.px[0], ay = g.py[1] - g.py[0];
    const double bx = g.px[2] - g.px[0], by = g.py[2] - g.py[0];
    const double det = ax * by - ay * bx;
    g.area = 0.5 * det;
    g.gx[1] = by / det;
    g.gy[1] = -bx / det;
    g.gx[2] = -ay / det;
    g.gy[2] = ax / det;
    g.gx[0] = -g.gx[1] - g.gx[2];
    g.gy[0] = -g.gy[1] - g.gy[2];
    return g;
}

// Edge-midpoint quadrature points, pulled toward the centroid by a
// relative 1e-8 so coefficient discontinuities aligned with mesh lines
// are sampled from the element's own side.
constexpr double kNudge = 1e-8;

// degree-4 six-point rule (barycentric, weights sum to 1)
constexpr double kD4[6][3] = {
    {0.445948490915965, 0.445948490915965, 0.223381589678011},
    {0.445948490915965, 0.108103018168070, 0.223381589678011},
    {0.108103018168070, 0.445948490915965, 0.223381589678011},
    {0.091576213509771, 0.091576213509771, 0.109951743655322},
    {0.091576213509771, 0.816847572980459, 0.109951743655322},
    {0.816847572980459, 0.091576213509771, 0.109951743655322},
};

} // namespace

DofMap build_dofmap(const Mesh2D& mesh)
{
    const int nv = mesh.num_vertices();
    DofMap dm;
    dm.u_of_vertex.assign(nv, -1);
    dm.q_of_vertex.assign(nv, {-1, -1});
    for (int v = 0; v < nv; ++v)
        if (!mesh.vertex_boundary[v]) dm.u_of_vertex[v] = dm.nu++;
    for (int v = 0; v < nv; ++v) {
        if (!mesh.vertex_boundary[v]) {
            dm.q_of_vertex[v][0] = dm.nq++;
            dm.q_of_vertex[v][1] = dm.nq++;
            continue;
        }
        // sides of the square: x = +-1 eliminates the tangential q_y,
        // y = +-1 eliminates q_x, corners eliminate both
        const bool onx = std::fabs(mesh.vx[v]) == 1.0;
        const bool ony = std::fabs(mesh.vy[v]) == 1.0;
        if (onx && ony) continue;
        if (onx)
            dm.q_of_vertex[v][0] = dm.nq++;
        else
            dm.q_of_vertex[v][1] = dm.nq++;
    }
    return dm;
}

MixedSystem assemble(MeshPtr mesh, const CoefficientField& field,
                     const std::function<double(double, double)>& gamma,
                     const std::function<double(double, double)>& f)
{
    if (field.has_lower_order_terms())
        throw std::invalid_argument("assemble: lower-order terms are not supported by the mixed solver");
    const Mesh2D& m = *mesh;
    MixedSystem sys;
    sys.mesh = mesh;
    sys.dofs = build_dofmap(m);
    if (sys.dofs.nu == 0)
        throw std::invalid_argument("assemble: mesh has no interior vertices");

    const DofMap& dm = sys.dofs;
    const int nd = dm.total();
    SparseBuilder bld(nd, nd);
    bld.reserve(static_cast<size_t>(m.num_triangles()) * 63);
    std::vector<double> rhs(nd, 0.0);

    for (int t = 0; t < m.num_triangles(); ++t) {
        const TriGeom g = tri_geom(m, t);
        const auto& tr = m.tris[t];
        const double cx = (g.px[0] + g.px[1] + g.px[2]) / 3.0;
        const double cy = (g.py[0] + g.py[1] + g.py[2]) / 3.0;
        const double w = g.area / 3.0;

        double qa[2][2] = {{0, 0}, {0, 0}}; // int_T gamma A
        double fg = 0.0;                    // int_T gamma f
        for (int k = 0; k < 3; ++k) {
            double qx = 0.5 * (g.px[k] + g.px[(k + 1) % 3]);
            double qy = 0.5 * (g.py[k] + g.py[(k + 1) % 3]);
            qx += kNudge * (cx - qx);
            qy += kNudge * (cy - qy);
            const double ga = gamma(qx, qy);
            const Mat2 a = field.A(qx, qy);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) qa[i][j] += w * ga * a[i][j];
            fg += w * ga * f(qx, qy);
        }

        // u-rows: (grad u, grad z) - (q, grad z)
        for (int a = 0; a < 3; ++a) {
            const int ra = dm.u(tr[a]);
            if (ra < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int cu = dm.u(tr[b]);
                if (cu >= 0)
                    bld.add(ra, cu, g.area * (g.gx[a] * g.gx[b] + g.gy[a] * g.gy[b]));
                const double gz[2] = {g.gx[a], g.gy[a]};
                for (int c = 0; c < 2; ++c) {
                    const int cq = dm.q(tr[b], c);
                    if (cq >= 0) bld.add(ra, cq, -w * gz[c]);
                }
            }
        }

        // q-rows: (A : Dq, gamma div v) + 1/2 (rot q, rot v) = (f, gamma div v)
        for (int a = 0; a < 3; ++a) {
            for (int d = 0; d < 2; ++d) {
                const int ra = dm.q(tr[a], d);
                if (ra < 0) continue;
                const double div_a = d == 0 ? g.gx[a] : g.gy[a];
                const double rot_a = d == 0 ? -g.gy[a] : g.gx[a];
                for (int b = 0; b < 3; ++b) {
                    const double gb[2] = {g.gx[b], g.gy[b]};
                    for (int c = 0; c < 2; ++c) {
                        const int cq = dm.q(tr[b], c);
                        if (cq < 0) continue;
                        double val = div_a * (qa[c][0] * gb[0] + qa[c][1] * gb[1]);
                        const double rot_b = c == 0 ? -g.gy[b] : g.gx[b];
                        val += 0.5 * g.area * rot_a * rot_b;
                        bld.add(ra, cq, val);
                    }
                }
                rhs[ra] += div_a * fg;
            }
        }
    }

    sys.matrix = bld.compress();
    sys.load = std::move(rhs);
    return sys;
}

namespace {

// CSR slice of rows [r0,r1) and columns [c0,c1)
SparseMatrix block(const SparseMatrix& m, int r0, int r1, int c0, int c1, double scale = 1.0)
{
    SparseMatrix b;
    b.nrows = r1 - r0;
    b.ncols = c1 - c0;
    b.row_ptr.assign(b.nrows + 1, 0);
    for (int r = r0; r < r1; ++r) {
        for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p) {
            const int c = m.col_idx[p];
            if (c >= c0 && c < c1) {
                b.col_idx.push_back(c - c0);
                b.vals.push_back(scale * m.vals[p]);
            }
        }
        b.row_ptr[r - r0 + 1] = static_cast<std::int64_t>(b.col_idx.size());
    }
    return b;
}

} // namespace

FineSolution solve_fine(const MixedSystem& sys)
{
    const int nu = sys.dofs.nu, nq = sys.dofs.nq;
    const SparseMatrix cq = block(sys.matrix, nu, nu + nq, nu, nu + nq);
    const SparseMatrix bq = block(sys.matrix, 0, nu, nu, nu + nq, -1.0); // +(q, grad z)
    const SparseMatrix lap = block(sys.matrix, 0, nu, 0, nu);

    std::vector<double> gq(sys.load.begin() + nu, sys.load.end());
    std::vector<double> xq;
    try {
        xq = Factorization(cq).solve(gq);
    } catch (const SingularSystemError& e) {
        throw SingularSystemError(std::string("solve_fine: q-block singular (") + e.what() + ")", e.pivot);
    }
    std::vector<double> bu = matvec(bq, xq);
    std::vector<double> xu;
    try {
        xu = Factorization(lap).solve(bu);
    } catch (const SingularSystemError& e) {
        throw SingularSystemError(std::string("solve_fine: u-block singular (") + e.what() + ")", e.pivot);
    }

    std::vector<double> x(sys.dofs.total());
    std::copy(xu.begin(), xu.end(), x.begin());
    std::copy(xq.begin(), xq.end(), x.begin() + nu);
    FineSolution sol = solution_from_dofs(sys.mesh, sys.dofs, x);
    sol.residual = relative_residual(sys.matrix, x, sys.load);
    return sol;
}

std::vector<double> dof_vector(const DofMap& dm, const FineSolution& sol)
{
    std::vector<double> x(dm.total(), 0.0);
    const int nv = static_cast<int>(dm.u_of_vertex.size());
    for (int v = 0; v < nv; ++v) {
        if (dm.u(v) >= 0) x[dm.u(v)] = sol.u[v];
        if (dm.q(v, 0) >= 0) x[dm.q(v, 0)] = sol.qx[v];
        if (dm.q(v, 1) >= 0) x[dm.q(v, 1)] = sol.qy[v];
    }
    return x;
}

FineSolution solution_from_dofs(MeshPtr mesh, const DofMap& dm, const std::vector<double>& x)
{
    FineSolution s;
    s.mesh = mesh;
    const int nv = mesh->num_vertices();
    s.u.assign(nv, 0.0);
    s.qx.assign(nv, 0.0);
    s.qy.assign(nv, 0.0);
    for (int v = 0; v < nv; ++v) {
        if (dm.u(v) >= 0) s.u[v] = x[dm.u(v)];
        if (dm.q(v, 0) >= 0) s.qx[v] = x[dm.q(v, 0)];
        if (dm.q(v, 1) >= 0) s.qy[v] = x[dm.q(v, 1)];
    }
    return s;
}

ErrorNorms error_norms(const FineSolution& sol, const ExactSolution& exact)
{
    const Mesh2D& m = *sol.mesh;
    double num[3] = {0, 0, 0}, den[3] = {0, 0, 0};
    for (int t = 0; t < m.num_triangles(); ++t) {
        const TriGeom g = tri_geom(m, t);
        const auto& tr = m.tris[t];
        const double uh[3] = {sol.u[tr[0]], sol.u[tr[1]], sol.u[tr[2]]};
        const double qhx[3] = {sol.qx[tr[0]], sol.qx[tr[1]], sol.qx[tr[2]]};
        const double qhy[3] = {sol.qy[tr[0]], sol.qy[tr[1]], sol.qy[tr[2]]};
        double dq[2][2] = {{0, 0}, {0, 0}};
        for (int k = 0; k < 3; ++k) {
            dq[0][0] += qhx[k] * g.gx[k];
            dq[0][1] += qhx[k] * g.gy[k];
            dq[1][0] += qhy[k] * g.gx[k];
            dq[1][1] += qhy[k] * g.gy[k];
        }
        for (const auto& qp : kD4) {
            const double lam[3] = {1.0 - qp[0] - qp[1], qp[0], qp[1]};
            const double w = qp[2] * g.area;
            double x = 0, y = 0, uhx = 0, qhxv = 0, qhyv = 0;
            for (int k = 0; k < 3; ++k) {
                x += lam[k] * g.px[k];
                y += lam[k] * g.py[k];
                uhx += lam[k] * uh[k];
                qhxv += lam[k] * qhx[k];
                qhyv += lam[k] * qhy[k];
            }
            const double ue = exact.u(x, y);
            const Vec2 ge = exact.grad(x, y);
            const Mat2 he = exact.hess(x, y);
            num[0] += w * (uhx - ue) * (uhx - ue);
            den[0] += w * ue * ue;
            num[1] += w * ((qhxv - ge[0]) * (qhxv - ge[0]) + (qhyv - ge[1]) * (qhyv - ge[1]));
            den[1] += w * (ge[0] * ge[0] + ge[1] * ge[1]);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    num[2] += w * (dq[i][j] - he[i][j]) * (dq[i][j] - he[i][j]);
                    den[2] += w * he[i][j] * he[i][j];
                }
        }
    }
    return {std::sqrt(num[0] / den[0]), std::sqrt(num[1] / den[1]), std::sqrt(num[2] / den[2])};
}

ErrorNorms error_norms(const FineSolution& sol_in, const FineSolution& reference)
{
    const FineSolution sol =
        sol_in.mesh.get() == reference.mesh.get() ? sol_in : prolong_solution(sol_in, reference.mesh);
    const Mesh2D& m = *reference.mesh;
    double num[3] = {0, 0, 0}, den[3] = {0, 0, 0};
    for (int t = 0; t < m.num_triangles(); ++t) {
        const TriGeom g = tri_geom(m, t);
        const auto& tr = m.tris[t];
        double dq_s[2][2] = {{0, 0}, {0, 0}}, dq_r[2][2] = {{0, 0}, {0, 0}};
        for (int k = 0; k < 3; ++k) {
            const int v = tr[k];
            dq_s[0][0] += sol.qx[v] * g.gx[k];
            dq_s[0][1] += sol.qx[v] * g.gy[k];
            dq_s[1][0] += sol.qy[v] * g.gx[k];
            dq_s[1][1] += sol.qy[v] * g.gy[k];
            dq_r[0][0] += reference.qx[v] * g.gx[k];
            dq_r[0][1] += reference.qx[v] * g.gy[k];
            dq_r[1][0] += reference.qy[v] * g.gx[k];
            dq_r[1][1] += reference.qy[v] * g.gy[k];
        }
        for (const auto& qp : kD4) {
            const double lam[3] = {1.0 - qp[0] - qp[1], qp[0], qp[1]};
            const double w = qp[2] * g.area;
            double us = 0, ur = 0, qsx = 0, qsy = 0, qrx = 0, qry = 0;
            for (int k = 0; k < 3; ++k) {
                const int v = tr[k];
                us += lam[k] * sol.u[v];
                ur += lam[k] * reference.u[v];
                qsx += lam[k] * sol.qx[v];
                qsy += lam[k] * sol.qy[v];
                qrx += lam[k] * reference.qx[v];
                qry += lam[k] * reference.qy[v];
            }
            num[0] += w * (us - ur) * (us - ur);
            den[0] += w * ur * ur;
            num[1] += w * ((qsx - qrx) * (qsx - qrx) + (qsy - qry) * (qsy - qry));
            den[1] += w * (qrx * qrx + qry * qry);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    num[2] += w * (dq_s[i][j] - dq_r[i][j]) * (dq_s[i][j] - dq_r[i][j]);
                    den[2] += w * dq_r[i][j] * dq_r[i][j];
                }
        }
    }
    return {std::sqrt(num[0] / den[0]), std::sqrt(num[1] / den[1]), std::sqrt(num[2] / den[2])};
}

FineSolution prolong_solution(const FineSolution& sol, MeshPtr finer)
{
    auto chain = refinement_chain(*sol.mesh, *finer); // validates compatibility
    FineSolution cur = sol;
    for (size_t level = 1; level < chain.size(); ++level) {
        const Mesh2D* f = chain[level];
        const Mesh2D* c = chain[level - 1];
        FineSolution nxt;
        const int nv = f->num_vertices();
        nxt.u.resize(nv);
        nxt.qx.resize(nv);
        nxt.qy.resize(nv);
        for (int v = 0; v < nv; ++v) {
            if (f->vertex_parent_vertex[v] >= 0) {
                const int pv = f->vertex_parent_vertex[v];
                nxt.u[v] = cur.u[pv];
                nxt.qx[v] = cur.qx[pv];
                nxt.qy[v] = cur.qy[pv];
            } else {
                const Edge& e = c->edges[f->vertex_parent_edge[v]];
                nxt.u[v] = 0.5 * (cur.u[e.v0] + cur.u[e.v1]);
                nxt.qx[v] = 0.5 * (cur.qx[e.v0] + cur.qx[e.v1]);
                nxt.qy[v] = 0.5 * (cur.qy[e.v0] + cur.qy[e.v1]);
            }
        }
        cur = std::move(nxt);
    }
    cur.mesh = finer;
    cur.residual = sol.residual;
    return cur;
}

} // namespace ndlod

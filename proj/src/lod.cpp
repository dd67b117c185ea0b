#include "ndlod/lod.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ndlod {

namespace {

// Entity incidence and coarse->fine element lists, shared by all corrector
// solves on one (coarse, fine) pair.
struct PatchContext {
    const MixedSystem* sys;
    const QoiSet* qois;
    std::vector<int> anc; // fine tri -> coarse tri
    std::vector<std::vector<int>> coarse_to_fine;
    std::vector<std::vector<int>> tri_qois; // coarse tri -> qoi ids on it
};

PatchContext make_context(const MixedSystem& sys, const QoiSet& qois)
{
    PatchContext ctx;
    ctx.sys = &sys;
    ctx.qois = &qois;
    const Mesh2D& c = *qois.coarse;
    const Mesh2D& f = *qois.fine;
    ctx.anc = ancestor_triangles(c, f);
    ctx.coarse_to_fine.resize(c.num_triangles());
    for (int t = 0; t < f.num_triangles(); ++t) ctx.coarse_to_fine[ctx.anc[t]].push_back(t);

    std::vector<int> vertex_qoi(c.num_vertices(), -1);
    for (int i = 0; i < qois.size(); ++i)
        if (qois.items[i].kind == QoiKind::Vertex) vertex_qoi[qois.items[i].entity] = i;
    ctx.tri_qois.resize(c.num_triangles());
    for (int t = 0; t < c.num_triangles(); ++t) {
        for (int e : c.tri_edges[t]) ctx.tri_qois[t].push_back(e); // edge qoi id == edge id
        for (int v : c.tris[t])
            if (vertex_qoi[v] >= 0) ctx.tri_qois[t].push_back(vertex_qoi[v]);
        std::sort(ctx.tri_qois[t].begin(), ctx.tri_qois[t].end());
    }
    return ctx;
}

std::vector<int> patch_of(const PatchContext& ctx, int i, int ell, const LodOptions& opts)
{
    const Mesh2D& c = *ctx.qois->coarse;
    std::vector<int> p = patch(c, ctx.qois->items[i].support, ell);
    if (static_cast<double>(p.size()) >= opts.full_domain_fraction * c.num_triangles() &&
        static_cast<int>(p.size()) < c.num_triangles()) {
        p.resize(c.num_triangles());
        for (int t = 0; t < c.num_triangles(); ++t) p[t] = t;
    }
    return p;
}

// dense row-major LU with partial pivoting, for the coarse system and the
// Schur complements of full-domain correctors
class DenseLU {
public:
    DenseLU(std::vector<double> a, int n, const char* what) : a_(std::move(a)), n_(n), piv_(n)
    {
        for (int k = 0; k < n_; ++k) {
            int p = k;
            double best = std::fabs(at(k, k));
            for (int r = k + 1; r < n_; ++r)
                if (std::fabs(at(r, k)) > best) {
                    best = std::fabs(at(r, k));
                    p = r;
                }
            if (best == 0.0)
                throw SingularSystemError(std::string(what) + ": singular at pivot " + std::to_string(k), k);
            piv_[k] = p;
            if (p != k)
                for (int c = 0; c < n_; ++c) std::swap(at(k, c), at(p, c));
            for (int r = k + 1; r < n_; ++r) {
                const double f = at(r, k) / at(k, k);
                at(r, k) = f;
                if (f == 0.0) continue;
                for (int c = k + 1; c < n_; ++c) at(r, c) -= f * at(k, c);
            }
        }
    }

    std::vector<double> solve(std::vector<double> b, bool transposed = false) const
    {
        if (!transposed) {
            for (int k = 0; k < n_; ++k) {
                std::swap(b[k], b[piv_[k]]);
                // apply L
            }
            for (int k = 0; k < n_; ++k)
                for (int r = k + 1; r < n_; ++r) b[r] -= at(r, k) * b[k];
            for (int k = n_ - 1; k >= 0; --k) {
                for (int c = k + 1; c < n_; ++c) b[k] -= at(k, c) * b[c];
                b[k] /= at(k, k);
            }
            return b;
        }
        // A = P^T L U  =>  A^T x = b solved as U^T y = b, L^T z = y, x = P^T z
        for (int k = 0; k < n_; ++k) {
            for (int r = 0; r < k; ++r) b[k] -= at(r, k) * b[r];
            b[k] /= at(k, k);
        }
        for (int k = n_ - 1; k >= 0; --k)
            for (int r = k + 1; r < n_; ++r) b[k] -= at(r, k) * b[r];
        for (int k = n_ - 1; k >= 0; --k) std::swap(b[k], b[piv_[k]]);
        return b;
    }

private:
    double& at(int r, int c) { return a_[static_cast<size_t>(r) * n_ + c]; }
    double at(int r, int c) const { return a_[static_cast<size_t>(r) * n_ + c]; }
    std::vector<double> a_;
    int n_;
    std::vector<int> piv_;
};

// The patch operator inherits the global block-triangular structure
// [[M_uu, M_uq], [0, M_qq]]; vertex constraints act on u-dofs and edge
// constraints on q-dofs, so the bordered system splits into a q-saddle
// followed by a u-saddle (and the reverse order for the adjoint).
struct PatchProblem {
    std::vector<int> alive; // global dofs interior to the patch, sorted (u prefix, q suffix)
    int n_alive_u = 0;
    std::vector<int> active;                 // qoi ids with nonempty restricted rows
    std::vector<int> active_e, active_v;     // edge prefix / vertex suffix of `active`
    SparseMatrix Muq;                        // u-rows x q-cols coupling, local indices
    std::optional<Factorization> fu, fq;     // bordered u- and q-saddle factors
    // fallback for operators without the block-triangular structure
    // (q-rows touching u-columns): one bordered factorization
    std::optional<Factorization> fmono;
};

// Alive dofs: dofs of fine vertices all of whose incident fine triangles
// lie in the patch. On the part of the patch boundary interior to the
// domain this eliminates u and both q components; on its intersection
// with the domain boundary the conditions already encoded in the DofMap
// remain in force.
PatchProblem build_patch_problem(const PatchContext& ctx, const std::vector<int>& pelems,
                                 int report_i, int ell)
{
    const MixedSystem& sys = *ctx.sys;
    const QoiSet& qois = *ctx.qois;
    const Mesh2D& f = *qois.fine;
    const DofMap& dm = sys.dofs;

    std::vector<char> tmask(f.num_triangles(), 0);
    std::vector<int> ftris;
    for (int ct : pelems)
        for (int t : ctx.coarse_to_fine[ct]) {
            tmask[t] = 1;
            ftris.push_back(t);
        }

    PatchProblem pp;
    std::vector<char> vseen(f.num_vertices(), 0);
    for (int t : ftris) {
        for (int v : f.tris[t]) {
            if (vseen[v]) continue;
            vseen[v] = 1;
            bool interior = true;
            for (int p = f.v2t_ptr[v]; p < f.v2t_ptr[v + 1]; ++p)
                if (!tmask[f.v2t[p]]) {
                    interior = false;
                    break;
                }
            if (!interior) continue;
            if (dm.u(v) >= 0) pp.alive.push_back(dm.u(v));
            for (int c = 0; c < 2; ++c)
                if (dm.q(v, c) >= 0) pp.alive.push_back(dm.q(v, c));
        }
    }
    std::sort(pp.alive.begin(), pp.alive.end());
    const int mloc = static_cast<int>(pp.alive.size());
    pp.n_alive_u = static_cast<int>(
        std::lower_bound(pp.alive.begin(), pp.alive.end(), dm.nu) - pp.alive.begin());
    const int nu_loc = pp.n_alive_u;
    const int nq_loc = mloc - nu_loc;

    std::vector<int> loc(dm.total(), -1);
    for (int k = 0; k < mloc; ++k) loc[pp.alive[k]] = k;

    // candidate constraints: QoIs of entities of patch elements
    std::vector<int> cand;
    for (int ct : pelems) cand.insert(cand.end(), ctx.tri_qois[ct].begin(), ctx.tri_qois[ct].end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    std::vector<std::pair<std::vector<int>, std::vector<double>>> erows, vrows;
    for (int j : cand) {
        const Qoi& q = qois.items[j];
        std::vector<int> rd;
        std::vector<double> rw;
        for (size_t k = 0; k < q.dof.size(); ++k)
            if (loc[q.dof[k]] >= 0) {
                rd.push_back(loc[q.dof[k]]);
                rw.push_back(q.weight[k]);
            }
        if (rd.empty()) continue; // functional vanishes on the patch space
        pp.active.push_back(j);
        if (q.kind == QoiKind::Edge) {
            for (auto& d : rd) d -= nu_loc; // edge rows live on q-dofs
            pp.active_e.push_back(j);
            erows.emplace_back(std::move(rd), std::move(rw));
        } else {
            pp.active_v.push_back(j);
            vrows.emplace_back(std::move(rd), std::move(rw));
        }
    }
    if (report_i >= 0 && !std::binary_search(pp.active.begin(), pp.active.end(), report_i))
        throw SingularSystemError("corrector: constraint " + std::to_string(report_i) +
                                      " vanishes on its own patch (i=" + std::to_string(report_i) +
                                      ", ell=" + std::to_string(ell) +
                                      "); patch too small relative to entity placement",
                                  report_i);

    const SparseMatrix& M = sys.matrix;
    const int ke = static_cast<int>(erows.size());
    const int kv = static_cast<int>(vrows.size());
    bool block_triangular = true;
    for (int r = nu_loc; r < mloc && block_triangular; ++r) {
        const int d = pp.alive[r];
        for (std::int64_t p = M.row_ptr[d]; p < M.row_ptr[d + 1]; ++p) {
            const int cl = loc[M.col_idx[p]];
            if (cl >= 0 && cl < nu_loc) {
                block_triangular = false;
                break;
            }
        }
    }
    try {
        if (block_triangular) {
            SparseBuilder bu(nu_loc + kv, nu_loc + kv);
            SparseBuilder bq(nq_loc + ke, nq_loc + ke);
            SparseBuilder bc(nu_loc, nq_loc);
            for (int r = 0; r < mloc; ++r) {
                const int d = pp.alive[r];
                for (std::int64_t p = M.row_ptr[d]; p < M.row_ptr[d + 1]; ++p) {
                    const int cl = loc[M.col_idx[p]];
                    if (cl < 0) continue;
                    if (r < nu_loc) {
                        if (cl < nu_loc)
                            bu.add(r, cl, M.vals[p]);
                        else
                            bc.add(r, cl - nu_loc, M.vals[p]);
                    } else {
                        bq.add(r - nu_loc, cl - nu_loc, M.vals[p]);
                    }
                }
            }
            for (int k = 0; k < ke; ++k)
                for (size_t p = 0; p < erows[k].first.size(); ++p) {
                    bq.add(nq_loc + k, erows[k].first[p], erows[k].second[p]);
                    bq.add(erows[k].first[p], nq_loc + k, erows[k].second[p]);
                }
            for (int k = 0; k < kv; ++k)
                for (size_t p = 0; p < vrows[k].first.size(); ++p) {
                    bu.add(nu_loc + k, vrows[k].first[p], vrows[k].second[p]);
                    bu.add(vrows[k].first[p], nu_loc + k, vrows[k].second[p]);
                }
            pp.Muq = bc.compress();
            pp.fq.emplace(bq.compress());
            pp.fu.emplace(bu.compress());
        } else {
            const int na = static_cast<int>(pp.active.size());
            SparseBuilder bm(mloc + na, mloc + na);
            for (int r = 0; r < mloc; ++r) {
                const int d = pp.alive[r];
                for (std::int64_t p = M.row_ptr[d]; p < M.row_ptr[d + 1]; ++p) {
                    const int cl = loc[M.col_idx[p]];
                    if (cl >= 0) bm.add(r, cl, M.vals[p]);
                }
            }
            // constraint rows in `active` order: edges first, then vertices
            for (int k = 0; k < ke; ++k)
                for (size_t p = 0; p < erows[k].first.size(); ++p) {
                    bm.add(mloc + k, erows[k].first[p] + nu_loc, erows[k].second[p]);
                    bm.add(erows[k].first[p] + nu_loc, mloc + k, erows[k].second[p]);
                }
            for (int k = 0; k < kv; ++k)
                for (size_t p = 0; p < vrows[k].first.size(); ++p) {
                    bm.add(mloc + ke + k, vrows[k].first[p], vrows[k].second[p]);
                    bm.add(vrows[k].first[p], mloc + ke + k, vrows[k].second[p]);
                }
            pp.fmono.emplace(bm.compress());
        }
    } catch (const SingularSystemError& e) {
        throw SingularSystemError("corrector: singular bordered system (i=" + std::to_string(report_i) +
                                      ", ell=" + std::to_string(ell) + "): " + e.what(),
                                  e.pivot);
    }
    return pp;
}

double constraint_residual(const QoiSet& qois, const std::vector<int>& active,
                           const std::vector<double>& dense_x, int i)
{
    double r = 0.0;
    for (int j : active) {
        const Qoi& q = qois.items[j];
        double s = 0.0;
        for (size_t k = 0; k < q.dof.size(); ++k) s += q.weight[k] * dense_x[q.dof[k]];
        r = std::max(r, std::fabs(s - (j == i ? 1.0 : 0.0)));
    }
    return r;
}

// Solve for one member of a bordered patch group.
void solve_member(const PatchContext& ctx, const PatchProblem& pp, int i, bool want_trial,
                  bool want_test, CorrectorPair& out, double& max_resid)
{
    const int mloc = static_cast<int>(pp.alive.size());
    const int nu_loc = pp.n_alive_u;
    const int nq_loc = mloc - nu_loc;
    const int ke = static_cast<int>(pp.active_e.size());
    const int kv = static_cast<int>(pp.active_v.size());
    const bool is_edge = ctx.qois->items[i].kind == QoiKind::Edge;
    const int pos_e =
        is_edge ? static_cast<int>(std::lower_bound(pp.active_e.begin(), pp.active_e.end(), i) -
                                   pp.active_e.begin())
                : -1;
    const int pos_v =
        is_edge ? -1
                : static_cast<int>(std::lower_bound(pp.active_v.begin(), pp.active_v.end(), i) -
                                   pp.active_v.begin());

    out.mult_qoi = pp.active;
    std::vector<double> scratch(ctx.sys->dofs.total(), 0.0);
    for (int side = 0; side < 2; ++side) {
        if ((side == 0 && !want_trial) || (side == 1 && !want_test)) continue;
        if (pp.fmono) {
            const int pos = static_cast<int>(std::lower_bound(pp.active.begin(), pp.active.end(), i) -
                                             pp.active.begin());
            std::vector<double> rhs(mloc + ke + kv, 0.0);
            rhs[mloc + pos] = 1.0;
            const std::vector<double> x = pp.fmono->solve(rhs, side == 1);
            PatchVector& v = side == 0 ? out.trial : out.test;
            v.dof.assign(pp.alive.begin(), pp.alive.end());
            v.val.assign(x.begin(), x.begin() + mloc);
            (side == 0 ? out.trial_mult : out.test_mult).assign(x.begin() + mloc, x.end());
            for (int k = 0; k < mloc; ++k) scratch[pp.alive[k]] = x[k];
            max_resid = std::max(max_resid, constraint_residual(*ctx.qois, pp.active, scratch, i));
            for (int k = 0; k < mloc; ++k) scratch[pp.alive[k]] = 0.0;
            continue;
        }
        std::vector<double> xu(nu_loc, 0.0), xq(nq_loc, 0.0);
        std::vector<double> lam_e(ke, 0.0), lam_v(kv, 0.0);
        if (side == 0) {
            // M_qq xq + Ee^T lam_e = 0, Ee xq = re; then
            // M_uu xu + Ev^T lam_v = -M_uq xq, Ev xu = rv
            if (is_edge) {
                std::vector<double> rq(nq_loc + ke, 0.0);
                rq[nq_loc + pos_e] = 1.0;
                const std::vector<double> s = pp.fq->solve(rq);
                std::copy(s.begin(), s.begin() + nq_loc, xq.begin());
                lam_e.assign(s.begin() + nq_loc, s.end());
            }
            std::vector<double> ru(nu_loc + kv, 0.0);
            if (is_edge) {
                const std::vector<double> cu = matvec(pp.Muq, xq);
                for (int k = 0; k < nu_loc; ++k) ru[k] = -cu[k];
            } else {
                ru[nu_loc + pos_v] = 1.0;
            }
            const std::vector<double> s = pp.fu->solve(ru);
            std::copy(s.begin(), s.begin() + nu_loc, xu.begin());
            lam_v.assign(s.begin() + nu_loc, s.end());
        } else {
            // M_uu^T yu + Ev^T mu_v = 0, Ev yu = rv; then
            // M_qq^T yq + Ee^T mu_e = -M_uq^T yu, Ee yq = re
            if (!is_edge) {
                std::vector<double> ru(nu_loc + kv, 0.0);
                ru[nu_loc + pos_v] = 1.0;
                const std::vector<double> s = pp.fu->solve(ru, true);
                std::copy(s.begin(), s.begin() + nu_loc, xu.begin());
                lam_v.assign(s.begin() + nu_loc, s.end());
            }
            std::vector<double> rq(nq_loc + ke, 0.0);
            if (is_edge) {
                rq[nq_loc + pos_e] = 1.0;
            } else {
                const std::vector<double> cq = matvec(pp.Muq, xu, true);
                for (int k = 0; k < nq_loc; ++k) rq[k] = -cq[k];
            }
            const std::vector<double> s = pp.fq->solve(rq, true);
            std::copy(s.begin(), s.begin() + nq_loc, xq.begin());
            lam_e.assign(s.begin() + nq_loc, s.end());
        }

        PatchVector& v = side == 0 ? out.trial : out.test;
        std::vector<double>& mult = side == 0 ? out.trial_mult : out.test_mult;
        v.dof.assign(pp.alive.begin(), pp.alive.end());
        v.val.resize(mloc);
        std::copy(xu.begin(), xu.end(), v.val.begin());
        std::copy(xq.begin(), xq.end(), v.val.begin() + nu_loc);
        // multipliers follow the sorted order of `active` (edges then vertices)
        mult.resize(ke + kv);
        std::copy(lam_e.begin(), lam_e.end(), mult.begin());
        std::copy(lam_v.begin(), lam_v.end(), mult.begin() + ke);

        for (int k = 0; k < mloc; ++k) scratch[pp.alive[k]] = v.val[k];
        max_resid = std::max(max_resid, constraint_residual(*ctx.qois, pp.active, scratch, i));
        for (int k = 0; k < mloc; ++k) scratch[pp.alive[k]] = 0.0;
    }
}

// Full-domain correctors through the Schur complement S = C M^{-1} C^T of
// one factorization of the unbordered operator, shared across all callers.
struct FullDomainSolver {
    const PatchContext* ctx;
    const Factorization* fact;
    std::vector<int> active; // all qois
    std::optional<DenseLU> schur;

    void init(const PatchContext& context, const Factorization& f)
    {
        ctx = &context;
        fact = &f;
        const QoiSet& qois = *ctx->qois;
        const int N = qois.size();
        const int nd = ctx->sys->dofs.total();
        active.resize(N);
        for (int i = 0; i < N; ++i) active[i] = i;
        std::vector<double> s(static_cast<size_t>(N) * N);
        std::vector<double> z(nd);
        for (int j = 0; j < N; ++j) {
            std::fill(z.begin(), z.end(), 0.0);
            const Qoi& q = qois.items[j];
            for (size_t k = 0; k < q.dof.size(); ++k) z[q.dof[k]] = q.weight[k];
            const std::vector<double> y = fact->solve(z);
            for (int r = 0; r < N; ++r) {
                const Qoi& qr = qois.items[r];
                double acc = 0.0;
                for (size_t k = 0; k < qr.dof.size(); ++k) acc += qr.weight[k] * y[qr.dof[k]];
                s[static_cast<size_t>(r) * N + j] = acc;
            }
        }
        schur.emplace(std::move(s), N, "corrector: full-domain Schur complement");
    }

    void solve(int i, bool want_trial, bool want_test, CorrectorPair& out, double& max_resid) const
    {
        const QoiSet& qois = *ctx->qois;
        const int N = qois.size();
        const int nd = ctx->sys->dofs.total();
        out.mult_qoi = active;
        for (int side = 0; side < 2; ++side) {
            if ((side == 0 && !want_trial) || (side == 1 && !want_test)) continue;
            std::vector<double> e(N, 0.0);
            e[i] = -1.0;
            const std::vector<double> lam = schur->solve(std::move(e), side == 1);
            std::vector<double> z(nd, 0.0);
            for (int j = 0; j < N; ++j) {
                const Qoi& q = qois.items[j];
                const double lj = lam[j];
                if (lj == 0.0) continue;
                for (size_t k = 0; k < q.dof.size(); ++k) z[q.dof[k]] -= lj * q.weight[k];
            }
            std::vector<double> x = fact->solve(z, side == 1);
            max_resid = std::max(max_resid, constraint_residual(qois, active, x, i));
            PatchVector& v = side == 0 ? out.trial : out.test;
            v.dof.clear();
            v.val = std::move(x); // dense representation
            (side == 0 ? out.trial_mult : out.test_mult) = lam;
        }
    }
};

void run_in_pool(int threads, int njobs, const std::function<void(int)>& job)
{
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, njobs));
    if (threads == 1) {
        for (int k = 0; k < njobs; ++k) job(k);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&]() {
        for (;;) {
            const int k = next.fetch_add(1);
            if (k >= njobs) return;
            try {
                job(k);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace

std::vector<double> PatchVector::dense(int n) const
{
    if (dof.empty() && static_cast<int>(val.size()) == n) return val;
    std::vector<double> x(n, 0.0);
    for (size_t k = 0; k < dof.size(); ++k) x[dof[k]] = val[k];
    return x;
}

CorrectorPair corrector(int i, int ell, CorrectorSide side, const MixedSystem& fine_system,
                        const QoiSet& qois, const LodOptions& opts)
{
    if (i < 0 || i >= qois.size()) throw std::invalid_argument("corrector: invalid QoI index");
    const PatchContext ctx = make_context(fine_system, qois);
    CorrectorPair out;
    out.patch_elems = patch_of(ctx, i, ell, opts);
    const PatchProblem pp = build_patch_problem(ctx, out.patch_elems, i, ell);
    double resid = 0.0;
    solve_member(ctx, pp, i, side == CorrectorSide::Trial, side == CorrectorSide::Test, out, resid);
    return out;
}

CorrectorBasis compute_basis(int ell, const MixedSystem& fine_system, const QoiSet& qois,
                             const LodOptions& opts)
{
    const PatchContext ctx = make_context(fine_system, qois);
    const int N = qois.size();
    const int nt = qois.coarse->num_triangles();

    CorrectorBasis basis;
    basis.ell = ell;
    basis.coarse = qois.coarse;
    basis.fine = qois.fine;
    basis.items.resize(N);

    // group members by identical patch sets so each patch is factorized once
    std::map<std::vector<int>, std::vector<int>> groups;
    for (int i = 0; i < N; ++i) {
        std::vector<int> p = patch_of(ctx, i, ell, opts);
        basis.items[i].patch_elems = p;
        groups[std::move(p)].push_back(i);
    }

    // the full-domain group shares one factorization of the global operator
    std::vector<int> full_members;
    {
        std::vector<int> all(nt);
        for (int t = 0; t < nt; ++t) all[t] = t;
        if (auto f = groups.find(all); f != groups.end()) {
            full_members = f->second;
            groups.erase(f);
        }
    }

    std::vector<const std::vector<int>*> gpatch;
    std::vector<const std::vector<int>*> gmembers;
    for (const auto& [p, members] : groups) {
        gpatch.push_back(&p);
        gmembers.push_back(&members);
    }

    std::vector<double> resid(gpatch.size() + 1, 0.0);
    run_in_pool(opts.threads, static_cast<int>(gpatch.size()), [&](int gi) {
        const PatchProblem pp = build_patch_problem(ctx, *gpatch[gi], (*gmembers[gi])[0], ell);
        for (int i : *gmembers[gi]) {
            if (!std::binary_search(pp.active.begin(), pp.active.end(), i))
                throw SingularSystemError("corrector: constraint " + std::to_string(i) +
                                              " vanishes on its own patch (i=" + std::to_string(i) +
                                              ", ell=" + std::to_string(ell) + ")",
                                          i);
            solve_member(ctx, pp, i, true, true, basis.items[i], resid[gi]);
        }
    });

    if (!full_members.empty()) {
        std::optional<Factorization> own;
        const Factorization* fact = opts.global_factorization;
        if (fact == nullptr) {
            own.emplace(fine_system.matrix);
            fact = &*own;
        }
        FullDomainSolver fds;
        fds.init(ctx, *fact);
        for (int i : full_members) fds.solve(i, true, true, basis.items[i], resid.back());
    }
    basis.max_constraint_residual = *std::max_element(resid.begin(), resid.end());
    return basis;
}

LodSolution solve_lod(const CorrectorBasis& basis, const MixedSystem& fine_system)
{
    const int N = static_cast<int>(basis.items.size());
    const int nd = fine_system.dofs.total();
    if (basis.fine.get() != fine_system.mesh.get())
        throw std::invalid_argument("solve_lod: basis and system live on different fine meshes");

    // K = V^T M U and g = V^T b, assembled by streaming over the stored
    // basis: w_i = M u_i is sparse (constraint rows plus the patch-boundary
    // ring; interior rows vanish by the saddle-point identity), so K comes
    // from short dot products against a by-dof index of the w vectors.
    const SparseMatrix Mt = transpose(fine_system.matrix);
    SparseBuilder wb(nd, N);
    {
        std::vector<double> w(nd, 0.0);
        std::vector<int> touched;
        for (int i = 0; i < N; ++i) {
            const PatchVector& u = basis.items[i].trial;
            auto accumulate = [&](int d, double v) {
                if (v == 0.0) return;
                for (std::int64_t p = Mt.row_ptr[d]; p < Mt.row_ptr[d + 1]; ++p) {
                    const int r = Mt.col_idx[p];
                    if (w[r] == 0.0) touched.push_back(r);
                    w[r] += Mt.vals[p] * v;
                }
            };
            if (u.dof.empty())
                for (int d = 0; d < nd; ++d) accumulate(d, u.val[d]);
            else
                for (size_t k = 0; k < u.dof.size(); ++k) accumulate(u.dof[k], u.val[k]);
            double wmax = 0.0;
            for (int r : touched) wmax = std::max(wmax, std::fabs(w[r]));
            // entries that are structural zeros of the saddle identity carry
            // only factorization noise; trim them
            const double cut = wmax * 1e-13;
            for (int r : touched) {
                if (std::fabs(w[r]) > cut) wb.add(r, i, w[r]);
                w[r] = 0.0;
            }
            touched.clear();
        }
    }
    const SparseMatrix W = wb.compress();

    std::vector<double> K(static_cast<size_t>(N) * N, 0.0);
    std::vector<double> g(N, 0.0);
    for (int j = 0; j < N; ++j) {
        const PatchVector& v = basis.items[j].test;
        double* krow = K.data() + static_cast<size_t>(j) * N;
        double gj = 0.0;
        auto scan = [&](int d, double val) {
            gj += val * fine_system.load[d];
            for (std::int64_t p = W.row_ptr[d]; p < W.row_ptr[d + 1]; ++p)
                krow[W.col_idx[p]] += val * W.vals[p];
        };
        if (v.dof.empty())
            for (int d = 0; d < nd; ++d) {
                if (v.val[d] != 0.0) scan(d, v.val[d]);
            }
        else
            for (size_t k = 0; k < v.dof.size(); ++k) scan(v.dof[k], v.val[k]);
        g[j] = gj;
    }

    LodSolution sol;
    sol.ell = basis.ell;
    {
        DenseLU lu(std::move(K), N, "solve_lod: coarse Petrov-Galerkin matrix (ell too small for this H?)");
        sol.coeffs = lu.solve(g);
    }

    std::vector<double> x(nd, 0.0);
    for (int i = 0; i < N; ++i) {
        const PatchVector& u = basis.items[i].trial;
        const double c = sol.coeffs[i];
        if (u.dof.empty())
            for (int d = 0; d < nd; ++d) x[d] += c * u.val[d];
        else
            for (size_t k = 0; k < u.dof.size(); ++k) x[u.dof[k]] += c * u.val[k];
    }
    sol.reconstruction = solution_from_dofs(fine_system.mesh, fine_system.dofs, x);

    // re-verify K c = g through the fine operator
    std::vector<double> r = matvec(fine_system.matrix, x);
    for (int d = 0; d < nd; ++d) r[d] -= fine_system.load[d];
    double pg = 0.0;
    for (int j = 0; j < N; ++j) {
        const PatchVector& v = basis.items[j].test;
        double s = 0.0;
        if (v.dof.empty())
            for (int d = 0; d < nd; ++d) s += v.val[d] * r[d];
        else
            for (size_t k = 0; k < v.dof.size(); ++k) s += v.val[k] * r[v.dof[k]];
        pg = std::max(pg, std::fabs(s));
    }
    sol.pg_residual = pg;
    sol.reconstruction.residual = pg;
    return sol;
}

// ---------------------------------------------------------------------------
// basis cache

namespace {

constexpr char kMagic[8] = {'N', 'D', 'L', 'O', 'D', 'B', '1', '\n'};

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string cache_path(const std::string& dir, const std::string& key)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
    return dir + "/basis_" + buf + ".bin";
}

template <class T>
void put(std::ostream& os, const T& v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
bool get(std::istream& is, T& v)
{
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return static_cast<bool>(is);
}
template <class T>
void put_vec(std::ostream& os, const std::vector<T>& v)
{
    put(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <class T>
bool get_vec(std::istream& is, std::vector<T>& v)
{
    std::uint64_t n = 0;
    if (!get(is, n)) return false;
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    return static_cast<bool>(is);
}

} // namespace

bool save_basis(const CorrectorBasis& basis, const std::string& dir, const std::string& key)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream os(cache_path(dir, key), std::ios::binary | std::ios::trunc);
    if (!os) return false;
    os.write(kMagic, sizeof kMagic);
    put(os, static_cast<std::uint64_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    put(os, basis.ell);
    put(os, basis.max_constraint_residual);
    put(os, static_cast<std::uint64_t>(basis.items.size()));
    for (const auto& it : basis.items) {
        put_vec(os, it.patch_elems);
        put_vec(os, it.mult_qoi);
        put_vec(os, it.trial.dof);
        put_vec(os, it.trial.val);
        put_vec(os, it.test.dof);
        put_vec(os, it.test.val);
        put_vec(os, it.trial_mult);
        put_vec(os, it.test_mult);
    }
    return static_cast<bool>(os);
}

std::optional<CorrectorBasis> load_basis(const std::string& dir, const std::string& key,
                                         MeshPtr coarse, MeshPtr fine)
{
    std::ifstream is(cache_path(dir, key), std::ios::binary);
    if (!is) return std::nullopt;
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) return std::nullopt;
    std::uint64_t klen = 0;
    if (!get(is, klen) || klen > (1u << 20)) return std::nullopt;
    std::string stored(klen, '\0');
    is.read(stored.data(), static_cast<std::streamsize>(klen));
    if (!is || stored != key) return std::nullopt;

    CorrectorBasis b;
    b.coarse = std::move(coarse);
    b.fine = std::move(fine);
    std::uint64_t n = 0;
    if (!get(is, b.ell) || !get(is, b.max_constraint_residual) || !get(is, n)) return std::nullopt;
    b.items.resize(n);
    for (auto& it : b.items) {
        if (!get_vec(is, it.patch_elems) || !get_vec(is, it.mult_qoi) || !get_vec(is, it.trial.dof) ||
            !get_vec(is, it.trial.val) || !get_vec(is, it.test.dof) || !get_vec(is, it.test.val) ||
            !get_vec(is, it.trial_mult) || !get_vec(is, it.test_mult))
            return std::nullopt;
    }
    return b;
}

} // namespace ndlod

#include "ndlod/sparse.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace ndlod {

SparseMatrix SparseBuilder::compress()
{
    std::sort(trips_.begin(), trips_.end(), [](const Trip& a, const Trip& b) {
        if (a.r != b.r) return a.r < b.r;
        return a.c < b.c;
    });

    SparseMatrix m;
    m.nrows = nrows_;
    m.ncols = ncols_;
    m.row_ptr.assign(nrows_ + 1, 0);
    int prev_r = -1, prev_c = -1;
    for (const Trip& t : trips_) {
        if (t.r < 0 || t.r >= nrows_ || t.c < 0 || t.c >= ncols_)
            throw std::invalid_argument("SparseBuilder: index out of range");
        if (t.r == prev_r && t.c == prev_c) {
            m.vals.back() += t.v;
        } else {
            m.col_idx.push_back(t.c);
            m.vals.push_back(t.v);
            ++m.row_ptr[t.r + 1];
            prev_r = t.r;
            prev_c = t.c;
        }
    }
    for (int r = 0; r < nrows_; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    trips_.clear();
    trips_.shrink_to_fit();
    return m;
}

std::vector<double> matvec(const SparseMatrix& m, const std::vector<double>& x, bool transposed)
{
    if (!transposed) {
        if (static_cast<int>(x.size()) != m.ncols)
            throw std::invalid_argument("matvec: dimension mismatch");
        std::vector<double> y(m.nrows, 0.0);
        for (int r = 0; r < m.nrows; ++r) {
            double s = 0.0;
            for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
                s += m.vals[p] * x[m.col_idx[p]];
            y[r] = s;
        }
        return y;
    }
    if (static_cast<int>(x.size()) != m.nrows)
        throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> y(m.ncols, 0.0);
    for (int r = 0; r < m.nrows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
            y[m.col_idx[p]] += m.vals[p] * xr;
    }
    return y;
}

SparseMatrix transpose(const SparseMatrix& m)
{
    SparseMatrix t;
    t.nrows = m.ncols;
    t.ncols = m.nrows;
    t.row_ptr.assign(t.nrows + 1, 0);
    t.col_idx.resize(m.nnz());
    t.vals.resize(m.nnz());
    for (int c : m.col_idx) ++t.row_ptr[c + 1];
    for (int r = 0; r < t.nrows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
    std::vector<std::int64_t> fill(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (int r = 0; r < m.nrows; ++r) {
        for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p) {
            const std::int64_t q = fill[m.col_idx[p]]++;
            t.col_idx[q] = r;
            t.vals[q] = m.vals[p];
        }
    }
    return t;
}

std::vector<double> triple_product(const SparseMatrix& P, const SparseMatrix& M,
                                   const SparseMatrix& Q)
{
    if (P.nrows != M.nrows || M.ncols != Q.nrows)
        throw std::invalid_argument("triple_product: dimension mismatch");
    const int N = P.ncols, Nq = Q.ncols;
    const SparseMatrix Mt = transpose(M); // row k of Mt = column k of M
    const SparseMatrix Qt = transpose(Q); // row j of Qt = column j of Q

    std::vector<double> K(static_cast<size_t>(N) * Nq, 0.0);
    std::vector<double> w(M.nrows, 0.0);
    std::vector<int> touched;
    touched.reserve(1024);
    for (int j = 0; j < Nq; ++j) {
        // w = M * Q(:,j), accumulated column-wise so only reachable rows are touched
        for (std::int64_t p = Qt.row_ptr[j]; p < Qt.row_ptr[j + 1]; ++p) {
            const int k = Qt.col_idx[p];
            const double qv = Qt.vals[p];
            for (std::int64_t pp = Mt.row_ptr[k]; pp < Mt.row_ptr[k + 1]; ++pp) {
                const int r = Mt.col_idx[pp];
                if (w[r] == 0.0) touched.push_back(r);
                w[r] += Mt.vals[pp] * qv;
            }
        }
        // K(:,j) += P(d,:)^T w[d] over touched rows
        for (int d : touched) {
            const double wd = w[d];
            if (wd != 0.0)
                for (std::int64_t p = P.row_ptr[d]; p < P.row_ptr[d + 1]; ++p)
                    K[static_cast<size_t>(P.col_idx[p]) * Nq + j] += P.vals[p] * wd;
            w[d] = 0.0;
        }
        touched.clear();
    }
    return K;
}

struct Factorization::Impl {
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

Factorization::Factorization(const SparseMatrix& m)
{
    if (m.nrows != m.ncols) throw std::invalid_argument("factorize: matrix not square");
    n_ = m.nrows;
    Eigen::SparseMatrix<double> a(m.nrows, m.ncols);
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(m.nnz());
        for (int r = 0; r < m.nrows; ++r)
            for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
                trips.emplace_back(r, m.col_idx[p], m.vals[p]);
        a.setFromTriplets(trips.begin(), trips.end());
    }
    a.makeCompressed();
    impl_ = std::make_unique<Impl>();
    impl_->lu.isSymmetric(false);
    impl_->lu.analyzePattern(a);
    impl_->lu.factorize(a);
    if (impl_->lu.info() != Eigen::Success) {
        // Eigen reports the failing column in lastErrorMessage; expose the
        // numeric index separately for callers
        int pivot = -1;
        const std::string msg = impl_->lu.lastErrorMessage();
        if (auto pos = msg.find_last_not_of("0123456789"); pos != std::string::npos && pos + 1 < msg.size())
            pivot = std::stoi(msg.substr(pos + 1));
        throw SingularSystemError("factorize: " + msg, pivot);
    }
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization&&) noexcept = default;
Factorization& Factorization::operator=(Factorization&&) noexcept = default;

std::vector<double> Factorization::solve(const std::vector<double>& rhs, bool transposed) const
{
    if (static_cast<int>(rhs.size()) != n_)
        throw std::invalid_argument("solve: dimension mismatch");
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n_);
    Eigen::VectorXd x;
    if (transposed)
        x = impl_->lu.transpose().solve(b);
    else
        x = impl_->lu.solve(b);
    return std::vector<double>(x.data(), x.data() + n_);
}

double relative_residual(const SparseMatrix& a, const std::vector<double>& x,
                         const std::vector<double>& b, bool transposed)
{
    const std::vector<double> ax = matvec(a, x, transposed);
    double rn = 0.0, bn = 0.0;
    for (size_t i = 0; i < b.size(); ++i) {
        const double d = ax[i] - b[i];
        rn += d * d;
        bn += b[i] * b[i];
    }
    rn = std::sqrt(rn);
    bn = std::sqrt(bn);
    return bn > 0.0 ? rn / bn : rn;
}

void dump_matrix(const SparseMatrix& m, std::ostream& out)
{
    out << m.nrows << " " << m.ncols << " " << m.nnz() << "\n";
    out.precision(17);
    for (int r = 0; r < m.nrows; ++r)
        for (std::int64_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
            out << r + 1 << " " << m.col_idx[p] + 1 << " " << m.vals[p] << "\n";
}

} // namespace ndlod

// Compressed-row matrices and a pivoted direct factorization for the
// non-symmetric saddle-point systems assembled in this project.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <vector>

namespace ndlod {

struct SingularSystemError : std::runtime_error {
    explicit SingularSystemError(const std::string& what, int pivot_index)
        : std::runtime_error(what), pivot(pivot_index) {}
    int pivot = -1; // pivot index reached when the failure was detected
};

/// CSR matrix. Column indices are sorted and unique within each row.
struct SparseMatrix {
    int nrows = 0, ncols = 0;
    std::vector<std::int64_t> row_ptr; // size nrows+1
    std::vector<int> col_idx;
    std::vector<double> vals;

    std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }
};

/// Accumulates (row, col, value) triplets; duplicates are summed.
/// compress() sorts the triplet buffer in place, so a builder is spent
/// after one call.
class SparseBuilder {
public:
    SparseBuilder(int nrows, int ncols) : nrows_(nrows), ncols_(ncols) {}
    void reserve(size_t nnz) { trips_.reserve(nnz); }
    void add(int r, int c, double v) { trips_.push_back({r, c, v}); }
    SparseMatrix compress();

private:
    struct Trip {
        int r, c;
        double v;
    };
    int nrows_, ncols_;
    std::vector<Trip> trips_;
};

std::vector<double> matvec(const SparseMatrix& m, const std::vector<double>& x,
                           bool transposed = false);
SparseMatrix transpose(const SparseMatrix& m);

/// Dense N x N product P^T M Q for tall-skinny basis collections P, Q
/// (returned row-major). Exploits sparsity of the Q columns and of M Q.
std::vector<double> triple_product(const SparseMatrix& P, const SparseMatrix& M,
                                   const SparseMatrix& Q);

/// Direct LU factorization with pivoting; handles indefinite saddle-point
/// matrices with zero diagonal entries. Solves with the matrix and, via the
/// same factors, with its transpose. One factorization per worker thread;
/// concurrent solves against a single instance are not supported.
class Factorization {
public:
    explicit Factorization(const SparseMatrix& m);
    ~Factorization();
    Factorization(Factorization&&) noexcept;
    Factorization& operator=(Factorization&&) noexcept;

    std::vector<double> solve(const std::vector<double>& rhs, bool transposed = false) const;
    int size() const { return n_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int n_ = 0;
};

inline Factorization factorize(const SparseMatrix& m) { return Factorization(m); }

/// Relative residual ||Ax - b|| / ||b|| (2-norms); returns the absolute
/// residual norm when b = 0.
double relative_residual(const SparseMatrix& a, const std::vector<double>& x,
                         const std::vector<double>& b, bool transposed = false);

/// Matrix-market style text dump: "rows cols nnz" header, then 1-based
/// "row col value" triplets.
void dump_matrix(const SparseMatrix& m, std::ostream& out);

} // namespace ndlod

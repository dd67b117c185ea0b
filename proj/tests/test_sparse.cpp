#include "ndlod/sparse.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace ndlod;

namespace {

// dense Gaussian elimination with partial pivoting, the oracle the sparse
// factorization is checked against
std::vector<double> dense_gauss(std::vector<std::vector<double>> a, std::vector<double> b)
{
    const int n = static_cast<int>(b.size());
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int r = k + 1; r < n; ++r)
            if (std::fabs(a[r][k]) > std::fabs(a[p][k])) p = r;
        REQUIRE(std::fabs(a[p][k]) > 0.0);
        std::swap(a[p], a[k]);
        std::swap(b[p], b[k]);
        for (int r = k + 1; r < n; ++r) {
            const double f = a[r][k] / a[k][k];
            for (int c = k; c < n; ++c) a[r][c] -= f * a[k][c];
            b[r] -= f * b[k];
        }
    }
    for (int k = n - 1; k >= 0; --k) {
        for (int c = k + 1; c < n; ++c) b[k] -= a[k][c] * b[c];
        b[k] /= a[k][k];
    }
    return b;
}

SparseMatrix from_dense(const std::vector<std::vector<double>>& a)
{
    const int n = static_cast<int>(a.size());
    SparseBuilder b(n, static_cast<int>(a[0].size()));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < static_cast<int>(a[r].size()); ++c)
            if (a[r][c] != 0.0) b.add(r, c, a[r][c]);
    return b.compress();
}

} // namespace

TEST_CASE("identity solve returns the rhs")
{
    SparseBuilder b(5, 5);
    for (int i = 0; i < 5; ++i) b.add(i, i, 1.0);
    const auto f = factorize(b.compress());
    const std::vector<double> rhs = {1, -2, 3, 0.5, 4};
    CHECK(f.solve(rhs) == rhs);
}

TEST_CASE("permutation matrix with zero diagonal")
{
    const auto m = from_dense({{0, 1}, {1, 0}});
    const auto f = factorize(m);
    const auto x = f.solve({3.0, 7.0});
    CHECK(x[0] == doctest::Approx(7.0));
    CHECK(x[1] == doctest::Approx(3.0));
}

TEST_CASE("lower triangular solve and its transpose")
{
    const auto m = from_dense({{2, 0}, {1, 3}});
    const auto f = factorize(m);
    const auto x = f.solve({2.0, 4.0});
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
    const auto y = f.solve({3.0, 3.0}, true);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("seeded random sparse 20x20 matches the dense elimination oracle")
{
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::uniform_int_distribution<int> col(0, 19);
    std::vector<std::vector<double>> dense(20, std::vector<double>(20, 0.0));
    for (int r = 0; r < 20; ++r) {
        dense[r][r] = 4.0 + val(rng);
        for (int k = 0; k < 5; ++k) dense[r][col(rng)] += val(rng);
    }
    std::vector<double> rhs(20);
    for (auto& v : rhs) v = val(rng);

    const auto want = dense_gauss(dense, rhs);
    const auto got = factorize(from_dense(dense)).solve(rhs);
    for (int i = 0; i < 20; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("saddle-point system with a zero block")
{
    // [[2,0,1],[0,2,1],[1,1,0]], a minimal KKT system
    const auto m = from_dense({{2, 0, 1}, {0, 2, 1}, {1, 1, 0}});
    const auto f = factorize(m);
    const std::vector<double> rhs = {0.0, 0.0, 1.0};
    const auto x = f.solve(rhs);
    const auto want = dense_gauss({{2, 0, 1}, {0, 2, 1}, {1, 1, 0}}, rhs);
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK(relative_residual(m, x, rhs) < 1e-12);
}

TEST_CASE("singular matrix reports an error")
{
    SparseBuilder b(3, 3);
    b.add(0, 0, 1.0);
    b.add(1, 1, 1.0);
    b.add(2, 2, 0.0);
    b.add(2, 0, 0.0);
    CHECK_THROWS_AS(factorize(b.compress()), SingularSystemError);
}

TEST_CASE("matvec and transpose are consistent")
{
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    SparseBuilder b(7, 4);
    for (int k = 0; k < 15; ++k)
        b.add(static_cast<int>(rng() % 7), static_cast<int>(rng() % 4), val(rng));
    const auto m = b.compress();
    const auto mt = transpose(m);

    std::vector<double> x(7);
    for (auto& v : x) v = val(rng);
    const auto a = matvec(m, x, true);
    const auto c = matvec(mt, x);
    REQUIRE(a.size() == c.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(c[i]).epsilon(1e-14));

    // double transposition is the identity bit for bit
    const auto mtt = transpose(mt);
    CHECK(mtt.row_ptr == m.row_ptr);
    CHECK(mtt.col_idx == m.col_idx);
    CHECK(mtt.vals == m.vals);
}

TEST_CASE("matvec identity")
{
    SparseBuilder b(4, 4);
    for (int i = 0; i < 4; ++i) b.add(i, i, 1.0);
    const auto m = b.compress();
    const std::vector<double> x = {1, 2, 3, 4};
    CHECK(matvec(m, x) == x);
}

TEST_CASE("duplicate triplets are summed and rows sorted")
{
    SparseBuilder b(2, 3);
    b.add(0, 2, 1.0);
    b.add(0, 0, 2.0);
    b.add(0, 2, 0.5);
    const auto m = b.compress();
    CHECK(m.nnz() == 2);
    CHECK(m.col_idx[0] == 0);
    CHECK(m.col_idx[1] == 2);
    CHECK(m.vals[1] == doctest::Approx(1.5));
}

TEST_CASE("triple_product with identity projections copies the matrix")
{
    const auto m = from_dense({{1, 2, 0}, {0, 3, 4}, {5, 0, 6}});
    SparseBuilder pb(3, 3);
    for (int i = 0; i < 3; ++i) pb.add(i, i, 1.0);
    const auto p = pb.compress();
    const auto k = triple_product(p, m, p);
    const double want[9] = {1, 2, 0, 0, 3, 4, 5, 0, 6};
    for (int i = 0; i < 9; ++i) CHECK(k[i] == doctest::Approx(want[i]));
}

TEST_CASE("triple_product matches the dense computation on random bases")
{
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    const int m = 12, n = 3;
    SparseBuilder mb(m, m), pb(m, n), qb(m, n);
    for (int k = 0; k < 40; ++k)
        mb.add(static_cast<int>(rng() % m), static_cast<int>(rng() % m), val(rng));
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < 5; ++k) {
            pb.add(static_cast<int>(rng() % m), j, val(rng));
            qb.add(static_cast<int>(rng() % m), j, val(rng));
        }
    const auto M = mb.compress(), P = pb.compress(), Q = qb.compress();
    const auto K = triple_product(P, M, Q);
    // oracle: column by column through matvec
    for (int j = 0; j < n; ++j) {
        std::vector<double> qj(m, 0.0);
        for (int r = 0; r < m; ++r)
            for (std::int64_t pp = Q.row_ptr[r]; pp < Q.row_ptr[r + 1]; ++pp)
                if (Q.col_idx[pp] == j) qj[r] = Q.vals[pp];
        const auto w = matvec(M, qj);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int r = 0; r < m; ++r)
                for (std::int64_t pp = P.row_ptr[r]; pp < P.row_ptr[r + 1]; ++pp)
                    if (P.col_idx[pp] == i) s += P.vals[pp] * w[r];
            CHECK(K[static_cast<size_t>(i) * n + j] == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("residuals of random solves stay below 1e-10")
{
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 30;
        SparseBuilder b(n, n);
        for (int i = 0; i < n; ++i) b.add(i, i, 5.0 + val(rng));
        for (int k = 0; k < 4 * n; ++k)
            b.add(static_cast<int>(rng() % n), static_cast<int>(rng() % n), val(rng));
        const auto m = b.compress();
        const auto f = factorize(m);
        std::vector<double> rhs(n);
        for (auto& v : rhs) v = val(rng);
        CHECK(relative_residual(m, f.solve(rhs), rhs) < 1e-10);
        CHECK(relative_residual(m, f.solve(rhs, true), rhs, true) < 1e-10);
    }
}

TEST_CASE("matrix dump is 1-based triplet text")
{
    const auto m = from_dense({{1.5, 0}, {0, -2}});
    std::ostringstream os;
    dump_matrix(m, os);
    CHECK(os.str() == "2 2 2\n1 1 1.5\n2 2 -2\n");
}

TEST_CASE("dimension mismatches are rejected")
{
    const auto m = from_dense({{1, 0}, {0, 1}});
    CHECK_THROWS_AS(matvec(m, {1.0, 2.0, 3.0}), std::invalid_argument);
    const auto f = factorize(m);
    CHECK_THROWS_AS(f.solve({1.0}), std::invalid_argument);
}

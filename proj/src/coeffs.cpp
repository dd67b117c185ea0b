#include "ndlod/coeffs.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ndlod {

namespace {

constexpr double kPi = 3.14159265358979323846;

// measure-zero set; any fixed convention works on aligned meshes
inline double sgn(double t) { return t >= 0.0 ? 1.0 : -1.0; }

Mat2 monoscale_A(double x, double y)
{
    const double s = sgn(std::sin(kPi * x) * std::sin(kPi * y));
    return {{{2.0, s}, {s, 2.0}}};
}

Mat2 layered_A(double x, double y)
{
    (void)x;
    const double st = std::sin(kPi * y), ct = std::cos(kPi * y);
    return {{{1.0 + std::asin(st * st), st * ct}, {st * ct, 2.0 + ct * ct}}};
}

// u = g(x) g(y) with g(t) = t (1 - e^{1-|t|}); vanishes on the boundary
double gfun(double t) { return t * (1.0 - std::exp(1.0 - std::fabs(t))); }
double gfun1(double t)
{
    const double e = std::exp(1.0 - std::fabs(t));
    return 1.0 - e + std::fabs(t) * e;
}
double gfun2(double t) { return sgn(t) * std::exp(1.0 - std::fabs(t)) * (2.0 - std::fabs(t)); }

double frob2(const Mat2& a)
{
    return a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[1][0] * a[1][0] + a[1][1] * a[1][1];
}

} // namespace

bool CoefficientField::has_lower_order_terms() const
{
    return static_cast<bool>(b) || static_cast<bool>(c);
}

CoefficientField builtin_field(const std::string& name, double epsilon)
{
    CoefficientField f;
    f.name = name;
    if (name == "monoscale") {
        f.A = monoscale_A;
        f.certified = CertifiedConstants{0.6, 1.0, 3.0};
    } else if (name == "checkerboard") {
        const double eps = epsilon > 0.0 ? epsilon : std::ldexp(1.0, -7);
        f.epsilon = eps;
        f.A = [eps](double x, double y) { return monoscale_A(x / eps, y / eps); };
        f.certified = CertifiedConstants{0.6, 1.0, 3.0};
    } else if (name == "layered") {
        const double eps = epsilon > 0.0 ? epsilon : std::ldexp(1.0, -6);
        f.epsilon = eps;
        f.A = [eps](double x, double y) { return layered_A(x / eps, y / eps); };
        f.certified = CertifiedConstants{0.5, 0.5, 4.0};
    } else {
        throw std::invalid_argument("builtin_field: unknown field '" + name + "'");
    }
    return f;
}

Rhs builtin_rhs(const std::string& name)
{
    Rhs r;
    r.name = name;
    if (name == "monoscale_exact") {
        ExactSolution ex;
        ex.u = [](double x, double y) { return gfun(x) * gfun(y); };
        ex.grad = [](double x, double y) {
            return Vec2{gfun1(x) * gfun(y), gfun(x) * gfun1(y)};
        };
        ex.hess = [](double x, double y) {
            const double m = gfun1(x) * gfun1(y);
            return Mat2{{{gfun2(x) * gfun(y), m}, {m, gfun(x) * gfun2(y)}}};
        };
        r.exact = ex;
        r.f = [ex](double x, double y) {
            const Mat2 a = monoscale_A(x, y);
            const Mat2 h = ex.hess(x, y);
            return a[0][0] * h[0][0] + a[0][1] * h[0][1] + a[1][0] * h[1][0] + a[1][1] * h[1][1];
        };
    } else if (name == "multiscale") {
        r.f = [](double x, double y) {
            return (x + std::cos(3.0 * kPi * x)) * y * y * y;
        };
    } else {
        throw std::invalid_argument("builtin_rhs: unknown rhs '" + name + "'");
    }
    return r;
}

CordesReport cordes_analyze(const CoefficientField& field, const SamplerSpec& sampler,
                            double lambda)
{
    const bool lower = field.has_lower_order_terms();
    if (lower && lambda <= 0.0)
        throw std::invalid_argument("cordes_analyze: fields with lower-order terms need lambda > 0 (case C2)");

    CordesReport rep;
    rep.case_tag = lower ? CordesCase::C2 : CordesCase::C1;
    rep.lambda = lower ? lambda : 0.0;

    std::vector<std::array<double, 2>> pts;
    const int g = std::max(sampler.grid_n, 2);
    pts.reserve(static_cast<size_t>(g + 1) * (g + 1));
    for (int j = 0; j <= g; ++j)
        for (int i = 0; i <= g; ++i)
            pts.push_back({-1.0 + 2.0 * i / g, -1.0 + 2.0 * j / g});
    if (sampler.mesh)
        for (int t = 0; t < sampler.mesh->num_triangles(); ++t)
            pts.push_back(sampler.mesh->centroid(t));

    double min_quot = std::numeric_limits<double>::infinity();
    double max_quot = 0.0;
    double zmin = std::numeric_limits<double>::infinity(), zmax = 0.0;
    double gmin = std::numeric_limits<double>::infinity(), gmax = 0.0;
    for (const auto& p : pts) {
        const Mat2 a = field.A(p[0], p[1]);
        const double tr = a[0][0] + a[1][1];
        if (tr <= 0.0)
            throw std::runtime_error("cordes_analyze: tr A <= 0 at sample point");
        // eigenvalues of symmetric 2x2
        const double mid = 0.5 * tr;
        const double rad = std::hypot(0.5 * (a[0][0] - a[1][1]), a[0][1]);
        zmin = std::min(zmin, mid - rad);
        zmax = std::max(zmax, mid + rad);

        double num, den;
        if (!lower) {
            num = tr * tr;
            den = frob2(a);
        } else {
            const Vec2 bb = field.b ? field.b(p[0], p[1]) : Vec2{0.0, 0.0};
            const double cc = field.c ? field.c(p[0], p[1]) : 0.0;
            if (cc < 0.0) throw std::runtime_error("cordes_analyze: c < 0 at sample point");
            const double top = tr + cc / lambda;
            num = top * top;
            den = frob2(a) + (bb[0] * bb[0] + bb[1] * bb[1]) / (2.0 * lambda) + cc * cc / (lambda * lambda);
        }
        const double quot = num / den; // (tr..)^2 / |..|^2, the reciprocal Cordes quotient
        min_quot = std::min(min_quot, quot);
        max_quot = std::max(max_quot, den / num);
        const double gam = (lower ? (tr + (field.c ? field.c(p[0], p[1]) : 0.0) / lambda) : tr) / den;
        gmin = std::min(gmin, gam);
        gmax = std::max(gmax, gam);
    }

    const double n_off = lower ? 2.0 : 1.0; // n resp. n-1 for n = 2
    double delta = min_quot - n_off;
    delta = std::min(delta, 1.0);
    if (delta <= 0.0)
        throw std::runtime_error("cordes_analyze: Cordes condition violated (sampled delta = " +
                                 std::to_string(delta) + ")");
    rep.delta_sampled = delta;
    rep.zeta1_sampled = zmin;
    rep.zeta2_sampled = zmax;
    rep.worst_ratio = max_quot;
    rep.gamma_min = gmin;
    rep.gamma_max = gmax;
    if (zmin <= 0.0) throw std::runtime_error("cordes_analyze: field not elliptic on samples");

    if (field.certified) {
        const auto& c = *field.certified;
        const double tol = 1e-9;
        if (delta + tol < c.delta || zmin + tol < c.zeta1 || zmax - tol > c.zeta2)
            throw std::runtime_error("cordes_analyze: samples contradict certified constants of '" +
                                     field.name + "'");
        rep.delta = c.delta;
        rep.zeta1 = c.zeta1;
        rep.zeta2 = c.zeta2;
    } else {
        rep.delta = delta;
        rep.zeta1 = zmin;
        rep.zeta2 = zmax;
    }

    if (!lower) {
        auto A = field.A;
        rep.gamma = [A](double x, double y) {
            const Mat2 a = A(x, y);
            return (a[0][0] + a[1][1]) / frob2(a);
        };
    } else {
        auto A = field.A;
        auto b = field.b;
        auto c = field.c;
        const double lam = lambda;
        rep.gamma = [A, b, c, lam](double x, double y) {
            const Mat2 a = A(x, y);
            const Vec2 bb = b ? b(x, y) : Vec2{0.0, 0.0};
            const double cc = c ? c(x, y) : 0.0;
            const double den = frob2(a) + (bb[0] * bb[0] + bb[1] * bb[1]) / (2.0 * lam) + cc * cc / (lam * lam);
            return (a[0][0] + a[1][1] + cc / lam) / den;
        };
    }
    return rep;
}

} // namespace ndlod

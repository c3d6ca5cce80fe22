#include "smoothcert/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace smoothcert {

namespace {

struct Panel {
    double a, fa, m, fm, b, fb, whole;
};

double simpson(double a, double fa, double fm, double b, double fb) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); }

double refine(const std::function<double(double)>& f, const Panel& p, double tol, int depth) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(p.a, p.fa, flm, p.m, p.fm);
    const double right = simpson(p.m, p.fm, frm, p.b, p.fb);
    const double delta = left + right - p.whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return refine(f, {p.a, p.fa, lm, flm, p.m, p.fm, left}, 0.5 * tol, depth - 1) +
           refine(f, {p.m, p.fm, rm, frm, p.b, p.fb, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                                  int max_depth) {
    if (!(tol > 0.0)) throw std::invalid_argument("quadrature tolerance must be positive");
    if (a == b) return 0.0;
    if (a > b) return -integrate_adaptive_simpson(f, b, a, tol, max_depth);
    // Split once so an accidental agreement on the coarsest panel cannot end the recursion early.
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fm = f(m);
    const double fb = f(b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    return refine(f, {a, fa, lm, flm, m, fm, simpson(a, fa, flm, m, fm)}, 0.5 * tol, max_depth) +
           refine(f, {m, fm, rm, frm, b, fb, simpson(m, fm, frm, b, fb)}, 0.5 * tol, max_depth);
}

}  // namespace smoothcert

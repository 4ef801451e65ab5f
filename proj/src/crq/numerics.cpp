#include "crq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crq::num {

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n)
    throw std::invalid_argument("MonotoneCubic: need >= 2 matching knots");
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = x_[i + 1] - x_[i];
    if (h <= 0.0) throw std::invalid_argument("MonotoneCubic: x not increasing");
    d[i] = (y_[i + 1] - y_[i]) / h;
  }
  m_.assign(n, 0.0);
  m_[0] = d[0];
  m_[n - 1] = d[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i)
    m_[i] = (d[i - 1] * d[i] <= 0.0) ? 0.0 : 0.5 * (d[i - 1] + d[i]);
  // Fritsch-Carlson limiter
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (d[i] == 0.0) {
      m_[i] = m_[i + 1] = 0.0;
      continue;
    }
    const double a = m_[i] / d[i];
    const double b = m_[i + 1] / d[i];
    const double s = a * a + b * b;
    if (s > 9.0) {
      const double t = 3.0 / std::sqrt(s);
      m_[i] = t * a * d[i];
      m_[i + 1] = t * b * d[i];
    }
  }
}

double MonotoneCubic::operator()(double x) const {
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * m_[i] + h01 * y_[i + 1] + h11 * h * m_[i + 1];
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> x0,
                             std::span<const double> step,
                             const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  if (step.size() != n) throw std::invalid_argument("nelder_mead: step size");
  std::vector<std::vector<double>> pts(n + 1, std::vector<double>(x0.begin(), x0.end()));
  std::vector<double> fv(n + 1);
  int evals = 0;
  auto eval = [&](std::span<const double> x) {
    ++evals;
    return f(x);
  };
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

  NelderMeadResult res;
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  while (evals < opts.max_evals) {
    // order
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const std::size_t best = idx[0], worst = idx[n], second = idx[n - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      spread = std::max(spread, std::fabs(pts[worst][i] - pts[best][i]));
    if (std::fabs(fv[worst] - fv[best]) <= opts.f_tol * (std::fabs(fv[best]) + opts.f_tol) &&
        spread <= opts.x_tol) {
      res.converged = true;
      break;
    }

    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k <= n; ++k)
        if (k != worst) s += pts[k][i];
      centroid[i] = s / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + (centroid[i] - pts[worst][i]);
    const double fr = eval(xr);
    if (fr < fv[idx[0]]) {
      for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + 2.0 * (centroid[i] - pts[worst][i]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      for (std::size_t i = 0; i < n; ++i)
        xc[i] = outside ? centroid[i] + 0.5 * (centroid[i] - pts[worst][i])
                        : centroid[i] - 0.5 * (centroid[i] - pts[worst][i]);
      const double fc = eval(xc);
      if (fc < std::min(fr, fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
      } else {
        // shrink toward best
        for (std::size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (std::size_t i = 0; i < n; ++i)
            pts[k][i] = pts[best][i] + 0.5 * (pts[k][i] - pts[best][i]);
          fv[k] = eval(pts[k]);
        }
      }
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  res.f = *it;
  res.x = pts[static_cast<std::size_t>(it - fv.begin())];
  res.evals = evals;
  return res;
}

double minimize_scalar(const std::function<double(double)>& f, double lo,
                       double hi, double tol) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol * (1.0 + std::fabs(a) + std::fabs(b))) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

bool solve_linear(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    if (std::fabs(a[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    const double inv = 1.0 / a[col * n + col];
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double fac = a[r * n + col] * inv;
      for (int c = col; c < n; ++c) a[r * n + c] -= fac * a[col * n + c];
      b[r] -= fac * b[col];
    }
  }
  for (int i = 0; i < n; ++i) b[i] /= a[i * n + i];
  return true;
}

std::vector<double> hessian(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> x,
                            std::span<const double> scale) {
  const int n = static_cast<int>(x.size());
  std::vector<double> h(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> xp(x.begin(), x.end());
  const double f0 = f(xp);
  for (int i = 0; i < n; ++i) {
    const double hi = scale[i];
    for (int j = i; j < n; ++j) {
      const double hj = scale[j];
      if (i == j) {
        xp[i] = x[i] + hi;
        const double fp = f(xp);
        xp[i] = x[i] - hi;
        const double fm = f(xp);
        xp[i] = x[i];
        h[i * n + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
      } else {
        xp[i] = x[i] + hi;
        xp[j] = x[j] + hj;
        const double fpp = f(xp);
        xp[j] = x[j] - hj;
        const double fpm = f(xp);
        xp[i] = x[i] - hi;
        const double fmm = f(xp);
        xp[j] = x[j] + hj;
        const double fmp = f(xp);
        xp[i] = x[i];
        xp[j] = x[j];
        h[i * n + j] = h[j * n + i] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
      }
    }
  }
  return h;
}

}  // namespace crq::num

#pragma once

#include <functional>
#include <span>
#include <vector>

namespace crq::num {

// Monotone piecewise-cubic interpolant (Fritsch-Carlson).  Knots must be
// strictly increasing in x; values monotone data stay monotone.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;
  std::size_t size() const { return x_.size(); }

 private:
  std::vector<double> x_, y_, m_;
};

struct NelderMeadOptions {
  int max_evals = 4000;
  double f_tol = 1e-10;
  double x_tol = 1e-10;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> x0,
                             std::span<const double> step,
                             const NelderMeadOptions& opts = {});

// Golden-section minimum of a 1-d function on [lo, hi].
double minimize_scalar(const std::function<double(double)>& f, double lo,
                       double hi, double tol = 1e-10);

// Solve A x = b in place by Gauss-Jordan with partial pivoting; A is n x n
// row-major.  Returns false if singular.
bool solve_linear(std::vector<double>& a, std::vector<double>& b, int n);

// Finite-difference Hessian of f at x (central differences).
std::vector<double> hessian(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> x,
                            std::span<const double> scale);

}  // namespace crq::num

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/rng.hpp"
#include "rfm/sparse.hpp"

namespace rfm {

/// Eigenvalues in the order documented by the producing function, plus
/// optional eigenvectors as columns (M-orthonormal for generalized problems).
struct Spectrum {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // n x k, or empty

  std::size_t size() const { return values.size(); }
  bool has_vectors() const { return vectors.cols() > 0; }
};

struct EigenSolverOptions {
  // Residual tolerance for Ritz pairs, relative to the Ritz value.
  double tolerance = 1e-13;
  // Problems up to this size are solved densely.
  std::size_t dense_threshold = 512;
  // Never take the dense path (used to exercise the iterative engine).
  bool force_iterative = false;
  // Subspace dimension; 0 selects min(n, max(2k + 1, 40)).
  std::size_t subspace = 0;
  // Restart cycles allowed per requested eigenvalue.
  std::size_t restarts_per_value = 300;
  bool compute_vectors = true;  // false: eigenvalues only, from Ritz values
  std::uint64_t seed = 0x5eedULL;
};

namespace detail {

struct KrylovResult {
  std::vector<double> values;  // descending
  Eigen::MatrixXd vectors;
};

// Krylov-Schur iteration (thick-restart Lanczos) for the k algebraically
// largest eigenpairs of an operator that is self-adjoint in the inner product
// <x, y> = x^T W y, with W diagonal positive (empty W means identity).  Full
// reorthogonalization is applied at every step.
//
// Columns of `deflate` (W-orthonormal) are projected out of every iterate, so
// a known null space does not enter the Krylov space.
inline KrylovResult krylov_schur_largest(std::size_t n, const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& op,
                                         const Eigen::VectorXd& weight, std::size_t k, const EigenSolverOptions& opt,
                                         const Eigen::MatrixXd& deflate = {}) {
  const bool weighted = weight.size() > 0;
  const auto ni = static_cast<Eigen::Index>(n);
  std::size_t p = opt.subspace ? opt.subspace : std::max<std::size_t>(2 * k + 1, 40);
  p = std::min(p, n);
  const auto nd = static_cast<std::size_t>(deflate.cols());
  if (k == 0 || k + nd > n) throw InvalidArgument("krylov: invalid number of eigenvalues");
  p = std::min(p, n - nd);
  if (p <= k && p < n - nd) p = std::min(n - nd, k + 1);
  const auto pi = static_cast<Eigen::Index>(p);

  auto wmul = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return weighted ? Eigen::VectorXd(weight.cwiseProduct(x)) : x; };
  auto wnorm = [&](const Eigen::VectorXd& x) { return std::sqrt(std::max(0.0, x.dot(wmul(x)))); };

  Eigen::MatrixXd basis(ni, pi + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(pi, pi);
  Rng rng(opt.seed);
  auto random_vector = [&] {
    Eigen::VectorXd v(ni);
    for (Eigen::Index i = 0; i < ni; ++i) v[i] = rng.normal();
    return v;
  };
  // Orthogonalize x against the first `cols` basis vectors.  The Lanczos
  // coupling to the newest `local` vectors is removed first, so one full
  // classical Gram-Schmidt sweep normally suffices; a second sweep runs when
  // the first removed most of the remaining norm (DGKS criterion).
  auto orthogonalize = [&](Eigen::VectorXd& x, Eigen::Index cols, Eigen::Index local) {
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(cols);
    for (Eigen::Index j = cols - 1; j >= std::max<Eigen::Index>(0, cols - local); --j) {
      const double c = basis.col(j).dot(wmul(x));
      x.noalias() -= c * basis.col(j);
      coeff[j] += c;
    }
    double before = wnorm(x);
    for (int pass = 0; pass < 2; ++pass) {
      if (nd > 0) x.noalias() -= deflate * (deflate.transpose() * wmul(x));
      if (cols > 0) {
        const Eigen::VectorXd c = basis.leftCols(cols).transpose() * wmul(x);
        x.noalias() -= basis.leftCols(cols) * c;
        coeff += c;
      }
      const double after = wnorm(x);
      if (after > 0.7071 * before) break;
      before = after;
    }
    return coeff;
  };

  {
    Eigen::VectorXd v0 = random_vector();
    orthogonalize(v0, 0, 0);
    basis.col(0) = v0 / wnorm(v0);
  }

  Eigen::Index kept = 0;
  double scale = 0.0;  // running estimate of the operator norm
  const std::size_t max_restarts = std::max<std::size_t>(1, opt.restarts_per_value * k);
  Eigen::VectorXd w(ni);
  std::size_t converged = 0;
  for (std::size_t cycle = 0; cycle < max_restarts; ++cycle) {
    double last_beta = 0.0;
    for (Eigen::Index col = kept; col < pi; ++col) {
      op(basis.col(col), w);
      const Eigen::VectorXd coeff = orthogonalize(w, col + 1, col == kept ? 0 : 2);
      h.block(0, col, col + 1, 1) = coeff;
      h.block(col, 0, 1, col + 1) = coeff.transpose();
      scale = std::max(scale, coeff.cwiseAbs().maxCoeff());
      double beta = wnorm(w);
      if (static_cast<std::size_t>(col) + 1 + nd == n) {
        last_beta = 0.0;  // the Krylov space is the whole space
        break;
      }
      if (!(beta > 1e-12 * scale) || beta == 0.0) {
        // Invariant subspace: continue with a fresh orthogonal direction.
        beta = 0.0;
        for (int attempt = 0; attempt < 5; ++attempt) {
          w = random_vector();
          orthogonalize(w, col + 1, 0);
          if (wnorm(w) > 1e-8) break;
        }
      }
      basis.col(col + 1) = w / wnorm(w);
      if (col + 1 < pi) {
        h(col + 1, col) = beta;
        h(col, col + 1) = beta;
      }
      last_beta = beta;
    }

    // Before the first restart the projected matrix is tridiagonal up to
    // reorthogonalization noise.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (kept == 0) {
      const Eigen::VectorXd diag = h.diagonal();
      const Eigen::VectorXd sub = h.diagonal(-1);
      es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    } else {
      es.compute(h);
    }
    if (es.info() != Eigen::Success) throw ConvergenceError("projected eigenproblem failed", 0);
    // Descending order.
    const Eigen::VectorXd theta = es.eigenvalues().reverse();
    const Eigen::MatrixXd y = es.eigenvectors().rowwise().reverse();
    const double tmax = theta.cwiseAbs().maxCoeff();
    // Residuals below a few hundred ulps of the largest Ritz value are not
    // attainable in floating point.
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() * tmax;
    converged = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double res = std::abs(last_beta * y(pi - 1, static_cast<Eigen::Index>(i)));
      if (res <= std::max(opt.tolerance * std::abs(theta[static_cast<Eigen::Index>(i)]), floor)) ++converged;
      else break;
    }
    if (converged >= k || p + nd == n) {
      KrylovResult out;
      out.values.resize(k);
      for (std::size_t i = 0; i < k; ++i) out.values[i] = theta[static_cast<Eigen::Index>(i)];
      if (opt.compute_vectors) out.vectors = basis.leftCols(pi) * y.leftCols(static_cast<Eigen::Index>(k));
      return out;
    }
    // Thick restart: keep the leading Ritz vectors, continue from the residual.
    kept = static_cast<Eigen::Index>(std::min<std::size_t>(p - 1, std::max<std::size_t>(k + 1, k + (p - k) / 2)));
    const Eigen::MatrixXd ritz = basis.leftCols(pi) * y.leftCols(kept);
    const Eigen::VectorXd next = basis.col(pi);
    basis.leftCols(kept) = ritz;
    basis.col(kept) = next;
    h.setZero();
    for (Eigen::Index i = 0; i < kept; ++i) h(i, i) = theta[i];
  }
  throw ConvergenceError("eigensolver did not converge within " + std::to_string(max_restarts) + " restarts", converged);
}

inline void check_symmetric(const Eigen::MatrixXd& a, double rel_tol) {
  if (a.rows() != a.cols()) throw InvalidArgument("matrix not square");
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > rel_tol * scale) throw InvalidArgument("matrix not symmetric");
}

}  // namespace detail

/// All eigenpairs of A u = lambda M u by a direct method (M defaults to I),
/// ascending.  Vectors are M-orthonormal.  Intended as a reference and for
/// small problems; n is capped at 2000.
inline Spectrum dense_eig_reference(const Eigen::MatrixXd& a, const Eigen::VectorXd& mass_diag = {}) {
  constexpr Eigen::Index kCap = 2000;
  if (a.rows() > kCap) throw InvalidArgument("dense_eig_reference: n exceeds " + std::to_string(kCap));
  detail::check_symmetric(a, 1e-10);
  const Eigen::Index n = a.rows();
  Spectrum s;
  if (mass_diag.size() == 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0);
    s.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    s.vectors = es.eigenvectors();
    return s;
  }
  if (mass_diag.size() != n) throw InvalidArgument("dense_eig_reference: mass size mismatch");
  if ((mass_diag.array() <= 0.0).any()) throw InvalidArgument("dense_eig_reference: mass not positive");
  const Eigen::VectorXd inv_sqrt = mass_diag.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd c = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  c = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0);
  s.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
  s.vectors = inv_sqrt.asDiagonal() * es.eigenvectors();
  return s;
}

/// The k smallest eigenpairs of L u = lambda M u, ascending, with
/// M-orthonormal eigenvectors.  L is assumed positive semidefinite; with
/// drop_null the smallest (zero) eigenvalue is computed and discarded.
///
/// Iterative path: shift-invert Krylov-Schur on (L + sigma M)^{-1} M in the
/// M inner product, sigma = 1e-8 * mean(diag(L) / diag(M)).  Eigenvalues
/// are refined by Rayleigh quotients of the returned vectors.
inline Spectrum smallest_eigenpairs(const SparseSym& l, const DiagMass& m, std::size_t k, bool drop_null,
                                    const EigenSolverOptions& opt = {}) {
  const std::size_t n = l.size();
  if (m.size() != n) throw InvalidArgument("smallest_eigenpairs: L and M sizes differ");
  if (k < 1 || k + 2 > n + (drop_null ? 0 : 1))
    throw InvalidArgument("smallest_eigenpairs: k=" + std::to_string(k) + " out of range for n=" + std::to_string(n));
  const std::size_t want = k + (drop_null ? 1 : 0);

  Spectrum full;
  if (!opt.force_iterative && n <= opt.dense_threshold) {
    Spectrum all = dense_eig_reference(l.dense(), m.diagonal());
    full.values.assign(all.values.begin(), all.values.begin() + static_cast<std::ptrdiff_t>(want));
    full.vectors = all.vectors.leftCols(static_cast<Eigen::Index>(want));
  } else {
    const double mean_ratio = (l.matrix().diagonal().array() / m.diagonal().array()).mean();
    const double sigma = 1e-8 * std::max(mean_ratio, 1e-300);
    const Factor factor(l, sigma, m);
    const Eigen::VectorXd& w = m.diagonal();
    auto op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = factor.solve_unrefined(w.cwiseProduct(x)); };
    // Zero row sums: the constant vector spans a known null space.  It is
    // deflated so its huge shift-inverted Ritz value does not swamp the rest.
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    const bool constant_null = (l.matrix() * ones).cwiseAbs().maxCoeff() <= 1e-10 * std::max(l.norm_inf(), 1e-300);
    Eigen::MatrixXd deflate;
    if (constant_null) deflate = ones / std::sqrt(w.sum());
    detail::KrylovResult res;
    if (constant_null && want == 1) {
      res.values = {0.0};
      res.vectors = deflate;
    } else {
      res = detail::krylov_schur_largest(n, op, w, want - (constant_null ? 1 : 0), opt, deflate);
      if (constant_null) {
        if (opt.compute_vectors) {
          Eigen::MatrixXd v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(want));
          v << deflate, res.vectors;
          res.vectors = std::move(v);
        }
        res.values.insert(res.values.begin(), 0.0);
      }
    }
    full.values.resize(want);
    if (!opt.compute_vectors) {
      // theta = 1 / (lambda + sigma); the null value, if deflated, is exact.
      for (std::size_t i = 0; i < want; ++i)
        full.values[i] = (constant_null && i == 0) ? 0.0 : 1.0 / res.values[i] - sigma;
      std::sort(full.values.begin(), full.values.end());
      if (!drop_null) return full;
      full.values.erase(full.values.begin());
      return full;
    }
    full.vectors = res.vectors;
    for (std::size_t i = 0; i < want; ++i) {
      const Eigen::VectorXd u = res.vectors.col(static_cast<Eigen::Index>(i));
      const double num = u.dot(l.matrix() * u);
      const double den = u.dot(w.cwiseProduct(u));
      full.vectors.col(static_cast<Eigen::Index>(i)) = u / std::sqrt(den);
      full.values[i] = num / den;
    }
    // Ascending order (Ritz order is descending in 1/(lambda+sigma), i.e. ascending already, but
    // refinement may swap near-equal values).
    std::vector<std::size_t> order(want);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return full.values[a] < full.values[b]; });
    Spectrum sorted;
    sorted.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(want));
    for (std::size_t i = 0; i < want; ++i) {
      sorted.values.push_back(full.values[order[i]]);
      sorted.vectors.col(static_cast<Eigen::Index>(i)) = full.vectors.col(static_cast<Eigen::Index>(order[i]));
    }
    full = std::move(sorted);
  }
  if (!drop_null) return full;
  Spectrum out;
  out.values.assign(full.values.begin() + 1, full.values.end());
  out.vectors = full.vectors.rightCols(static_cast<Eigen::Index>(k));
  return out;
}

/// The k algebraically largest eigenvalues of a dense symmetric matrix,
/// descending.
inline Spectrum largest_eigenvalues_dense(const Eigen::MatrixXd& b, std::size_t k, const EigenSolverOptions& opt = {}) {
  detail::check_symmetric(b, 1e-10);
  const auto n = static_cast<std::size_t>(b.rows());
  if (k < 1 || k > n) throw InvalidArgument("largest_eigenvalues_dense: k out of range");
  Spectrum s;
  if (!opt.force_iterative && n <= opt.dense_threshold) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0);
    for (std::size_t i = 0; i < k; ++i) s.values.push_back(es.eigenvalues()[static_cast<Eigen::Index>(n - 1 - i)]);
    return s;
  }
  auto op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = b.selfadjointView<Eigen::Lower>() * x; };
  auto res = detail::krylov_schur_largest(n, op, Eigen::VectorXd(), k, opt);
  s.values = res.values;
  std::sort(s.values.begin(), s.values.end(), std::greater<>());
  return s;
}

}  // namespace rfm

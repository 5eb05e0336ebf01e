#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rfm/error.hpp"

namespace rfm {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Symmetric sparse matrix.  Entries are accumulated for the lower triangle
/// (i >= j; upper-triangle input is mirrored), duplicates summed, then
/// expanded to full compressed storage on finalize.
class SparseSym {
 public:
  SparseSym() = default;

  // Wraps a full matrix; it must be exactly symmetric with finite entries.
  explicit SparseSym(SparseMatrix full) : m_(std::move(full)) {
    if (m_.rows() != m_.cols()) throw InvalidArgument("SparseSym: matrix not square");
    m_.makeCompressed();
    for (int c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it)
        if (!std::isfinite(it.value())) throw InvalidArgument("SparseSym: non-finite entry");
    if ((SparseMatrix(m_.transpose()) - m_).norm() != 0.0) throw InvalidArgument("SparseSym: matrix not symmetric");
  }

  static SparseSym from_lower_triplets(std::size_t n, const std::vector<Triplet>& entries) {
    std::vector<Triplet> full;
    full.reserve(2 * entries.size());
    for (const auto& t : entries) {
      if (!std::isfinite(t.value())) throw InvalidArgument("SparseSym: non-finite entry");
      int r = t.row(), c = t.col();
      if (r < c) std::swap(r, c);
      full.emplace_back(r, c, t.value());
      if (r != c) full.emplace_back(c, r, t.value());
    }
    SparseMatrix m(static_cast<int>(n), static_cast<int>(n));
    m.setFromTriplets(full.begin(), full.end());
    m.makeCompressed();
    SparseSym s;
    s.m_ = std::move(m);
    return s;
  }

  static SparseSym identity(std::size_t n) {
    SparseMatrix m(static_cast<int>(n), static_cast<int>(n));
    m.setIdentity();
    SparseSym s;
    s.m_ = std::move(m);
    return s;
  }

  std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
  const SparseMatrix& matrix() const { return m_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }
  double trace() const { return m_.diagonal().sum(); }
  // Largest absolute row sum.
  double norm_inf() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m_.rows());
    for (int c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it) s[it.row()] += std::abs(it.value());
    return m_.rows() ? s.maxCoeff() : 0.0;
  }

  SparseSym scaled(double f) const {
    SparseSym s;
    s.m_ = m_ * f;
    return s;
  }

 private:
  SparseMatrix m_;
};

/// Lumped (diagonal) mass matrix; every entry strictly positive.
class DiagMass {
 public:
  DiagMass() = default;
  explicit DiagMass(Eigen::VectorXd d) : d_(std::move(d)) {
    for (Eigen::Index i = 0; i < d_.size(); ++i)
      if (!(d_[i] > 0.0) || !std::isfinite(d_[i]))
        throw InvalidArgument("DiagMass: entry " + std::to_string(i) + " not positive");
  }
  static DiagMass identity(std::size_t n) { return DiagMass(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))); }

  std::size_t size() const { return static_cast<std::size_t>(d_.size()); }
  const Eigen::VectorXd& diagonal() const { return d_; }
  double operator[](std::size_t i) const { return d_[static_cast<Eigen::Index>(i)]; }
  double total() const { return d_.sum(); }
  DiagMass scaled(double f) const { return DiagMass(d_ * f); }

 private:
  Eigen::VectorXd d_;
};

/// Sparse LDL^T factorization of A + shift * M, required positive definite.
class Factor {
 public:
  Factor(const SparseSym& a, double shift, const DiagMass& mass) { compute(a.matrix(), shift, &mass); }
  explicit Factor(const SparseMatrix& a) { compute(a, 0.0, nullptr); }

  std::size_t size() const { return n_; }

  /// Solve with iterative refinement against the shifted matrix.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = solve_unrefined(b);
    const double bnorm = b.norm();
    for (int it = 0; it < 3; ++it) {
      const Eigen::VectorXd r = b - shifted_ * x;
      if (r.norm() <= 1e-13 * bnorm) break;
      x += ldlt_.solve(r);
    }
    return x;
  }

  /// Single triangular solve pair; for inner loops where refinement is wasted.
  Eigen::VectorXd solve_unrefined(const Eigen::VectorXd& b) const {
    if (static_cast<std::size_t>(b.size()) != n_) throw InvalidArgument("Factor::solve: size mismatch");
    return ldlt_.solve(b);
  }

 private:
  void compute(const SparseMatrix& a, double shift, const DiagMass* mass) {
    if (a.rows() != a.cols()) throw InvalidArgument("factorize: matrix not square");
    n_ = static_cast<std::size_t>(a.rows());
    if (shift < 0.0 || !std::isfinite(shift)) throw InvalidArgument("factorize: shift must be finite and >= 0");
    SparseMatrix shifted = a;
    if (shift > 0.0) {
      if (!mass || mass->size() != n_) throw InvalidArgument("factorize: mass size mismatch");
      SparseMatrix md(a.rows(), a.cols());
      std::vector<Triplet> diag;
      for (std::size_t i = 0; i < n_; ++i) diag.emplace_back(static_cast<int>(i), static_cast<int>(i), shift * (*mass)[i]);
      md.setFromTriplets(diag.begin(), diag.end());
      shifted = a + md;
    }
    ldlt_.compute(shifted);
    shifted_ = std::move(shifted);
    if (ldlt_.info() != Eigen::Success) throw FactorizationError("factorization failed: zero pivot", first_bad_pivot());
    if (auto bad = first_bad_pivot(); bad != n_) throw FactorizationError("factorization failed: matrix not positive definite", bad);
  }

  // Original-index position of the first non-positive pivot, or n if none.
  std::size_t first_bad_pivot() const {
    const Eigen::VectorXd d = ldlt_.vectorD();
    const auto& pinv = ldlt_.permutationPinv();
    for (Eigen::Index k = 0; k < d.size(); ++k)
      if (!(d[k] > 0.0)) return static_cast<std::size_t>(pinv.indices()[k]);
    return n_;
  }

  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  SparseMatrix shifted_;
  std::size_t n_ = 0;
};

inline Factor factorize_spd(const SparseSym& a, double shift, const DiagMass& mass) { return Factor(a, shift, mass); }

}  // namespace rfm

#pragma once

#include <span>
#include <vector>

#include "odis/common.hpp"

namespace odis {

/// Square banded matrix with kl sub- and ku super-diagonals, stored
/// LAPACK-band style with kl extra rows of fill-in headroom so the LU
/// factorization with row pivoting stays in place.
class BandedMatrix {
 public:
  BandedMatrix(int n, int kl, int ku);

  int size() const { return n_; }
  int kl() const { return kl_; }
  int ku() const { return ku_; }

  /// Entry (i,j); must satisfy |i-j| within the declared bands.
  double& at(int i, int j);
  double get(int i, int j) const;
  void add(int i, int j, double v) { at(i, j) += v; }
  void clear();

  /// y = A x (dense vectors).
  void multiply(std::span<const double> x, std::span<double> y) const;

 private:
  friend class BandedLU;
  int n_, kl_, ku_;
  int rows_;                // 2*kl + ku + 1
  std::vector<double> a_;   // column-major band storage: a_[col*rows_ + row]
};

/// LU factorization with partial pivoting of a banded matrix.
/// Factor once, solve many right-hand sides.
class BandedLU {
 public:
  explicit BandedLU(BandedMatrix m);  // throws SolverError if singular

  void solve_inplace(std::span<double> rhs) const;
  std::vector<double> solve(std::span<const double> rhs) const;

 private:
  BandedMatrix m_;
  std::vector<int> piv_;
};

}  // namespace odis

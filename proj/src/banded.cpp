#include "odis/banded.hpp"

#include <algorithm>
#include <cmath>

namespace odis {

BandedMatrix::BandedMatrix(int n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), rows_(2 * kl + ku + 1) {
  a_.assign(static_cast<size_t>(rows_) * n_, 0.0);
}

double& BandedMatrix::at(int i, int j) {
  // row index within column j: kl + ku + i - j, valid for -ku <= i-j <= kl
  int r = kl_ + ku_ + i - j;
  if (i < 0 || i >= n_ || j < 0 || j >= n_ || i - j > kl_ || j - i > ku_)
    throw SolverError("banded: entry (" + std::to_string(i) + "," +
                      std::to_string(j) + ") outside bands");
  return a_[static_cast<size_t>(j) * rows_ + r];
}

double BandedMatrix::get(int i, int j) const {
  if (i < 0 || i >= n_ || j < 0 || j >= n_ || i - j > kl_ || j - i > ku_)
    return 0.0;
  return a_[static_cast<size_t>(j) * rows_ + (kl_ + ku_ + i - j)];
}

void BandedMatrix::clear() { std::fill(a_.begin(), a_.end(), 0.0); }

void BandedMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < n_; ++i) {
    double s = 0.0;
    int j0 = std::max(0, i - kl_);
    int j1 = std::min(n_ - 1, i + ku_);
    for (int j = j0; j <= j1; ++j) s += get(i, j) * x[j];
    y[i] = s;
  }
}

BandedLU::BandedLU(BandedMatrix m) : m_(std::move(m)), piv_(m_.n_) {
  // gbtrf-style factorization: U may fill up to kl+ku superdiagonals.
  const int n = m_.n_;
  const int kl = m_.kl_;
  const int ku = m_.ku_;
  const int kv = kl + ku;  // superdiagonal extent of U
  const int rows = m_.rows_;
  auto& a = m_.a_;
  auto elem = [&](int r, int c) -> double& {
    return a[static_cast<size_t>(c) * rows + (kl + ku + r - c)];
  };

  for (int k = 0; k < n; ++k) {
    int pmax = std::min(n - 1, k + kl);
    int piv = k;
    double amax = std::abs(elem(k, k));
    for (int i = k + 1; i <= pmax; ++i) {
      double v = std::abs(elem(i, k));
      if (v > amax) {
        amax = v;
        piv = i;
      }
    }
    piv_[k] = piv;
    if (amax == 0.0)
      throw SolverError("banded LU: singular matrix at column " + std::to_string(k));
    if (piv != k) {
      int cmax = std::min(n - 1, k + kv);
      for (int c = k; c <= cmax; ++c) std::swap(elem(k, c), elem(piv, c));
    }
    double pivval = elem(k, k);
    for (int i = k + 1; i <= pmax; ++i) {
      double l = elem(i, k) / pivval;
      elem(i, k) = l;
      int cmax = std::min(n - 1, k + kv);
      for (int c = k + 1; c <= cmax; ++c) elem(i, c) -= l * elem(k, c);
    }
  }
}

void BandedLU::solve_inplace(std::span<double> rhs) const {
  const int n = m_.n_;
  const int kl = m_.kl_;
  const int ku = m_.ku_;
  const int kv = kl + ku;
  const int rows = m_.rows_;
  const auto& a = m_.a_;
  auto elem = [&](int r, int c) -> double {
    return a[static_cast<size_t>(c) * rows + (kl + ku + r - c)];
  };

  for (int k = 0; k < n; ++k) {
    if (piv_[k] != k) std::swap(rhs[k], rhs[piv_[k]]);
    int imax = std::min(n - 1, k + kl);
    double v = rhs[k];
    if (v != 0.0)
      for (int i = k + 1; i <= imax; ++i) rhs[i] -= elem(i, k) * v;
  }
  for (int k = n - 1; k >= 0; --k) {
    int cmax = std::min(n - 1, k + kv);
    double s = rhs[k];
    for (int c = k + 1; c <= cmax; ++c) s -= elem(k, c) * rhs[c];
    rhs[k] = s / elem(k, k);
  }
}

std::vector<double> BandedLU::solve(std::span<const double> rhs) const {
  std::vector<double> out(rhs.begin(), rhs.end());
  solve_inplace(out);
  return out;
}

}  // namespace odis

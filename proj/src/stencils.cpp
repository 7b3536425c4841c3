#include "odis/stencils.hpp"

#include <algorithm>

namespace odis {

std::vector<double> fd_weights(double x0, std::span<const double> xs, int m) {
  // Fornberg's recursive algorithm, weights for derivatives 0..m; the last
  // column is returned.
  const int nd = static_cast<int>(xs.size());
  std::vector<double> c(static_cast<size_t>(nd) * (m + 1), 0.0);
  auto C = [&](int i, int j) -> double& { return c[static_cast<size_t>(i) * (m + 1) + j]; };

  double c1 = 1.0;
  double c4 = xs[0] - x0;
  C(0, 0) = 1.0;
  for (int i = 1; i < nd; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0;
    double c5 = c4;
    c4 = xs[i] - x0;
    for (int j = 0; j < i; ++j) {
      double c3 = xs[i] - xs[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          C(i, k) = c1 * (k * C(i - 1, k - 1) - c5 * C(i - 1, k)) / c2;
        C(i, 0) = -c1 * c5 * C(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k)
        C(j, k) = (c4 * C(j, k) - k * C(j, k - 1)) / c3;
      C(j, 0) = c4 * C(j, 0) / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(nd);
  for (int i = 0; i < nd; ++i) w[i] = C(i, m);
  return w;
}

namespace {

StencilRow weights_for_window(const Grid& g, int d, int k, int start, int width) {
  std::vector<double> xs(width);
  for (int i = 0; i < width; ++i) xs[i] = g.x(start + i);
  StencilRow row;
  row.start = start;
  row.w = fd_weights(g.x(k), xs, d);
  return row;
}

}  // namespace

StencilRow derivative_stencil(const Grid& g, int d, int k) {
  const int P = g.points();
  if (d == 0) return StencilRow{k, {1.0}};
  // centered width: d+1 for even d, d+2 for odd d (both order 2)
  int wc = (d % 2 == 0) ? d + 1 : d + 2;
  int half = (wc - 1) / 2;
  int start = k - half;
  if (start >= 0 && start + wc <= P) return weights_for_window(g, d, k, start, wc);
  // shifted window: width d+2 keeps order 2 without symmetry
  int w = d + 2;
  start = std::clamp(k - (w - 1) / 2, 0, P - w);
  if (w > P)
    throw SolverError("stencil: grid too coarse for derivative order " +
                      std::to_string(d));
  return weights_for_window(g, d, k, start, w);
}

std::vector<StencilRow> derivative_stencils(const Grid& g, int d) {
  std::vector<StencilRow> rows;
  rows.reserve(g.points());
  for (int k = 0; k < g.points(); ++k) rows.push_back(derivative_stencil(g, d, k));
  return rows;
}

StencilRow boundary_stencil(const Grid& g, int d, bool at_right, int width) {
  const int P = g.points();
  if (width > P)
    throw SolverError("boundary stencil: grid too coarse");
  if (d == 0) return StencilRow{at_right ? P - 1 : 0, {1.0}};
  int start = at_right ? P - width : 0;
  std::vector<double> xs(width);
  for (int i = 0; i < width; ++i) xs[i] = g.x(start + i);
  StencilRow row;
  row.start = start;
  row.w = fd_weights(at_right ? g.R : 0.0, xs, d);
  return row;
}

double apply_stencil(const StencilRow& s, std::span<const double> f) {
  double acc = 0.0;
  for (size_t i = 0; i < s.w.size(); ++i) acc += s.w[i] * f[s.start + i];
  return acc;
}

Field differentiate(const Grid& g, std::span<const double> f, int d) {
  Field out(g.points());
  for (int k = 0; k < g.points(); ++k)
    out[k] = apply_stencil(derivative_stencil(g, d, k), f);
  return out;
}

}  // namespace odis

#pragma once

#include "odis/common.hpp"
#include "odis/grid.hpp"

namespace odis {

/// Discrete solution u on the space-time grid: u[time step][component][point].
/// Boundary rows satisfy the imposed conditions at every accepted step;
/// immutable once returned by a solver.
struct Trajectory {
  Grid grid;
  int n = 1;
  std::vector<VecField> u;

  static Trajectory zeros(const Grid& g, int n) {
    Trajectory t;
    t.grid = g;
    t.n = n;
    t.u.assign(g.steps(), VecField(n, Field(g.points(), 0.0)));
    return t;
  }

  const Field& at(int step, int comp) const { return u[step][comp]; }
  Field& at(int step, int comp) { return u[step][comp]; }
};

}  // namespace odis

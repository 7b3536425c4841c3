#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "odis/expr.hpp"
#include "odis/grid.hpp"
#include "odis/norms.hpp"

namespace odis {

/// One entry a_{jim}(t,x) of a lower-order coefficient matrix: identically
/// zero, a closed-form expression in (t,x), or grid samples interpolated
/// piecewise-linearly in t.
class CoeffField {
 public:
  static CoeffField zero() { return CoeffField(); }
  static CoeffField analytic(Expr e);
  static CoeffField sampled(std::vector<Field> values, Grid grid);

  bool is_zero() const { return kind_ == Kind::Zero; }
  bool is_analytic() const { return kind_ != Kind::Sampled; }
  bool time_varying() const { return time_varying_; }

  double eval(double t, double x) const;
  /// x-derivative of the coefficient. Symbolic for analytic fields; finite
  /// differences on the sample grid otherwise (reported as approximate).
  double eval_dx(double t, double x, int order) const;
  /// Analytic expression (throws for sampled fields).
  const Expr& expr() const;

 private:
  enum class Kind { Zero, Analytic, Sampled };
  CoeffField() = default;
  Kind kind_ = Kind::Zero;
  Expr e_;
  bool time_varying_ = false;
  std::vector<Field> samples_;  // [step][point]
  Grid sample_grid_;
};

/// Nonlinearity descriptors g_j(t,x,y_0,...,y_{l-1}) -> R^n with the declared
/// growth-exponent table. Components are expressions over t, x and the
/// variables y<k>_<m> (k = derivative order 0..l-1, m = component 1..n),
/// so gradients come from symbolic differentiation and manufactured cases
/// can compose them with planted solutions.
struct NonlinearitySpec {
  int l = 1;
  int n = 1;
  std::vector<std::vector<Expr>> g;  // [j][i], j = 0..l, i = 0..n-1
  // exponent tables indexed [j][k][m], j = 0..l, k,m = 0..l-1
  std::vector<std::vector<std::vector<double>>> b1, b2;

  static std::string yvar(int k, int m) {
    return "y" + std::to_string(k) + "_" + std::to_string(m + 1);
  }
  static NonlinearitySpec trivial(int l, int n);
  bool is_trivial() const;
  double eval(int j, int i, double t, double x,
              const std::vector<std::vector<double>>& y) const;
  /// Gradient entry d g_{ji} / d y_{km}.
  double eval_grad(int j, int i, int k, int m, double t, double x,
                   const std::vector<std::vector<double>>& y) const;
};

/// The PDE system: order parameter l (equation order 2l+1), dimension n,
/// constant diagonal leading coefficients, lower-order matrix coefficient
/// fields and the nonlinearity descriptor.
struct SystemSpec {
  int l = 1;
  int n = 1;
  std::vector<double> a_top;  // diag of a_{2l+1}, > 0
  std::vector<double> a_sub;  // diag of a_{2l}, <= 0
  // lower[j] is the n x n matrix a_j(t,x) flattened row-major (i*n+m),
  // j = 0..2l-1
  std::vector<std::vector<CoeffField>> lower;
  NonlinearitySpec nonlinearity;

  const CoeffField& coeff(int j, int i, int m) const { return lower[j][i * n + m]; }
  bool lower_all_zero() const;
  bool time_varying() const;
};

/// Overdetermination weight: analytic expression in x (derivatives to any
/// order symbolically) or samples on the run grid (finite-difference
/// derivatives; supported for l = 1 only).
class Weight {
 public:
  static Weight analytic(Expr omega);
  static Weight sampled(Field values);

  bool is_analytic() const { return analytic_; }
  double deriv_at(double x, int order, const Grid& g) const;
  /// Sampled derivative field on the grid.
  Field deriv_field(const Grid& g, int order) const;
  const Expr& expr() const;

 private:
  Weight() = default;
  bool analytic_ = true;
  Expr e_;
  Field samples_;
};

/// One component's overdetermination block: m_i controls h_{ki}, weights
/// omega_{ki} and targets phi_{ki}.
struct InverseGroup {
  int comp = 0;                              // 0-based component index
  std::vector<std::vector<Field>> h;         // [k][step][point]
  std::vector<Weight> omega;                 // size m_i
  std::vector<TimeSeries> phi;               // size m_i
  std::vector<TimeSeries> phi_prime;         // analytic phi'; empty v = derive

  int m() const { return static_cast<int>(h.size()); }
};

/// All problem data: initial datum, boundary traces, known source parts and
/// the overdetermination set. Sampled on the run grid.
struct ProblemData {
  VecField u0;                              // [i][point]
  std::vector<std::vector<TimeSeries>> mu;  // [j][i], j = 0..l-1
  std::vector<std::vector<TimeSeries>> nu;  // [j][i], j = 0..l
  std::vector<VecField> h0;                 // [step][i][point]
  std::vector<InverseGroup> groups;
  /// Known amplitudes for direct-problem runs, aligned with groups ([g][k]).
  std::vector<std::vector<TimeSeries>> F_known;

  int M() const;
  static ProblemData zeros(const Grid& g, int l, int n);
};

struct ValidationReport {
  struct Item {
    std::string code;
    std::string message;
  };
  std::vector<Item> items;
  std::map<std::string, double> metrics;

  bool ok() const { return items.empty(); }
  void fail(const std::string& code, const std::string& message) {
    items.push_back({code, message});
  }
  std::string summary() const;
};

enum class ExponentMode { nonstrict, strict };
enum class C0Mode { direct, inverse };

/// Coercivity margin: min over i and x in [0,R] of
/// (2l+1)*a_top[i] - 2*a_sub[i]*(1+x). Linear in x, so attained at an
/// endpoint.
double coercivity_margin(const SystemSpec& spec, double R);

/// Structural admissibility of the system: sign conditions on the leading
/// coefficients, positive coercivity margin, shape consistency, finiteness
/// of coefficient samples, and a spot check that the nonlinearity vanishes
/// at y = 0.
ValidationReport validate_system(const SystemSpec& spec, double R = 1.0,
                                 double T = 1.0);

/// Exponent-table bounds b2(j,k,m) <= (4l-2j-2k)/(2m+1) (nonstrict) or the
/// strict variant; one report item per failing triple.
ValidationReport validate_exponents(const SystemSpec& spec, ExponentMode mode);

/// Endpoint-vanishing conditions on an overdetermination weight:
/// |omega^(m)(0)| <= tol_bc for m = 0..l, |omega^(m)(R)| <= tol_bc for
/// m = 0..l-1.
ValidationReport validate_weight(const Weight& w, int l, const Grid& g,
                                 double tol_bc);

/// Default endpoint tolerance: exact-ish for analytic weights, quadrature
/// scaled for sampled ones.
double default_tol_bc(const Weight& w, const Grid& g);

/// Compatibility residuals |phi_ki(0) - int u0_i omega_ki dx| per group and
/// k, trapezoid quadrature on the run grid.
std::vector<std::vector<double>> check_compatibility(const ProblemData& data,
                                                     const Grid& g);

/// Aggregate data-smallness functional. Direct mode uses the assembled
/// source f; inverse mode uses h0 and the phi' terms instead.
double compute_c0(const ProblemData& data, const Grid& g, C0Mode mode);

struct SigmaT0 {
  double sigma = 0.0;
  double T0 = 0.0;  // advisory horizon, floored to a grid time when a grid is given
};

/// sigma = min over (j,k,m) of (4l-2j-2k-(2m+1)b2)/(4l); T0 solves the
/// smallness relation with an empirical constant standing in for the
/// estimate constant. Throws if sigma <= 0 (strict exponent mode violated).
SigmaT0 compute_sigma_T0(const SystemSpec& spec, double delta,
                         double c_empirical = 1.0,
                         const Grid* grid = nullptr);

/// Centered-difference derivative of a series, one-sided at the endpoints.
TimeSeries series_derivative(const TimeSeries& s);

}  // namespace odis

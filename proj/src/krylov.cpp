#include "snk/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace snk {

double forcing_eta(const ForcingSchedule& schedule, double grad_norm) {
  if (!(grad_norm >= 0.0)) throw ArgumentError("forcing_eta: gradient norm must be non-negative");
  if (schedule.mode == ForcingSchedule::Mode::constant) return schedule.eta_const;
  return std::min(schedule.eta_max, grad_norm);
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_iterations: return "max_iterations";
    case Termination::negative_curvature: return "negative_curvature";
    case Termination::breakdown: return "breakdown";
  }
  return "unknown";
}

namespace {

constexpr double kCurvatureTol = 1e-12;
constexpr double kTargetMargin = 1.0 - 1e-8;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t resolve_max_iter(std::size_t max_iter, std::size_t d) {
  return max_iter == 0 ? std::min<std::size_t>(d, 100) : max_iter;
}

void check_inputs(const LinearOperator& op, std::span<const double> b, double eta,
                  const char* who) {
  if (b.size() != op.dim) throw DimensionError(std::string(who) + ": right-hand side has wrong length");
  if (!all_finite(b)) throw ArgumentError(std::string(who) + ": right-hand side is not finite");
  if (!(eta >= 0.0)) throw ArgumentError(std::string(who) + ": eta must be non-negative");
}

double residual(std::span<const double> b, std::span<const double> ax) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double r = b[i] - ax[i];
    s += r * r;
  }
  return std::sqrt(s);
}

KrylovOutcome zero_rhs(std::size_t d) {
  KrylovOutcome out;
  out.step.assign(d, 0.0);
  out.min_rayleigh = kInf;
  out.residual_history = {0.0};
  return out;
}

// Negative curvature on the very first direction b: p₀ = 0 is no step at all,
// so take b scaled by min(1, ‖b‖²/|bᵀHb|).
void steepest_descent_fallback(KrylovOutcome& out, std::span<const double> b,
                               std::span<const double> hb) {
  const double bb = dot(b, b);
  const double bhb = std::abs(dot(b, hb));
  const double s = bhb > 0.0 ? std::min(1.0, bb / bhb) : 1.0;
  out.step.assign(b.begin(), b.end());
  scale(s, out.step);
  Vector ax(hb.begin(), hb.end());
  scale(s, ax);
  out.residual_norm = residual(b, ax);
  out.termination = Termination::negative_curvature;
  out.diagnostic = "negative curvature on the first direction; scaled steepest-descent step";
}

}  // namespace

KrylovOutcome cg_solve(const LinearOperator& op, std::span<const double> b, double eta,
                       std::size_t max_iter) {
  check_inputs(op, b, eta, "cg_solve");
  const std::size_t d = op.dim;
  max_iter = resolve_max_iter(max_iter, d);
  const double bnorm = norm(b);
  if (bnorm == 0.0) return zero_rhs(d);
  const double target = kTargetMargin * eta * bnorm;

  KrylovOutcome out;
  out.min_rayleigh = kInf;
  out.residual_history.push_back(bnorm);
  Vector x(d, 0.0);
  Vector ax(d, 0.0);
  Vector r(b.begin(), b.end());
  Vector dir = r;
  double rr = dot(r, r);
  out.termination = Termination::max_iterations;
  out.residual_norm = bnorm;

  for (std::size_t m = 0; m < max_iter; ++m) {
    const Vector ad = op(dir);
    ++out.iterations;
    const double dd = dot(dir, dir);
    const double dad = dot(dir, ad);
    if (!std::isfinite(dad)) {
      out.termination = Termination::breakdown;
      out.diagnostic = "non-finite curvature dᵀHd";
      break;
    }
    out.min_rayleigh = std::min(out.min_rayleigh, dad / dd);
    if (dad <= kCurvatureTol * dd) {
      if (m == 0) {
        steepest_descent_fallback(out, b, ad);
        return out;
      }
      out.termination = Termination::negative_curvature;
      break;
    }
    const double a = rr / dad;
    Vector x_next = x;
    axpy(a, dir, x_next);
    Vector ax_next = ax;
    axpy(a, ad, ax_next);
    axpy(-a, ad, r);
    const double rr_next = dot(r, r);
    if (!all_finite(x_next) || !std::isfinite(rr_next)) {
      out.termination = Termination::breakdown;
      out.diagnostic = "non-finite CG iterate";
      break;
    }
    x = std::move(x_next);
    ax = std::move(ax_next);
    out.residual_norm = residual(b, ax);
    out.residual_history.push_back(out.residual_norm);
    if (out.residual_norm <= target) {
      out.termination = Termination::tolerance;
      break;
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < d; ++i) dir[i] = r[i] + beta * dir[i];
  }
  out.step = std::move(x);
  out.residual_norm = residual(b, ax);
  return out;
}

// Paige-Saunders MINRES without preconditioning.
KrylovOutcome minres_solve(const LinearOperator& op, std::span<const double> b, double eta,
                           std::size_t max_iter) {
  check_inputs(op, b, eta, "minres_solve");
  const std::size_t d = op.dim;
  max_iter = resolve_max_iter(max_iter, d);
  const double bnorm = norm(b);
  if (bnorm == 0.0) return zero_rhs(d);
  const double target = kTargetMargin * eta * bnorm;

  KrylovOutcome out;
  out.min_rayleigh = kInf;
  out.residual_history.push_back(bnorm);
  out.termination = Termination::max_iterations;

  Vector v(b.begin(), b.end());
  scale(1.0 / bnorm, v);
  Vector v_old(d, 0.0);
  double beta = bnorm;
  double phibar = bnorm;
  double cs = -1.0;
  double sn = 0.0;
  double dbar = 0.0;
  double epsln = 0.0;
  Vector w(d, 0.0), w2(d, 0.0), aw(d, 0.0), aw2(d, 0.0);
  Vector x(d, 0.0), ax(d, 0.0);

  for (std::size_t k = 0; k < max_iter; ++k) {
    const Vector av = op(v);
    ++out.iterations;
    const double alpha = dot(v, av);
    if (!std::isfinite(alpha)) {
      out.termination = Termination::breakdown;
      out.diagnostic = "non-finite Lanczos coefficient";
      break;
    }
    out.min_rayleigh = std::min(out.min_rayleigh, alpha);
    if (alpha <= -kCurvatureTol) {
      if (k == 0) {
        Vector hb = av;
        scale(bnorm, hb);
        steepest_descent_fallback(out, b, hb);
        return out;
      }
      out.termination = Termination::negative_curvature;
      break;
    }
    Vector y = av;
    axpy(-alpha, v, y);
    axpy(-beta, v_old, y);
    const double beta_next = norm(y);

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alpha;
    const double gbar = sn * dbar - cs * alpha;
    epsln = sn * beta_next;
    dbar = -cs * beta_next;
    const double gamma = std::max(std::hypot(gbar, beta_next), std::numeric_limits<double>::min());
    cs = gbar / gamma;
    sn = beta_next / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    Vector w_new(d), aw_new(d);
    for (std::size_t i = 0; i < d; ++i) {
      w_new[i] = (v[i] - oldeps * w2[i] - delta * w[i]) / gamma;
      aw_new[i] = (av[i] - oldeps * aw2[i] - delta * aw[i]) / gamma;
    }
    axpy(phi, w_new, x);
    axpy(phi, aw_new, ax);
    w2 = std::move(w);
    w = std::move(w_new);
    aw2 = std::move(aw);
    aw = std::move(aw_new);
    if (!all_finite(x)) {
      out.termination = Termination::breakdown;
      out.diagnostic = "non-finite MINRES iterate";
      break;
    }
    out.residual_history.push_back(std::abs(phibar));
    const double res = residual(b, ax);
    if (res <= target) {
      out.termination = Termination::tolerance;
      break;
    }
    if (beta_next <= 1e-14 * std::max(1.0, std::abs(alpha))) {
      out.termination = Termination::breakdown;
      out.diagnostic = "Lanczos breakdown before reaching the tolerance";
      break;
    }
    v_old = std::move(v);
    v = std::move(y);
    scale(1.0 / beta_next, v);
    beta = beta_next;
  }
  if (!all_finite(x)) {
    std::fill(x.begin(), x.end(), 0.0);
    std::fill(ax.begin(), ax.end(), 0.0);
  }
  out.step = std::move(x);
  out.residual_norm = residual(b, ax);
  return out;
}

KrylovOutcome gmres_solve(const LinearOperator& op, std::span<const double> b, double eta,
                          std::size_t max_iter) {
  check_inputs(op, b, eta, "gmres_solve");
  const std::size_t d = op.dim;
  max_iter = resolve_max_iter(max_iter, d);
  const double bnorm = norm(b);
  if (bnorm == 0.0) return zero_rhs(d);
  const double target = kTargetMargin * eta * bnorm;

  KrylovOutcome out;
  out.min_rayleigh = kInf;
  out.residual_history.push_back(bnorm);
  out.termination = Termination::max_iterations;

  std::vector<Vector> basis, images;
  std::vector<Vector> rcols;  // rotated Hessenberg columns (upper triangular)
  Vector cs, sn;
  Vector g{bnorm};
  basis.emplace_back(b.begin(), b.end());
  scale(1.0 / bnorm, basis[0]);

  Vector x(d, 0.0), ax(d, 0.0);
  // x from the first `cols` basis vectors.
  auto form_solution = [&](std::size_t cols) -> bool {
    Vector y(cols, 0.0);
    for (std::size_t i = cols; i-- > 0;) {
      double s = g[i];
      for (std::size_t j = i + 1; j < cols; ++j) s -= rcols[j][i] * y[j];
      if (rcols[i][i] == 0.0) return false;
      y[i] = s / rcols[i][i];
    }
    Vector xn(d, 0.0), axn(d, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      axpy(y[j], basis[j], xn);
      axpy(y[j], images[j], axn);
    }
    if (!all_finite(xn)) return false;
    x = std::move(xn);
    ax = std::move(axn);
    return true;
  };

  for (std::size_t k = 0; k < max_iter; ++k) {
    Vector av = op(basis[k]);
    ++out.iterations;
    const double rq = dot(basis[k], av);
    if (!std::isfinite(rq)) {
      out.termination = Termination::breakdown;
      out.diagnostic = "non-finite Arnoldi vector";
      if (k > 0) form_solution(k);
      break;
    }
    out.min_rayleigh = std::min(out.min_rayleigh, rq);
    if (rq <= -kCurvatureTol) {
      if (k == 0) {
        Vector hb = av;
        scale(bnorm, hb);
        steepest_descent_fallback(out, b, hb);
        return out;
      }
      out.termination = Termination::negative_curvature;
      form_solution(k);
      break;
    }
    images.push_back(av);

    Vector h(k + 2, 0.0);
    Vector wv = av;
    for (std::size_t j = 0; j <= k; ++j) {
      h[j] = dot(basis[j], wv);
      axpy(-h[j], basis[j], wv);
    }
    auto orthogonality_loss = [&]() {
      const double wn = norm(wv);
      if (wn == 0.0) return 0.0;
      double worst = 0.0;
      for (std::size_t j = 0; j <= k; ++j) worst = std::max(worst, std::abs(dot(basis[j], wv)) / wn);
      return worst;
    };
    // Once the basis spans R^d the remainder is rounding noise: treat it as
    // an invariant subspace instead of checking its orthogonality.
    const bool exhausted = k + 1 >= d;
    if (exhausted) std::fill(wv.begin(), wv.end(), 0.0);
    if (!exhausted && orthogonality_loss() > 1e-8) {
      for (std::size_t j = 0; j <= k; ++j) {
        const double c = dot(basis[j], wv);
        h[j] += c;
        axpy(-c, basis[j], wv);
      }
      if (norm(wv) <= 1e-12 * norm(av)) {
        std::fill(wv.begin(), wv.end(), 0.0);
      } else if (orthogonality_loss() > 1e-8) {
        out.termination = Termination::breakdown;
        out.diagnostic = "Arnoldi basis lost orthogonality after re-orthogonalization";
        if (k > 0) form_solution(k);
        break;
      }
    }
    const double hnext = norm(wv);
    h[k + 1] = hnext;

    for (std::size_t i = 0; i < k; ++i) {
      const double t = cs[i] * h[i] + sn[i] * h[i + 1];
      h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
      h[i] = t;
    }
    const double rho = std::hypot(h[k], h[k + 1]);
    if (rho == 0.0) {
      out.termination = Termination::breakdown;
      out.diagnostic = "singular Hessenberg matrix";
      if (k > 0) form_solution(k);
      break;
    }
    cs.push_back(h[k] / rho);
    sn.push_back(h[k + 1] / rho);
    h[k] = rho;
    h[k + 1] = 0.0;
    g.push_back(-sn[k] * g[k]);
    g[k] = cs[k] * g[k];
    h.pop_back();
    rcols.push_back(std::move(h));

    const double estimate = std::abs(g[k + 1]);
    out.residual_history.push_back(estimate);
    const bool happy = exhausted || hnext <= 1e-14 * norm(av);
    const bool last = k + 1 == max_iter;
    if (estimate <= target || happy || last) {
      if (!form_solution(k + 1)) {
        out.termination = Termination::breakdown;
        out.diagnostic = "non-finite GMRES iterate";
        break;
      }
      if (residual(b, ax) <= target) {
        out.termination = Termination::tolerance;
        break;
      }
      if (happy) {
        out.termination = Termination::breakdown;
        out.diagnostic = "invariant subspace reached above the tolerance";
        break;
      }
      if (last) break;
    }
    scale(1.0 / hnext, wv);
    basis.push_back(std::move(wv));
  }
  out.step = std::move(x);
  out.residual_norm = residual(b, ax);
  return out;
}

KrylovOutcome krylov_solve(KrylovMethod method, const LinearOperator& op,
                           std::span<const double> b, double eta, std::size_t max_iter) {
  switch (method) {
    case KrylovMethod::cg: return cg_solve(op, b, eta, max_iter);
    case KrylovMethod::minres: return minres_solve(op, b, eta, max_iter);
    case KrylovMethod::gmres: return gmres_solve(op, b, eta, max_iter);
  }
  throw ArgumentError("unknown Krylov method");
}

PolynomialCheckReport krylov_polynomial_check(const DenseMatrix& a, std::span<const double> b,
                                              std::size_t m, SeededRng& rng,
                                              std::size_t samples) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw DimensionError("krylov_polynomial_check: shape mismatch");
  if (m == 0 || m > n) throw ArgumentError("krylov_polynomial_check: need 1 <= m <= d");
  const SymEig eig = sym_eig(a);
  double lmin = kInf, lmax = -kInf;
  for (double l : eig.values) {
    lmin = std::min(lmin, l);
    lmax = std::max(lmax, l);
  }
  if (!(lmin > 0.0)) throw ContractError("krylov_polynomial_check: matrix must be positive definite");

  // x* = A⁻¹ b from the eigendecomposition; e₀ = x*, r₀ = b.
  Vector ub(n), xstar(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += eig.vectors(i, k) * b[i];
    ub[k] = c;
    for (std::size_t i = 0; i < n; ++i) xstar[i] += eig.vectors(i, k) * c / eig.values[k];
  }

  const LinearOperator op = matrix_operator(a);
  PolynomialCheckReport rep;
  rep.samples = samples;
  const KrylovOutcome cg = cg_solve(op, b, 0.0, m);
  Vector e = xstar;
  axpy(-1.0, cg.step, e);
  rep.cg_error_sq = dot(e, a.multiply(e));
  const KrylovOutcome gm = gmres_solve(op, b, 0.0, m);
  const Vector agm = a.multiply(gm.step);
  rep.gmres_residual_sq = std::pow(residual(b, agm), 2);

  // Absolute slack for the rounding in the solvers and in the sums.
  const double scale_cg = dot(b, xstar);
  const double scale_gm = dot(b, b);
  const double slack = 1e-10;
  rep.cg_min_sampled = kInf;
  rep.gmres_min_sampled = kInf;
  for (std::size_t s = 0; s < samples; ++s) {
    Vector roots(m);
    for (double& t : roots) t = lmin + (lmax - lmin) * rng.uniform();
    double cg_sum = 0.0, gm_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double q = 1.0;
      for (double t : roots) q *= 1.0 - eig.values[k] / t;
      const double c = ub[k];
      // uᵀe₀ = uᵀb / λ
      cg_sum += eig.values[k] * q * q * (c / eig.values[k]) * (c / eig.values[k]);
      gm_sum += q * q * c * c;
    }
    rep.cg_min_sampled = std::min(rep.cg_min_sampled, cg_sum);
    rep.gmres_min_sampled = std::min(rep.gmres_min_sampled, gm_sum);
    if (cg_sum < rep.cg_error_sq - slack * scale_cg) ++rep.cg_violations;
    if (gm_sum < rep.gmres_residual_sq - slack * scale_gm) ++rep.gmres_violations;
  }
  return rep;
}

}  // namespace snk

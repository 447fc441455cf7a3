// Implicit Newmark time stepping for small n-DOF systems, 1-D material
// relations (elasticity, piecewise-linear hardening, deviatoric split,
// strain energy), and the synthetic impact scenario that produces the frame
// sequences the rest of the pipeline consumes.
//
// Everything here runs in double regardless of the network precision; the
// solver is cheap and its frames must not depend on the training mode.

#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/image.hpp"
#include "erec/tensor.hpp"

namespace erec {

using Vec = std::vector<double>;

// Dense LU solve with partial pivoting; A is [n,n] row-major and is consumed.
inline Vec solve_linear(Tensor<double> a, Vec b) {
  const int n = static_cast<int>(b.size());
  if (a.ndim() != 2 || a.dim(0) != n || a.dim(1) != n)
    throw std::invalid_argument("solve_linear: matrix is " + shape_string(a.shape()) + " for rhs of length " +
                                std::to_string(n));
  double scale = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) scale = std::max(scale, std::abs(a[i]));
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) <= 1e-14 * std::max(scale, 1.0))
      throw std::runtime_error("solve_linear: singular matrix (pivot column " + std::to_string(col) + ")");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
      std::swap(b[col], b[pivot]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j) s -= a[r * n + j] * x[j];
    x[r] = s / a[r * n + r];
  }
  return x;
}

inline Vec mat_vec(const Tensor<double>& m, const Vec& v) {
  const int n = static_cast<int>(v.size());
  Vec out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += m[i * n + j] * v[j];
    out[i] = s;
  }
  return out;
}

struct DynamicSystem {
  Tensor<double> mass, damping, stiffness;  // [n,n] each
  std::function<Vec(double)> force;         // time -> n-vector

  int size() const { return mass.dim(0); }
  Vec force_at(double t) const { return force ? force(t) : Vec(size(), 0.0); }
};

struct DynamicState {
  double time = 0.0;
  Vec r, v, a;  // displacement, velocity, acceleration

  bool finite() const {
    for (const auto& vec : {&r, &v, &a})
      for (double x : *vec)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

struct NewmarkCoefficients {
  double beta, gamma, dt;
  double a0, a1, a2, a3, a4, a5, a6, a7;
};

inline NewmarkCoefficients newmark_coefficients(double beta, double gamma, double dt) {
  if (beta <= 0.0) throw std::invalid_argument("newmark_coefficients: beta must be positive");
  if (dt <= 0.0) throw std::invalid_argument("newmark_coefficients: dt must be positive");
  NewmarkCoefficients c{};
  c.beta = beta;
  c.gamma = gamma;
  c.dt = dt;
  c.a0 = 1.0 / (beta * dt * dt);
  c.a1 = gamma / (beta * dt);
  c.a2 = 1.0 / (beta * dt);
  c.a3 = 1.0 / (2.0 * beta) - 1.0;
  c.a4 = gamma / beta - 1.0;
  c.a5 = dt * (gamma / (2.0 * beta) - 1.0);
  c.a6 = dt * (1.0 - gamma);
  c.a7 = gamma * dt;
  return c;
}

// a(0) = M^-1 [F(0) - C v(0) - K r(0)]
inline Vec initial_acceleration(const DynamicSystem& sys, const Vec& r0, const Vec& v0) {
  const int n = sys.size();
  if (static_cast<int>(r0.size()) != n || static_cast<int>(v0.size()) != n)
    throw std::invalid_argument("initial_acceleration: state length does not match system size");
  Vec rhs = sys.force_at(0.0);
  const Vec cv = mat_vec(sys.damping, v0);
  const Vec kr = mat_vec(sys.stiffness, r0);
  for (int i = 0; i < n; ++i) rhs[i] -= cv[i] + kr[i];
  return solve_linear(sys.mass, rhs);
}

// One implicit step: solve (K + a0 M + a1 C) r' = F(t+dt) + M(a0 r + a2 v + a3 a)
// + C(a1 r + a4 v + a5 a), then update acceleration and velocity.
inline DynamicState newmark_step(const DynamicState& state, const DynamicSystem& sys,
                                 const NewmarkCoefficients& c) {
  const int n = sys.size();
  if (static_cast<int>(state.r.size()) != n)
    throw std::invalid_argument("newmark_step: state length does not match system size");
  Tensor<double> keff({n, n});
  for (int i = 0; i < n * n; ++i)
    keff[i] = sys.stiffness[i] + c.a0 * sys.mass[i] + c.a1 * sys.damping[i];

  Vec rhs = sys.force_at(state.time + c.dt);
  Vec tmp(n);
  for (int i = 0; i < n; ++i) tmp[i] = c.a0 * state.r[i] + c.a2 * state.v[i] + c.a3 * state.a[i];
  const Vec m_part = mat_vec(sys.mass, tmp);
  for (int i = 0; i < n; ++i) tmp[i] = c.a1 * state.r[i] + c.a4 * state.v[i] + c.a5 * state.a[i];
  const Vec c_part = mat_vec(sys.damping, tmp);
  for (int i = 0; i < n; ++i) rhs[i] += m_part[i] + c_part[i];

  DynamicState next;
  next.time = state.time + c.dt;
  next.r = solve_linear(keff, rhs);
  next.a.resize(n);
  next.v.resize(n);
  for (int i = 0; i < n; ++i)
    next.a[i] = c.a0 * (next.r[i] - state.r[i]) - c.a2 * state.v[i] - c.a3 * state.a[i];
  for (int i = 0; i < n; ++i) next.v[i] = state.v[i] + c.a6 * state.a[i] + c.a7 * next.a[i];
  if (!next.finite()) throw std::runtime_error("newmark_step: non-finite state after step");
  return next;
}

// ---- material relations ----

inline double shear_modulus(double e, double nu) {
  if (e <= 0.0) throw std::invalid_argument("shear_modulus: E must be positive");
  if (nu <= -1.0) throw std::invalid_argument("shear_modulus: nu must exceed -1");
  return e / (2.0 * (1.0 + nu));
}

struct Material1D {
  double e = 0.0;   // MPa
  double nu = 0.0;
  std::vector<std::pair<double, double>> hardening;  // (plastic strain, yield stress MPa)

  void validate() const {
    if (e <= 0.0) throw std::invalid_argument("material: E must be positive");
    if (nu <= 0.0 || nu >= 0.5) throw std::invalid_argument("material: nu must lie in (0, 0.5)");
    if (hardening.empty() || hardening.front().first != 0.0)
      throw std::invalid_argument("material: hardening must start at zero plastic strain");
    for (std::size_t i = 1; i < hardening.size(); ++i)
      if (hardening[i].first <= hardening[i - 1].first || hardening[i].second <= hardening[i - 1].second)
        throw std::invalid_argument("material: hardening rows must increase in both columns");
  }

  double max_yield_stress() const { return hardening.back().second; }

  // Al alloy 6061-T6
  static Material1D aluminum6061() {
    Material1D m;
    m.e = 71275.0;
    m.nu = 0.33;
    m.hardening = {{0.0, 241.5},    {0.0069, 263.0}, {0.0217, 278.8}, {0.0921, 318.8}, {0.1408, 346.7},
                   {0.1914, 374.5}, {0.2181, 388.8}, {0.2862, 423.8}, {0.3728, 464.3}, {0.4078, 473.6}};
    return m;
  }
};

// Piecewise-linear hardening lookup; constant beyond the last row.
inline double uniaxial_yield_stress(double plastic_strain, const Material1D& mat) {
  if (plastic_strain < 0.0) throw std::invalid_argument("uniaxial_yield_stress: plastic strain must be >= 0");
  const auto& h = mat.hardening;
  if (plastic_strain >= h.back().first) return h.back().second;
  std::size_t k = 1;
  while (h[k].first < plastic_strain) ++k;
  const double t = (plastic_strain - h[k - 1].first) / (h[k].first - h[k - 1].first);
  return h[k - 1].second + t * (h[k].second - h[k - 1].second);
}

// sigma = {sx, sy, sz, sxy, sxz, syz} -> engineering strains, isotropic
// compliance: normal eps_i = (s_i - nu (s_j + s_k))/E, shear gamma = tau/G.
inline std::array<double, 6> strain_from_stress(const std::array<double, 6>& s, double e, double nu) {
  if (e <= 0.0) throw std::invalid_argument("strain_from_stress: E must be positive");
  const double g = shear_modulus(e, nu);
  return {(s[0] - nu * (s[1] + s[2])) / e, (s[1] - nu * (s[0] + s[2])) / e, (s[2] - nu * (s[0] + s[1])) / e,
          s[3] / g, s[4] / g, s[5] / g};
}

// S = sigma - tr(sigma)/3 * I
inline Tensor<double> deviatoric_stress(const Tensor<double>& sigma) {
  if (sigma.ndim() != 2 || sigma.dim(0) != 3 || sigma.dim(1) != 3)
    throw std::invalid_argument("deviatoric_stress: expected a 3x3 tensor");
  double scale = 0.0;
  for (int i = 0; i < 9; ++i) scale = std::max(scale, std::abs(sigma[i]));
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (std::abs(sigma[i * 3 + j] - sigma[j * 3 + i]) > 1e-9 * std::max(scale, 1.0))
        throw std::invalid_argument("deviatoric_stress: input is not symmetric");
  const double mean = (sigma[0] + sigma[4] + sigma[8]) / 3.0;
  Tensor<double> s = sigma;
  s[0] -= mean;
  s[4] -= mean;
  s[8] -= mean;
  return s;
}

// Trapezoidal integral of sigma d(eps) along a monotone loading path.
inline double strain_energy_density(const std::vector<std::pair<double, double>>& path) {
  if (path.empty()) return 0.0;
  if (path.front().first != 0.0 || path.front().second != 0.0)
    throw std::invalid_argument("strain_energy_density: path must start at (0,0)");
  double w = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double de = path[i].first - path[i - 1].first;
    if (de < 0.0) throw std::invalid_argument("strain_energy_density: strain must be non-decreasing");
    w += 0.5 * de * (path[i].second + path[i - 1].second);
  }
  return w;
}

// ---- 1-D elastoplastic element state (rendering post-process) ----

struct ElementPlasticity {
  double plastic_strain = 0.0;     // signed
  double accumulated = 0.0;        // |d eps_p| summed
  double peak_stress = 0.0;        // running max |sigma|

  // Radial-return update for total strain eps; returns current stress.
  double update(double eps, const Material1D& mat) {
    const double trial = mat.e * (eps - plastic_strain);
    const double y = uniaxial_yield_stress(accumulated, mat);
    double sigma = trial;
    if (std::abs(trial) > y) {
      const double dp = solve_return(std::abs(trial), mat);
      const double sgn = trial >= 0.0 ? 1.0 : -1.0;
      plastic_strain += sgn * dp;
      accumulated += dp;
      sigma = sgn * uniaxial_yield_stress(accumulated, mat);
    }
    peak_stress = std::max(peak_stress, std::abs(sigma));
    return sigma;
  }

 private:
  // Solves |trial| - E dp = Y(accumulated + dp) for dp >= 0 segment by
  // segment; hardening is piecewise linear so each segment is closed-form.
  double solve_return(double abs_trial, const Material1D& mat) const {
    const auto& h = mat.hardening;
    for (std::size_t k = 1; k < h.size(); ++k) {
      if (h[k].first <= accumulated) continue;
      const double p0 = std::max(accumulated, h[k - 1].first);
      const double y0 = uniaxial_yield_stress(p0, mat);
      const double slope = (h[k].second - h[k - 1].second) / (h[k].first - h[k - 1].first);
      const double dp = (abs_trial - y0) / (mat.e + slope);
      if (accumulated + dp <= h[k].first) return std::max(dp, 0.0);
    }
    return (abs_trial - h.back().second) / mat.e;  // past the table: perfectly plastic
  }
};

// ---- synthetic impact scenario ----

// A chain of point masses travelling toward a unilateral stop spring on the
// first node. Chain springs stay linear in the solver; element stresses for
// rendering go through the hardening law above.
struct Scenario {
  std::string units = "t-mm-s";      // tonne, millimetre, second (forces in N, stress MPa)
  int nodes = 8;
  double mass = 2.5e-4;              // t per node
  double stiffness = 1200.0;         // N/mm per chain spring
  double damping = 2e-4;             // stiffness-proportional damping factor, s
  double initial_velocity = -8000.0; // mm/s, negative drives the chain into the stop
  double stop_stiffness = 4000.0;    // N/mm, compression only
  double element_length = 10.0;      // mm, turns elongation into strain
  double dt = 1e-6;                  // s
  double duration = 2e-3;            // s
  int frame_stride = 10;             // record every k-th step
  long warmup_steps = 0;             // steps integrated before the first recorded frame
  int frame_height = 64, frame_width = 64;
  Material1D material = Material1D::aluminum6061();

  long step_count() const { return static_cast<long>(duration / dt); }
  long frame_count() const { return (step_count() - warmup_steps) / frame_stride + 1; }

  void validate() const {
    if (units != "t-mm-s") throw std::invalid_argument("scenario: unsupported unit system '" + units + "'");
    if (nodes < 2) throw std::invalid_argument("scenario: need at least 2 nodes");
    if (mass <= 0.0 || stiffness <= 0.0 || stop_stiffness < 0.0 || element_length <= 0.0)
      throw std::invalid_argument("scenario: mass, stiffness and element length must be positive");
    if (dt <= 0.0 || duration <= dt) throw std::invalid_argument("scenario: need duration > dt > 0");
    if (frame_stride < 1) throw std::invalid_argument("scenario: frame stride must be >= 1");
    if (warmup_steps < 0 || warmup_steps >= step_count())
      throw std::invalid_argument("scenario: warmup must lie inside the integrated step range");
    if (frame_height < 1 || frame_width < 1) throw std::invalid_argument("scenario: frame size must be positive");
    material.validate();
    if (frame_count() < 10) throw std::invalid_argument("scenario: fewer than 10 frames; extend duration");
  }
};

namespace detail {

inline Tensor<double> chain_stiffness(int n, double k) {
  Tensor<double> m({n, n});
  for (int i = 0; i + 1 < n; ++i) {
    m[i * n + i] += k;
    m[(i + 1) * n + (i + 1)] += k;
    m[i * n + (i + 1)] -= k;
    m[(i + 1) * n + i] -= k;
  }
  return m;
}

}  // namespace detail

// Runs the scenario and renders one frame every frame_stride steps (step 0
// included). Objective and pixel values are the per-element peak stresses so
// far, shown on a fixed range up to the material's final yield stress.
inline FrameSequence<double> generate_sequence(const Scenario& sc) {
  sc.validate();
  const int n = sc.nodes;
  Tensor<double> mass({n, n});
  for (int i = 0; i < n; ++i) mass[i * n + i] = sc.mass;
  const Tensor<double> k_chain = detail::chain_stiffness(n, sc.stiffness);
  Tensor<double> damping({n, n});
  for (int i = 0; i < n * n; ++i) damping[i] = sc.damping * k_chain[i];

  const auto coeffs = newmark_coefficients(0.25, 0.5, sc.dt);
  DynamicState state;
  state.r.assign(n, 0.0);
  state.v.assign(n, sc.initial_velocity);
  state.a.assign(n, 0.0);

  std::vector<ElementPlasticity> elements(n - 1);
  const ValueRange range{0.0, sc.material.max_yield_stress()};
  const long steps = sc.step_count();

  FrameSequence<double> seq;
  seq.source = "impact-chain";
  double objective = 0.0;
  auto record = [&](long step) {
    std::vector<double> values(elements.size());
    for (std::size_t e = 0; e < elements.size(); ++e) values[e] = elements[e].peak_stress;
    Frame<double> f = render_field(values, range, sc.frame_height, sc.frame_width);
    f.meta.iteration_index = static_cast<int>(seq.frames.size());
    f.meta.time = step * sc.dt;
    f.meta.objective = objective;
    seq.frames.push_back(std::move(f));
  };

  auto update_elements = [&]() {
    for (std::size_t e = 0; e < elements.size(); ++e) {
      const double strain = (state.r[e + 1] - state.r[e]) / sc.element_length;
      elements[e].update(strain, sc.material);
      objective = std::max(objective, elements[e].peak_stress);
    }
  };

  update_elements();
  if (sc.warmup_steps == 0) record(0);
  DynamicSystem sys{mass, damping, k_chain, nullptr};
  for (long step = 1; step <= steps; ++step) {
    // unilateral stop: active only while the first node is pushed in
    const bool contact = state.r[0] < 0.0;
    if (contact) {
      Tensor<double> k_total = k_chain;
      k_total[0] += sc.stop_stiffness;
      sys.stiffness = std::move(k_total);
    } else {
      sys.stiffness = k_chain;
    }
    try {
      state = newmark_step(state, sys, coeffs);
    } catch (const std::exception& e) {
      throw std::runtime_error("generate_sequence: step " + std::to_string(step) + ": " + e.what());
    }
    update_elements();
    if (step >= sc.warmup_steps && (step - sc.warmup_steps) % sc.frame_stride == 0) record(step);
  }
  seq.validate();
  return seq;
}

}  // namespace erec

#include "immunokit/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::dynamics {

namespace {

using State4 = std::array<double, 4>;

State4 pack(const ImmuneState& s) { return {s.t_cells, s.infected, s.effectors, s.virus}; }
ImmuneState unpack(const State4& x) { return {x[0], x[1], x[2], x[3]}; }

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

std::size_t step_count(double duration, double step) {
  if (!finite_positive(step)) throw ValidationError("integration step must be positive");
  if (!finite_positive(duration)) throw ValidationError("duration must be positive");
  const double n = std::ceil(duration / step - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

// Fixed-step RK4 on an N-vector with clamping at zero.
template <typename State, typename Deriv>
void integrate(State x, double duration, double step, const Deriv& f,
               std::vector<double>& times, std::vector<State>& states) {
  const std::size_t n = step_count(duration, step);
  times.reserve(n + 1);
  states.reserve(n + 1);
  times.push_back(0.0);
  states.push_back(x);
  double t = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double t_next = k == n ? duration : static_cast<double>(k) * step;
    const double dt = t_next - t;
    State k1 = f(t, x), tmp = x;
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    State k2 = f(t + 0.5 * dt, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    State k3 = f(t + 0.5 * dt, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + dt * k3[i];
    State k4 = f(t + dt, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(x[i])) {
        throw NumericError("non-finite state at t = " + format_number(t_next) + " days");
      }
      x[i] = std::max(0.0, x[i]);
    }
    t = t_next;
    times.push_back(t);
    states.push_back(x);
  }
}

}  // namespace

void ProliferationParams::validate() const {
  if (!finite_positive(rho)) throw ValidationError("rho must be positive");
  if (!finite_positive(h)) throw ValidationError("h must be positive");
  if (!finite_positive(t0_cells)) throw ValidationError("initial T-cell count must be positive");
  if (!finite_positive(duration_days)) throw ValidationError("duration must be positive");
  if (!finite_positive(step)) throw ValidationError("integration step must be positive");
  if (exhaustion) {
    if (!finite_positive(exhaustion->k_ex)) throw ValidationError("k_ex must be positive");
    if (!(std::isfinite(exhaustion->n_ex) && exhaustion->n_ex >= 1.0)) {
      throw ValidationError("n_ex must be at least 1");
    }
  }
}

double saturating_rate(double antigen, const ProliferationParams& params) {
  if (!(antigen >= 0.0)) throw ValidationError("antigen concentration must be non-negative");
  if (std::isinf(antigen)) {
    return params.exhaustion ? 0.0 : params.rho;
  }
  double rate = params.rho * antigen / (params.h + antigen);
  if (params.exhaustion) {
    rate /= 1.0 + std::pow(antigen / params.exhaustion->k_ex, params.exhaustion->n_ex);
  }
  return rate;
}

Trajectory simulate_proliferation(const ProliferationParams& params, const AntigenProfile& antigen) {
  params.validate();
  if (!antigen) throw ValidationError("antigen profile is empty");
  Trajectory traj;
  std::vector<std::array<double, 1>> states;
  integrate(std::array<double, 1>{params.t0_cells}, params.duration_days, params.step,
            [&](double t, const std::array<double, 1>& x) {
              return std::array<double, 1>{saturating_rate(antigen(t), params) * x[0]};
            },
            traj.times, states);
  traj.states.reserve(states.size());
  for (const auto& s : states) traj.states.push_back(ImmuneState{s[0], 0.0, 0.0, 0.0});
  return traj;
}

Trajectory simulate_proliferation(const ProliferationParams& params, double antigen) {
  if (!(antigen >= 0.0)) throw ValidationError("antigen concentration must be non-negative");
  return simulate_proliferation(params, AntigenProfile([antigen](double) { return antigen; }));
}

std::vector<SweepPoint> dose_sweep(const ProliferationParams& params,
                                   const std::vector<double>& antigen_grid) {
  if (antigen_grid.empty()) throw ValidationError("antigen grid is empty");
  for (std::size_t i = 0; i < antigen_grid.size(); ++i) {
    if (!(antigen_grid[i] >= 0.0)) throw ValidationError("antigen grid values must be non-negative");
    if (i && !(antigen_grid[i] > antigen_grid[i - 1])) {
      throw ValidationError("antigen grid must be increasing");
    }
  }
  std::vector<SweepPoint> out;
  out.reserve(antigen_grid.size());
  for (double a : antigen_grid) {
    out.push_back({a, simulate_proliferation(params, a).states.back().t_cells});
  }
  return out;
}

std::optional<double> half_response_antigen(const std::vector<SweepPoint>& sweep, double t0_cells) {
  double best = 0.0;
  for (const auto& p : sweep) best = std::max(best, std::log(p.final_t_cells / t0_cells));
  if (!(best > 0.0)) return std::nullopt;
  for (const auto& p : sweep) {
    if (std::log(p.final_t_cells / t0_cells) >= 0.5 * best) return p.antigen;
  }
  return std::nullopt;
}

void Cd8Params::validate() const {
  for (double v : {beta_T, beta_TV, p, k_IE, rho_I, c_v}) {
    if (!(std::isfinite(v) && v >= 0.0)) throw ValidationError("CD8 rate constants must be non-negative");
  }
  if (!(c_v > 0.0)) throw ValidationError("virus clearance rate c_v must be positive");
}

Trajectory simulate_cd8(const Cd8Params& params, const ImmuneState& initial, double duration_days,
                        double step) {
  params.validate();
  for (double v : pack(initial)) {
    if (!(std::isfinite(v) && v >= 0.0)) throw ValidationError("initial state must be non-negative");
  }
  Trajectory traj;
  std::vector<State4> states;
  integrate(pack(initial), duration_days, step,
            [&params](double, const State4& x) {
              const double T = x[0], I = x[1], E = x[2], V = x[3];
              return State4{params.beta_TV * T * V, params.beta_T * V - params.k_IE * I * E,
                            params.rho_I * I, params.p * I - params.c_v * V};
            },
            traj.times, states);
  traj.states.reserve(states.size());
  for (const auto& s : states) traj.states.push_back(unpack(s));
  return traj;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::clearance:
      return "clearance";
    case Outcome::persistence:
      return "persistence";
    case Outcome::resurgence:
      return "resurgence";
  }
  return "unknown";
}

Outcome classify_outcome(const Trajectory& traj, double detection_limit) {
  if (traj.size() < 10) throw ValidationError("outcome classification needs at least 10 samples");
  bool dropped = false;
  for (const auto& s : traj.states) {
    if (s.virus < detection_limit) {
      dropped = true;
    } else if (dropped) {
      return Outcome::resurgence;
    }
  }
  return dropped ? Outcome::clearance : Outcome::persistence;
}

ConvergenceCheck cd8_convergence(const Cd8Params& params, const ImmuneState& initial,
                                 double duration_days, double step) {
  const auto coarse = simulate_cd8(params, initial, duration_days, step);
  const auto fine = simulate_cd8(params, initial, duration_days, step / 2.0);
  const auto ref = simulate_cd8(params, initial, duration_days, step / 16.0);
  auto max_error = [&](const Trajectory& traj, std::size_t stride) {
    double err = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      // The final sample is shared by every grid even when shortened.
      const std::size_t r = k + 1 == traj.size() ? ref.size() - 1 : k * stride;
      const auto a = pack(traj.states[k]);
      const auto b = pack(ref.states[r]);
      for (std::size_t i = 0; i < 4; ++i) err = std::max(err, std::abs(a[i] - b[i]));
    }
    return err;
  };
  ConvergenceCheck c;
  c.step = step;
  c.error_coarse = max_error(coarse, 16);
  c.error_fine = max_error(fine, 8);
  c.ratio = c.error_fine > 0.0 ? c.error_coarse / c.error_fine : 0.0;
  return c;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool cd8) {
  out << (cd8 ? "t,T,I,E,V\n" : "t,T\n");
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& s = traj.states[k];
    out << format_number(traj.times[k]) << ',' << format_number(s.t_cells);
    if (cd8) {
      out << ',' << format_number(s.infected) << ',' << format_number(s.effectors) << ','
          << format_number(s.virus);
    }
    out << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& sweep) {
  out << "antigen,final_T\n";
  for (const auto& p : sweep) out << format_number(p.antigen) << ',' << format_number(p.final_t_cells) << '\n';
}

}  // namespace immunokit::dynamics

#pragma once

// Antigen-driven T-cell proliferation and a four-compartment CD8+ response
// model, both integrated with fixed-step RK4 and clamped at zero after every
// step.
//
// Proliferation:  dT/dt = r(I) T,  r(I) = rho I / (h + I) [* 1 / (1 + (I / k_ex)^n_ex)]
//
// CD8 model, one term per named interaction:
//   dT/dt = beta_TV T V        T cells stimulated by viral load
//   dI/dt = beta_T V - k_IE I E    virus infects cells; effectors kill them
//   dE/dt = rho_I I            effectors activated by infected cells
//   dV/dt = p I - c_v V        production by infected cells, clearance

#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace immunokit::dynamics {

inline constexpr double kDefaultStep = 0.01;

struct Exhaustion {
  double k_ex = 1.0;  // antigen level of half suppression
  double n_ex = 2.0;  // Hill exponent, >= 1
};

struct ProliferationParams {
  double rho = 1.0;
  double h = 0.01;
  double t0_cells = 100.0;
  double duration_days = 7.0;
  double step = kDefaultStep;
  std::optional<Exhaustion> exhaustion;

  void validate() const;
};

double saturating_rate(double antigen, const ProliferationParams& params);

struct ImmuneState {
  double t_cells = 0.0;
  double infected = 0.0;
  double effectors = 0.0;
  double virus = 0.0;

  friend bool operator==(const ImmuneState&, const ImmuneState&) = default;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ImmuneState> states;

  std::size_t size() const { return times.size(); }
};

using AntigenProfile = std::function<double(double t)>;

// Only t_cells is populated.
Trajectory simulate_proliferation(const ProliferationParams& params, double antigen);
Trajectory simulate_proliferation(const ProliferationParams& params, const AntigenProfile& antigen);

struct SweepPoint {
  double antigen = 0.0;
  double final_t_cells = 0.0;
};

std::vector<SweepPoint> dose_sweep(const ProliferationParams& params,
                                   const std::vector<double>& antigen_grid);

// Smallest grid antigen whose log-expansion ln(T/T0) reaches half of the
// sweep's largest; empty if the sweep shows no expansion.
std::optional<double> half_response_antigen(const std::vector<SweepPoint>& sweep, double t0_cells);

struct Cd8Params {
  double beta_T = 0.5;
  double beta_TV = 0.01;
  double p = 10.0;
  double k_IE = 1.0;
  double rho_I = 0.5;
  double c_v = 3.0;

  void validate() const;
};

inline constexpr ImmuneState kDefaultCd8Initial{100.0, 0.0, 1.0, 1.0};
inline constexpr double kDefaultCd8Days = 30.0;

// Samples every `step` days (the last interval is shortened to end exactly
// at duration_days). Throws NumericError naming the time of a non-finite state.
Trajectory simulate_cd8(const Cd8Params& params, const ImmuneState& initial,
                        double duration_days = kDefaultCd8Days, double step = kDefaultStep);

enum class Outcome { clearance, persistence, resurgence };
std::string_view to_string(Outcome outcome);

// Needs at least 10 samples. A trajectory whose virus never exceeds the
// limit counts as clearance.
Outcome classify_outcome(const Trajectory& trajectory, double detection_limit);

struct ConvergenceCheck {
  double step = 0.0;
  double error_coarse = 0.0;  // max |x_h - x_ref| over shared sample times
  double error_fine = 0.0;    // same for step / 2
  double ratio = 0.0;         // error_coarse / error_fine, ~16 for RK4
};

// Self-convergence of simulate_cd8 against a step / 16 reference.
ConvergenceCheck cd8_convergence(const Cd8Params& params, const ImmuneState& initial,
                                 double duration_days, double step);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, bool cd8);
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& sweep);

}  // namespace immunokit::dynamics

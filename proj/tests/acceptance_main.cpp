// Acceptance harness: one line of output per criterion, PASS or FAIL, with
// the measured numbers inline. Returns the number of failed criteria, so a
// zero exit status means the full slate holds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavcon/cli.hpp"
#include "cavcon/dynamics.hpp"
#include "cavcon/protocol.hpp"
#include "cavcon/trajectories.hpp"

using namespace cavcon;

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr std::uint64_t kMcSeed = 1;

const std::vector<double> kGridA = {0.3, 0.6, kInvSqrt2};
const std::vector<double> kGridK = {0.05, 0.1, 0.2};
const std::vector<double> kGridT2 = {1.0, 2.0, 5.0};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  va_list args;
  va_start(args, format);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return std::string(buf);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

ProtocolConfig matched_config(double a, double k, double t2) {
  const InputPair pair(Complex(a, 0.0), Complex(std::sqrt(1.0 - a * a), 0.0));
  return ProtocolConfig(pair, pair, DynamicsParams(1.0, k), t2);
}

ProtocolConfig unmatched_config(double a, double c, double k, double t2) {
  const InputPair p12(Complex(a, 0.0), Complex(std::sqrt(1.0 - a * a), 0.0));
  const InputPair p34(Complex(c, 0.0), Complex(std::sqrt(1.0 - c * c), 0.0));
  return ProtocolConfig(p12, p34, DynamicsParams(1.0, k), t2);
}

// Single click registered exactly at t2, reduced and normalized.
DensityMatrix click_at_t2_rho(const ProtocolConfig& cfg, Detector det) {
  const Step1Outcome s1 = run_step1(cfg);
  const NoClickOutcome quiet = detection_no_click(s1.state, cfg, cfg.t2);
  StateVector clicked = click_jump(quiet.state, det);
  if (det == Detector::minus) clicked = phase_correct(clicked);
  return reduce_rho24(clicked).normalized();
}

// criterion 1: the lossless limit transfers the full excitation, fast.
void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  const DynamicsParams nearly_lossless(1.0, 1e-9);
  const TransferSolution ts = solve_transfer(nearly_lossless);
  const ProtocolConfig cfg = matched_config(kInvSqrt2, 1e-9, 2.0);
  const Step1Outcome s1 = run_step1(cfg);
  const double elapsed = seconds_since(start);
  const bool pass = std::abs(ts.alpha) >= 1.0 - 1e-6 &&
                    s1.p_step1 >= 1.0 - 1e-6 && elapsed < 1.0;
  report(1, pass,
         fmt("lossless limit: |alpha| = %.12f, p_step1 = %.12f, %.0f ms",
             std::abs(ts.alpha), s1.p_step1, elapsed * 1e3));
}

// criterion 2: closed-form amplitudes vs the matrix-exponential propagator.
void criterion_2() {
  const auto start = std::chrono::steady_clock::now();
  const SubsystemLayout lay{{"atom", 2}, {"cav", 3}};
  const StateVector e0 = StateVector::basis(lay, {1, 0});
  const std::size_t idx_e0 = lay.flat_index(std::array{1, 0});
  const std::size_t idx_g1 = lay.flat_index(std::array{0, 1});
  double worst = 0.0;
  for (const double k : {0.0, 0.05, 0.1, 0.2, 0.5}) {
    const DynamicsParams p(1.0, k);
    const double horizon = 2.0 * t1_star(p);
    for (int i = 0; i < 1000; ++i) {
      const double t = horizon * (i + 1) / 1000.0;
      const NoJumpAmplitudes closed = no_jump_amplitudes(p, t);
      const StateVector evolved = evolve_no_jump(e0, p, t, "atom", "cav");
      worst = std::max(worst, std::abs(evolved.amp(idx_e0) - closed.excited));
      worst = std::max(worst, std::abs(evolved.amp(idx_g1) - closed.photon));
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst <= 1e-9 && elapsed < 5.0;
  report(2, pass,
         fmt("closed form vs propagator: max deviation %.3e over 5000 points, "
             "%.2f s",
             worst, elapsed));
}

// criterion 3: the simulated conditional state against the published mixture.
void criterion_3() {
  double worst_rho = 0.0, worst_f = 0.0;
  for (const double a : kGridA)
    for (const double k : kGridK)
      for (const double t2 : kGridT2) {
        const ProtocolConfig cfg = matched_config(a, k, t2);
        const ConcentrationResult ana = analytic_result(cfg);
        const DensityMatrix rho = click_at_t2_rho(cfg, Detector::plus);
        worst_rho = std::max(
            worst_rho,
            (rho.matrix() - ana.rho24->matrix()).cwiseAbs().maxCoeff());
        worst_f = std::max(worst_f, std::abs(fidelity_pure(rho, bell_phi24()) -
                                             *ana.fidelity));
      }
  const bool pass = worst_rho <= 1e-12 && worst_f <= 1e-12;
  report(3, pass,
         fmt("conditional mixture on the 27-point grid: max entry deviation "
             "%.3e, max fidelity deviation %.3e",
             worst_rho, worst_f));
}

// criterion 4: near-separable inputs concentrate to fidelity >= 0.997.
void criterion_4() {
  double worst = 1.0;
  for (const double k : kGridK)
    for (const double t2 : kGridT2) {
      const ProtocolConfig cfg = matched_config(0.05, k, t2);
      const ConcentrationResult ana = analytic_result(cfg);
      const DensityMatrix rho = click_at_t2_rho(cfg, Detector::plus);
      worst = std::min({worst, *ana.fidelity, fidelity_pure(rho, bell_phi24())});
    }
  report(4, worst >= 0.997,
         fmt("a = 0.05 grid: minimum conditional fidelity %.6f", worst));
}

// criterion 5: the corrected D- branch is indistinguishable from D+.
void criterion_5() {
  std::vector<ProtocolConfig> configs;
  for (const double a : kGridA)
    for (const double k : kGridK)
      for (const double t2 : kGridT2) configs.push_back(matched_config(a, k, t2));
  configs.push_back(unmatched_config(0.6, 0.3, 0.1, 2.0));
  configs.push_back(unmatched_config(0.9, 0.5, 0.2, 1.0));
  configs.push_back(unmatched_config(0.4, 0.95, 0.05, 3.0));
  double worst = 0.0;
  for (const ProtocolConfig& cfg : configs) {
    const DensityMatrix plus = click_at_t2_rho(cfg, Detector::plus);
    const DensityMatrix minus = click_at_t2_rho(cfg, Detector::minus);
    worst = std::max(worst,
                     (plus.matrix() - minus.matrix()).cwiseAbs().maxCoeff());
    // Also check a mid-window click.
    const Step1Outcome s1 = run_step1(cfg);
    const NoClickOutcome quiet = detection_no_click(s1.state, cfg, 0.4 * cfg.t2);
    const DensityMatrix mid_plus =
        reduce_rho24(click_jump(quiet.state, Detector::plus)).normalized();
    const DensityMatrix mid_minus =
        reduce_rho24(phase_correct(click_jump(quiet.state, Detector::minus)))
            .normalized();
    worst = std::max(
        worst, (mid_plus.matrix() - mid_minus.matrix()).cwiseAbs().maxCoeff());
  }
  report(5, worst <= 1e-12,
         fmt("detector symmetry over 30 configs: max entry deviation %.3e",
             worst));
}

// criterion 6: no-click, two one-click and two-click probabilities span the
// full event space.
void criterion_6() {
  std::vector<ProtocolConfig> configs;
  for (const double a : kGridA)
    for (const double k : kGridK)
      for (const double t2 : kGridT2) configs.push_back(matched_config(a, k, t2));
  configs.push_back(unmatched_config(0.6, 0.3, 0.1, 2.0));
  configs.push_back(unmatched_config(0.9, 0.5, 0.2, 1.0));
  configs.push_back(matched_config(0.0, 0.1, 2.0));
  configs.push_back(matched_config(1.0, 0.1, 2.0));
  double worst = 0.0;
  for (const ProtocolConfig& cfg : configs) {
    const ConcentrationResult det = event_distribution(cfg, 64);
    const double sum = *det.p_no_click + *det.p_click_plus +
                       *det.p_click_minus + *det.p_two_clicks;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  report(6, worst <= 1e-9,
         fmt("event completeness over %zu configs: max |sum - 1| = %.3e",
             configs.size(), worst));
}

// criterion 7: Monte Carlo estimates against the deterministic distribution.
void criterion_7() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t n = 100000;
  double worst_sigma = 0.0;
  int cells = 0;
  for (const double a : kGridA)
    for (const double k : kGridK)
      for (const double t2 : kGridT2) {
        const ProtocolConfig cfg = matched_config(a, k, t2);
        const ConcentrationResult det = event_distribution(cfg, 64);
        const EstimateReport mc = estimate(cfg, n, kMcSeed);
        const auto pull = [n](double estimate_p, double true_p) {
          const double sigma =
              std::sqrt(true_p * (1.0 - true_p) / static_cast<double>(n));
          return sigma > 0.0 ? std::abs(estimate_p - true_p) / sigma : 0.0;
        };
        worst_sigma = std::max(
            {worst_sigma, pull(mc.no_click.probability, *det.p_no_click),
             pull(mc.one_click_plus.probability, *det.p_click_plus),
             pull(mc.one_click_minus.probability, *det.p_click_minus),
             pull(mc.two_clicks.probability, *det.p_two_clicks)});
        // For matched pairs the conditional fidelity is the same on every
        // one-click trajectory, so its sample error can underflow to the
        // roundoff scale; floor the comparison at an absolute 1e-9.
        if (mc.mean_conditional_fidelity && mc.fidelity_std_error)
          worst_sigma = std::max(
              worst_sigma,
              std::abs(*mc.mean_conditional_fidelity - *det.fidelity) /
                  std::max(*mc.fidelity_std_error, 1e-9 / 3.0));
        ++cells;
      }
  const double elapsed = seconds_since(start);
  const bool pass = worst_sigma <= 3.0 && elapsed < 60.0;
  report(7, pass,
         fmt("Monte Carlo vs deterministic on %d cells (n = %llu, seed = %llu): "
             "max pull %.2f sigma, %.1f s",
             cells, static_cast<unsigned long long>(n),
             static_cast<unsigned long long>(kMcSeed), worst_sigma, elapsed));
}

// criterion 8: the verify command's success-probability audit row.
void criterion_8() {
  bool pass = true;
  double worst_ratio_err = 0.0;
  std::string first_payload;
  for (const double a : kGridA)
    for (const double k : kGridK)
      for (const double t2 : kGridT2) {
        cli::CommonFlags flags;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", a);
        flags.a = buf;
        std::snprintf(buf, sizeof buf, "%.17g", std::sqrt(1.0 - a * a));
        flags.b = buf;
        flags.k = k;
        flags.t2 = t2;
        flags.quad = 64;
        std::ostringstream out, err;
        // The exit code reflects the 3-sigma rows, which a fixed seed can
        // legitimately miss on one cell; this criterion is about the audit
        // row, so only the report content is asserted.
        cli::cmd_verify(flags, 2000, 3, 1, out, err);
        if (first_payload.empty()) {
          first_payload = out.str();
          std::ostringstream out2, err2;
          cli::cmd_verify(flags, 2000, 3, 1, out2, err2);
          if (out2.str() != first_payload) pass = false;
        }
        const auto j = nlohmann::json::parse(out.str());
        bool saw = false;
        for (const auto& row : j["rows"]) {
          if (row["quantity"] != "p_success_paper") continue;
          saw = true;
          if (row["verdict"] != "INFO") pass = false;
          if (!row["ratio_exact_to_paper"].is_number()) {
            pass = false;
            continue;
          }
          // The exact one-click probability exceeds the paper's closed form
          // by 2 e^{2 k t2} (click-time averaging vs click-at-t2 weighting).
          const double expected = 2.0 * std::exp(2.0 * k * t2);
          const double rel =
              std::abs(row["ratio_exact_to_paper"].get<double>() / expected - 1.0);
          worst_ratio_err = std::max(worst_ratio_err, rel);
        }
        if (!saw) pass = false;
      }
  pass = pass && worst_ratio_err <= 1e-9;
  report(8, pass,
         fmt("verify audit on the 27-point grid: INFO row present, ratio "
             "matches 2 e^{2 k t2} to %.3e relative",
             worst_ratio_err));
}

// criterion 9: the trajectories command is reproducible byte for byte.
void criterion_9() {
  const auto run_traj = [](unsigned workers) {
    const char* argv[] = {"cavcon",  "trajectories", "--n",      "20000",
                          "--seed",  "5",            "--workers", nullptr};
    char wbuf[8];
    std::snprintf(wbuf, sizeof wbuf, "%u", workers);
    argv[7] = wbuf;
    std::ostringstream out, err;
    cli::run_cli(8, argv, out, err);
    return out.str();
  };
  const std::string base = run_traj(1);
  const bool pass = !base.empty() && run_traj(1) == base &&
                    run_traj(2) == base && run_traj(7) == base;
  report(9, pass,
         fmt("trajectory reports byte-identical across repeats and worker "
             "counts {1, 2, 7} (%zu bytes)",
             base.size()));
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  return g_failures;
}

// cli.hpp
// Command-line front end: `run` (single config, JSON or CSV), `sweep`
// (parameter grids as plot-ready CSV), `trajectories` (Monte Carlo estimate,
// JSON) and `verify` (analytic vs deterministic vs stochastic cross-check).
// run_cli is the testable entry point; the binary in tools/ only forwards to
// it. Exit codes: 0 ok, 1 verify found a FAIL, 2 validation, 3 regime,
// 4 numerical.

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cavcon/dynamics.hpp"
#include "cavcon/errors.hpp"
#include "cavcon/protocol.hpp"
#include "cavcon/trajectories.hpp"

namespace cavcon::cli {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kSchemaVersion = "1";

namespace detail {

inline double parse_double(std::string_view text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw validation_error("cannot parse number '" + std::string(text) + "'");
  return value;
}

// Amplitudes are accepted as "re" or "re,im".
inline Complex parse_complex(std::string_view text) {
  const std::size_t comma = text.find(',');
  if (comma == std::string_view::npos) return Complex(parse_double(text), 0.0);
  return Complex(parse_double(text.substr(0, comma)),
                 parse_double(text.substr(comma + 1)));
}

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline ordered_json complex_json(Complex z) {
  return ordered_json::array({z.real(), z.imag()});
}

inline ordered_json optional_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

inline ordered_json rho_json(const std::optional<DensityMatrix>& rho) {
  if (!rho) return nullptr;
  const ComplexMatrix& m = rho->matrix();
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::analytic: return "analytic";
    case Provenance::deterministic: return "deterministic";
    case Provenance::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

inline ordered_json result_json(const ConcentrationResult& r) {
  ordered_json j;
  j["provenance"] = provenance_name(r.provenance);
  j["p_step1"] = r.p_step1;
  j["p_no_click"] = optional_json(r.p_no_click);
  j["p_click_plus"] = optional_json(r.p_click_plus);
  j["p_click_minus"] = optional_json(r.p_click_minus);
  j["p_two_clicks"] = optional_json(r.p_two_clicks);
  j["fidelity"] = optional_json(r.fidelity);
  j["p_success_paper"] = optional_json(r.p_success_paper);
  j["rho24"] = rho_json(r.rho24);
  return j;
}

}  // namespace detail

// Flags shared by every subcommand; c/d default to the matched copy of a/b.
struct CommonFlags {
  std::string a = "0.7071067811865476";
  std::string b = "0.7071067811865476";
  std::string c;
  std::string d;
  double delta = 1.0;
  double k = 0.1;
  double t2 = 2.0;
  int n_max = 2;
  int quad = 128;
  std::string out_path;
};

inline ProtocolConfig make_config(const CommonFlags& f) {
  const Complex a = detail::parse_complex(f.a);
  const Complex b = detail::parse_complex(f.b);
  if (f.c.empty() != f.d.empty())
    throw validation_error("provide both --c and --d or neither");
  const Complex c = f.c.empty() ? a : detail::parse_complex(f.c);
  const Complex d = f.d.empty() ? b : detail::parse_complex(f.d);

  std::optional<InputPair> pair12, pair34;
  try {
    pair12 = InputPair::renormalized(a, b);
  } catch (const validation_error&) {
    throw validation_error("pair (a, b) is not normalized within 1e-9");
  }
  try {
    pair34 = InputPair::renormalized(c, d);
  } catch (const validation_error&) {
    throw validation_error("pair (c, d) is not normalized within 1e-9");
  }
  return ProtocolConfig(*pair12, *pair34, DynamicsParams(f.delta, f.k), f.t2,
                        f.n_max);
}

namespace detail {

inline ordered_json config_json(const ProtocolConfig& cfg) {
  ordered_json j;
  j["a"] = complex_json(cfg.pair12.amp_eg);
  j["b"] = complex_json(cfg.pair12.amp_ge);
  j["c"] = complex_json(cfg.pair34.amp_eg);
  j["d"] = complex_json(cfg.pair34.amp_ge);
  j["delta"] = cfg.dyn.delta;
  j["k"] = cfg.dyn.k;
  j["t2"] = cfg.t2;
  j["n_max"] = cfg.n_max;
  j["matched"] = cfg.matched;
  return j;
}

inline void write_payload(const std::string& payload, const std::string& out_path,
                          std::ostream& fallback) {
  if (out_path.empty()) {
    fallback << payload;
    return;
  }
  std::ofstream file(out_path, std::ios::binary);
  if (!file) throw validation_error("cannot open output file '" + out_path + "'");
  file << payload;
}

inline constexpr std::string_view kCsvHeader =
    "vary_value,omega_k,t1,alpha,p_step1,p_no_click,p_click_plus,"
    "p_click_minus,p_two_clicks,fidelity_sim,fidelity_paper,p_success_paper";

inline void csv_row(std::ostream& os, double vary_value,
                    const TransferSolution& ts, const ConcentrationResult& det,
                    const ConcentrationResult* ana) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto opt = [&](const std::optional<double>& v) { return v ? *v : nan; };
  const double values[] = {vary_value,
                           ts.omega_k,
                           ts.t1,
                           ts.alpha,
                           det.p_step1,
                           opt(det.p_no_click),
                           opt(det.p_click_plus),
                           opt(det.p_click_minus),
                           opt(det.p_two_clicks),
                           opt(det.fidelity),
                           ana ? opt(ana->fidelity) : nan,
                           ana ? opt(ana->p_success_paper) : nan};
  bool first = true;
  for (const double v : values) {
    if (!first) os << ',';
    os << fmt_g17(v);
    first = false;
  }
  os << '\n';
}

struct SinglePoint {
  TransferSolution transfer;
  ConcentrationResult deterministic;
  std::optional<ConcentrationResult> analytic;
};

inline SinglePoint evaluate_point(const ProtocolConfig& cfg, int quad) {
  SinglePoint p{solve_transfer(cfg.dyn), event_distribution(cfg, quad), {}};
  if (cfg.matched) p.analytic = analytic_result(cfg);
  return p;
}

}  // namespace detail

inline int cmd_run(const CommonFlags& flags, const std::string& format,
                   std::ostream& out) {
  const ProtocolConfig cfg = make_config(flags);
  const detail::SinglePoint point = detail::evaluate_point(cfg, flags.quad);

  std::ostringstream payload;
  if (format == "csv") {
    payload << detail::kCsvHeader << '\n';
    detail::csv_row(payload, std::numeric_limits<double>::quiet_NaN(),
                    point.transfer, point.deterministic,
                    point.analytic ? &*point.analytic : nullptr);
  } else {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "run";
    j["config"] = detail::config_json(cfg);
    j["config"]["quad_points"] = flags.quad;
    j["transfer"] = {{"omega_k", point.transfer.omega_k},
                     {"t1", point.transfer.t1},
                     {"alpha", point.transfer.alpha}};
    j["analytic"] =
        point.analytic ? detail::result_json(*point.analytic) : ordered_json(nullptr);
    j["deterministic"] = detail::result_json(point.deterministic);
    if (point.analytic) {
      const ConcentrationResult& ana = *point.analytic;
      const ConcentrationResult& det = point.deterministic;
      ordered_json disc;
      const auto abs_rel = [](double reference, double other) {
        const double abs = std::abs(reference - other);
        const double rel = abs / std::max(std::abs(reference), 1e-300);
        return ordered_json{{"abs", abs}, {"rel", rel}};
      };
      disc["p_step1"] = abs_rel(ana.p_step1, det.p_step1);
      if (ana.fidelity && det.fidelity)
        disc["fidelity"] = abs_rel(*ana.fidelity, *det.fidelity);
      if (ana.rho24 && det.rho24)
        disc["rho24_max_abs"] =
            (ana.rho24->matrix() - det.rho24->matrix()).cwiseAbs().maxCoeff();
      j["discrepancy"] = std::move(disc);
    } else {
      j["discrepancy"] = nullptr;
    }
    payload << j.dump(2) << '\n';
  }
  detail::write_payload(payload.str(), flags.out_path, out);
  return 0;
}

inline int cmd_sweep(const CommonFlags& flags, const std::string& vary,
                     double from, double to, int steps, std::ostream& out) {
  if (steps < 1) throw validation_error("--steps must be >= 1");
  if (!(std::isfinite(from) && std::isfinite(to)) || to < from)
    throw validation_error("sweep range is empty or inverted");

  const ProtocolConfig base = make_config(flags);
  if (vary == "a" && !base.matched)
    throw validation_error("--vary a requires a matched base config");

  std::ostringstream payload;
  payload << detail::kCsvHeader << '\n';
  for (int i = 0; i < steps; ++i) {
    const double value =
        steps == 1 ? from : from + (to - from) * i / (steps - 1.0);
    std::optional<ProtocolConfig> cfg;
    if (vary == "k") {
      cfg.emplace(base.pair12, base.pair34,
                  DynamicsParams(base.dyn.delta, value), base.t2, base.n_max);
    } else if (vary == "t2") {
      cfg.emplace(base.pair12, base.pair34, base.dyn, value, base.n_max);
    } else {  // vary == "a"
      if (!(value >= 0.0 && value <= 1.0))
        throw validation_error("--vary a requires values in [0, 1]");
      const InputPair pair(Complex(value, 0.0),
                           Complex(std::sqrt(1.0 - value * value), 0.0));
      cfg.emplace(pair, pair, base.dyn, base.t2, base.n_max);
    }
    const detail::SinglePoint point = detail::evaluate_point(*cfg, flags.quad);
    detail::csv_row(payload, value, point.transfer, point.deterministic,
                    point.analytic ? &*point.analytic : nullptr);
  }
  detail::write_payload(payload.str(), flags.out_path, out);
  return 0;
}

inline int cmd_trajectories(const CommonFlags& flags, std::uint64_t n,
                            std::uint64_t seed, unsigned workers,
                            std::ostream& out) {
  const ProtocolConfig cfg = make_config(flags);
  const EstimateReport report = estimate(cfg, n, seed, workers);

  const auto stat_json = [](const EventStat& s) {
    return ordered_json{{"count", s.count},
                        {"probability", s.probability},
                        {"std_error", s.std_error}};
  };
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "trajectories";
  j["config"] = detail::config_json(cfg);
  j["config"]["n"] = n;
  j["config"]["seed"] = seed;
  j["estimate"] = {
      {"n_trajectories", report.n_trajectories},
      {"seed", report.seed},
      {"p_step1", report.p_step1},
      {"events",
       {{"no_click", stat_json(report.no_click)},
        {"one_click_plus", stat_json(report.one_click_plus)},
        {"one_click_minus", stat_json(report.one_click_minus)},
        {"two_clicks", stat_json(report.two_clicks)}}},
      {"mean_conditional_fidelity",
       detail::optional_json(report.mean_conditional_fidelity)},
      {"fidelity_std_error", detail::optional_json(report.fidelity_std_error)}};
  detail::write_payload(j.dump(2) + "\n", flags.out_path, out);
  return 0;
}

namespace detail {

struct VerifyRow {
  std::string quantity;
  std::optional<double> analytic;
  std::optional<double> deterministic;
  std::optional<double> monte_carlo;
  std::optional<double> max_discrepancy;
  std::optional<double> ratio;  // p_success audit only
  std::string verdict;
};

// PASS needs every available adjacent comparison to hold: analytic vs
// deterministic within abs_tol, deterministic vs Monte Carlo within
// max(3 sigma, abs_tol). With fewer than two values there is nothing to
// check and the verdict is N/A.
inline VerifyRow make_row(std::string quantity, std::optional<double> analytic,
                          std::optional<double> deterministic,
                          std::optional<double> monte_carlo,
                          std::optional<double> mc_sigma, double abs_tol = 1e-9) {
  VerifyRow row{std::move(quantity), analytic,      deterministic,
                monte_carlo,         std::nullopt,  std::nullopt,
                "N/A"};
  bool any = false;
  bool pass = true;
  double disc = 0.0;
  if (analytic && deterministic) {
    any = true;
    const double d = std::abs(*analytic - *deterministic);
    disc = std::max(disc, d);
    pass = pass && d <= abs_tol;
  }
  if (deterministic && monte_carlo) {
    any = true;
    const double d = std::abs(*deterministic - *monte_carlo);
    disc = std::max(disc, d);
    const double tol = std::max(mc_sigma ? 3.0 * *mc_sigma : 0.0, abs_tol);
    pass = pass && d <= tol;
  }
  if (any) {
    row.max_discrepancy = disc;
    row.verdict = pass ? "PASS" : "FAIL";
  }
  return row;
}

}  // namespace detail

inline int cmd_verify(const CommonFlags& flags, std::uint64_t n,
                      std::uint64_t seed, unsigned workers, std::ostream& out,
                      std::ostream& err) {
  const ProtocolConfig cfg = make_config(flags);
  const detail::SinglePoint point = detail::evaluate_point(cfg, flags.quad);
  const ConcentrationResult& det = point.deterministic;
  const ConcentrationResult* ana = point.analytic ? &*point.analytic : nullptr;
  const EstimateReport mc = estimate(cfg, n, seed, workers);

  const auto opt = [](const std::optional<double>& v) { return v; };
  std::vector<detail::VerifyRow> rows;
  rows.push_back(detail::make_row(
      "p_step1", ana ? std::optional(ana->p_step1) : std::nullopt, det.p_step1,
      std::nullopt, std::nullopt));
  rows.push_back(detail::make_row("fidelity",
                                  ana ? opt(ana->fidelity) : std::nullopt,
                                  det.fidelity, mc.mean_conditional_fidelity,
                                  mc.fidelity_std_error));
  {
    detail::VerifyRow rho_row{"rho24_entries", std::nullopt, std::nullopt,
                              std::nullopt,    std::nullopt, std::nullopt,
                              "N/A"};
    if (ana && ana->rho24 && det.rho24) {
      const double d =
          (ana->rho24->matrix() - det.rho24->matrix()).cwiseAbs().maxCoeff();
      rho_row.max_discrepancy = d;
      rho_row.verdict = d <= 1e-9 ? "PASS" : "FAIL";
    }
    rows.push_back(std::move(rho_row));
  }
  rows.push_back(detail::make_row("p_no_click", std::nullopt, det.p_no_click,
                                  mc.no_click.probability,
                                  mc.no_click.std_error));
  rows.push_back(detail::make_row("p_click_plus", std::nullopt,
                                  det.p_click_plus,
                                  mc.one_click_plus.probability,
                                  mc.one_click_plus.std_error));
  rows.push_back(detail::make_row("p_click_minus", std::nullopt,
                                  det.p_click_minus,
                                  mc.one_click_minus.probability,
                                  mc.one_click_minus.std_error));
  rows.push_back(detail::make_row("p_two_clicks", std::nullopt,
                                  det.p_two_clicks, mc.two_clicks.probability,
                                  mc.two_clicks.std_error));
  {
    double det_sum = 0.0;
    for (const auto& p :
         {det.p_no_click, det.p_click_plus, det.p_click_minus, det.p_two_clicks})
      det_sum += p.value_or(0.0);
    const double mc_sum =
        mc.no_click.probability + mc.one_click_plus.probability +
        mc.one_click_minus.probability + mc.two_clicks.probability;
    rows.push_back(
        detail::make_row("event_probability_sum", 1.0, det_sum, mc_sum, 0.0));
  }
  {
    // Paper P_success audit: the exact unconditional one-click probability
    // next to the paper's closed form, with their ratio. Reported as INFO;
    // the paper's conditioning convention is not asserted.
    detail::VerifyRow audit{"p_success_paper", std::nullopt, std::nullopt,
                            std::nullopt,      std::nullopt, std::nullopt,
                            "INFO"};
    if (ana) audit.analytic = ana->p_success_paper;
    const double one_click =
        det.p_click_plus.value_or(0.0) + det.p_click_minus.value_or(0.0);
    audit.deterministic = det.p_step1 * one_click;
    if (audit.analytic && audit.deterministic) {
      audit.max_discrepancy = std::abs(*audit.analytic - *audit.deterministic);
      if (*audit.analytic > 0.0)
        audit.ratio = *audit.deterministic / *audit.analytic;
    }
    rows.push_back(std::move(audit));
  }

  bool overall_pass = true;
  for (const auto& row : rows)
    if (row.verdict == "FAIL") overall_pass = false;

  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "verify";
  j["config"] = detail::config_json(cfg);
  j["config"]["quad_points"] = flags.quad;
  j["config"]["n"] = n;
  j["config"]["seed"] = seed;
  j["rows"] = ordered_json::array();
  for (const auto& row : rows) {
    ordered_json rj;
    rj["quantity"] = row.quantity;
    rj["analytic"] = detail::optional_json(row.analytic);
    rj["deterministic"] = detail::optional_json(row.deterministic);
    rj["monte_carlo"] = detail::optional_json(row.monte_carlo);
    rj["max_discrepancy"] = detail::optional_json(row.max_discrepancy);
    if (row.quantity == "p_success_paper")
      rj["ratio_exact_to_paper"] = detail::optional_json(row.ratio);
    rj["verdict"] = row.verdict;
    j["rows"].push_back(std::move(rj));
  }
  j["rho24_analytic"] = detail::rho_json(ana ? ana->rho24 : std::nullopt);
  j["rho24_deterministic"] = detail::rho_json(det.rho24);
  j["overall"] = overall_pass ? "PASS" : "FAIL";
  detail::write_payload(j.dump(2) + "\n", flags.out_path, out);

  const auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return std::string(buf);
  };
  err << std::left << std::setw(24) << "quantity" << std::setw(18) << "analytic"
      << std::setw(18) << "deterministic" << std::setw(18) << "monte_carlo"
      << std::setw(16) << "max_disc" << "verdict\n";
  for (const auto& row : rows) {
    err << std::left << std::setw(24) << row.quantity << std::setw(18)
        << cell(row.analytic) << std::setw(18) << cell(row.deterministic)
        << std::setw(18) << cell(row.monte_carlo) << std::setw(16)
        << cell(row.max_discrepancy) << row.verdict;
    if (row.ratio) err << " (ratio exact/paper = " << cell(row.ratio) << ")";
    err << '\n';
  }
  err << "overall: " << (overall_pass ? "PASS" : "FAIL") << '\n';
  return overall_pass ? 0 : 1;
}

inline unsigned default_workers() {
  const char* env = std::getenv("CAVCON_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  unsigned value = 0;
  const std::string_view text(env);
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1)
    throw validation_error("CAVCON_WORKERS must be a positive integer");
  return value;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"cavity-decay entanglement concentration simulator"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string format = "json";
  std::string vary;
  double from = 0.0;
  double to = 0.0;
  int steps = 0;
  std::uint64_t n_traj = 100000;
  std::uint64_t n_verify = 20000;
  std::uint64_t seed = 1;
  unsigned workers = 0;

  const auto add_common = [&flags](CLI::App* cmd) {
    cmd->add_option("--a", flags.a, "pair12 |e g> amplitude, 're' or 're,im'")
        ->capture_default_str();
    cmd->add_option("--b", flags.b, "pair12 |g e> amplitude")
        ->capture_default_str();
    cmd->add_option("--c", flags.c, "pair34 |e g> amplitude (default: --a)");
    cmd->add_option("--d", flags.d, "pair34 |g e> amplitude (default: --b)");
    cmd->add_option("--delta", flags.delta, "effective coupling rate")
        ->capture_default_str();
    cmd->add_option("--k", flags.k, "cavity photon decay rate")
        ->capture_default_str();
    cmd->add_option("--t2", flags.t2, "detection window")
        ->capture_default_str();
    cmd->add_option("--nmax", flags.n_max, "Fock truncation per cavity")
        ->capture_default_str();
    cmd->add_option("--quad", flags.quad, "Gauss-Legendre node count (>= 64)")
        ->capture_default_str();
    cmd->add_option("--out", flags.out_path, "output file (default: stdout)");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "evaluate one configuration");
  add_common(run_cmd);
  run_cmd->add_option("--format", format, "output format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "evaluate a parameter grid as CSV");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--vary", vary, "swept parameter")
      ->check(CLI::IsMember({"k", "t2", "a"}))
      ->required();
  sweep_cmd->add_option("--from", from, "first grid value")->required();
  sweep_cmd->add_option("--to", to, "last grid value")->required();
  sweep_cmd->add_option("--steps", steps, "number of grid points")->required();

  CLI::App* traj_cmd =
      app.add_subcommand("trajectories", "Monte Carlo jump estimate");
  add_common(traj_cmd);
  traj_cmd->add_option("--n", n_traj, "trajectory count")->capture_default_str();
  traj_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  CLI::Option* traj_workers =
      traj_cmd->add_option("--workers", workers, "worker thread count");

  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "cross-check analytic, deterministic and Monte Carlo results");
  add_common(verify_cmd);
  verify_cmd->add_option("--n", n_verify, "trajectory count")
      ->capture_default_str();
  verify_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  CLI::Option* verify_workers =
      verify_cmd->add_option("--workers", workers, "worker thread count");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      std::ostringstream sink_out, sink_err;
      const int code = app.exit(e, sink_out, sink_err);
      out << sink_out.str();
      err << sink_err.str();
      return code == 0 ? 0 : 2;
    }
    if (app.got_subcommand(run_cmd)) return cmd_run(flags, format, out);
    if (app.got_subcommand(sweep_cmd))
      return cmd_sweep(flags, vary, from, to, steps, out);
    if (app.got_subcommand(traj_cmd)) {
      if (traj_workers->count() == 0) workers = default_workers();
      return cmd_trajectories(flags, n_traj, seed, workers, out);
    }
    if (app.got_subcommand(verify_cmd)) {
      if (verify_workers->count() == 0) workers = default_workers();
      return cmd_verify(flags, n_verify, seed, workers, out, err);
    }
    err << "error: no subcommand\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace cavcon::cli

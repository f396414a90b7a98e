// trajectories.hpp
// Quantum-jump Monte Carlo unraveling of the detection stage, used as an
// independent stochastic oracle for the event distribution and the
// conditional fidelity. Randomness is counter-based per trajectory index, so
// estimates are bit-identical for any worker count.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "cavcon/errors.hpp"
#include "cavcon/protocol.hpp"
#include "cavcon/qcore.hpp"
#include "cavcon/rng.hpp"

namespace cavcon {

struct Click {
  double time;
  Detector detector;
};

enum class EventClass { no_click, one_click_plus, one_click_minus, two_clicks };

struct TrajectoryRecord {
  std::vector<Click> clicks;
  EventClass classification;
  // Fidelity of the conditional (phase-corrected) state against the target
  // Bell pair; present only for one-click trajectories.
  std::optional<double> conditional_fidelity;
  // Normalized conditional state at t2 (phase-corrected after a D- click).
  StateVector final_state;
};

namespace detail {

class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

// Precomputes everything reusable across trajectories of one config: the
// post-step-1 state, per-basis-state photon numbers, annihilation hop lists
// and the (atom2, atom4) reduction offsets.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(const ProtocolConfig& cfg)
      : layout_(protocol_layout(cfg.n_max)), k_(cfg.dyn.k), t2_(cfg.t2) {
    const Step1Outcome s1 = run_step1(cfg);
    psi0_ = s1.state.amps();
    p_step1_ = s1.p_step1;
    n_phot_ = detail::photon_numbers(layout_);
    n_sectors_ = 2 * cfg.n_max + 1;
    hops_a_ = make_hops(kCavA);
    hops_b_ = make_hops(kCavB);
    atom4_pos_ = layout_.position(kAtom4);
    const std::string keep[] = {std::string(kAtom2), std::string(kAtom4)};
    const detail::TracePartition part =
        detail::make_trace_partition(layout_, std::span<const std::string>(keep, 2));
    kept_ge_ = part.kept_offsets[1];  // reduced |g e>
    kept_eg_ = part.kept_offsets[2];  // reduced |e g>
    traced_ = part.traced_offsets;
  }

  const SubsystemLayout& layout() const { return layout_; }
  double p_step1() const { return p_step1_; }
  StateVector initial_state() const { return StateVector(layout_, psi0_); }

  TrajectoryRecord run(RngStream& rng) const {
    Outcome out = simulate(rng, true);
    return TrajectoryRecord{std::move(out.clicks), out.classification,
                            out.fidelity, std::move(*out.final_state)};
  }

  struct Outcome {
    std::vector<Click> clicks;
    EventClass classification;
    std::optional<double> fidelity;
    std::optional<StateVector> final_state;
  };

  // Standard quantum-jump procedure: draw a survival threshold, bisect the
  // analytically known norm decay S(dt) = sum_n w_n e^{-2 k n dt} for the
  // jump time, pick the detector by the squared norms of (a_A +- a_B)/sqrt(2)
  // applied to the pre-jump state, apply the jump and renormalize.
  Outcome simulate(RngStream& rng, bool want_state) const {
    ComplexVector psi = psi0_;
    const auto dim = psi.size();
    std::vector<Click> clicks;
    double t_now = 0.0;
    while (true) {
      const double remaining = t2_ - t_now;
      std::array<double, kMaxSectors> w{};
      for (Eigen::Index i = 0; i < dim; ++i)
        w[static_cast<std::size_t>(n_phot_[static_cast<std::size_t>(i)])] +=
            std::norm(psi(i));
      const auto survival = [&](double dt) {
        const double x = std::exp(-2.0 * k_ * dt);
        double s = w[static_cast<std::size_t>(n_sectors_ - 1)];
        for (int n = n_sectors_ - 2; n >= 0; --n)
          s = s * x + w[static_cast<std::size_t>(n)];
        return s;
      };
      const double threshold = rng.next_uniform();
      if (survival(remaining) >= threshold) break;
      double lo = 0.0;
      double hi = remaining;
      while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (survival(mid) > threshold ? lo : hi) = mid;
      }
      const double dt = 0.5 * (lo + hi);

      for (Eigen::Index i = 0; i < dim; ++i)
        psi(i) *= std::exp(-k_ * n_phot_[static_cast<std::size_t>(i)] * dt);
      ComplexVector va = ComplexVector::Zero(dim);
      ComplexVector vb = ComplexVector::Zero(dim);
      for (const Hop& h : hops_a_) va(h.dst) += h.coeff * psi(h.src);
      for (const Hop& h : hops_b_) vb(h.dst) += h.coeff * psi(h.src);
      const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
      const ComplexVector zeta_plus = inv_sqrt2 * (va + vb);
      const ComplexVector zeta_minus = inv_sqrt2 * (va - vb);
      const double q_plus = zeta_plus.squaredNorm();
      const double q_minus = zeta_minus.squaredNorm();
      const double total = q_plus + q_minus;
      if (!(total > 0.0))
        throw numerical_error("jump fired with zero photon flux");
      const bool is_plus = rng.next_uniform() * total < q_plus;
      psi = is_plus ? zeta_plus : zeta_minus;
      psi /= psi.norm();
      t_now += dt;
      clicks.push_back({t_now, is_plus ? Detector::plus : Detector::minus});
    }

    for (Eigen::Index i = 0; i < dim; ++i)
      psi(i) *= std::exp(-k_ * n_phot_[static_cast<std::size_t>(i)] * (t2_ - t_now));
    psi /= psi.norm();

    Outcome out;
    out.clicks = std::move(clicks);
    if (out.clicks.empty()) {
      out.classification = EventClass::no_click;
    } else if (out.clicks.size() == 1) {
      const bool is_plus = out.clicks.front().detector == Detector::plus;
      out.classification =
          is_plus ? EventClass::one_click_plus : EventClass::one_click_minus;
      if (!is_plus)
        for (Eigen::Index i = 0; i < dim; ++i)
          if (layout_.digit_at(static_cast<std::size_t>(i), atom4_pos_) == 0)
            psi(i) = -psi(i);
      const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
      double fid = 0.0;
      for (const std::size_t off : traced_)
        fid += std::norm(inv_sqrt2 *
                         (psi(static_cast<Eigen::Index>(kept_ge_ + off)) +
                          psi(static_cast<Eigen::Index>(kept_eg_ + off))));
      out.fidelity = std::clamp(fid, 0.0, 1.0);
    } else {
      out.classification = EventClass::two_clicks;
    }
    if (want_state) out.final_state = StateVector(layout_, std::move(psi));
    return out;
  }

 private:
  struct Hop {
    Eigen::Index src;
    Eigen::Index dst;
    double coeff;
  };
  static constexpr std::size_t kMaxSectors = 64;

  std::vector<Hop> make_hops(std::string_view cavity) const {
    const std::size_t pos = layout_.position(cavity);
    const std::size_t stride = layout_.stride(pos);
    std::vector<Hop> hops;
    for (std::size_t i = 0; i < layout_.dim(); ++i) {
      const int n = layout_.digit_at(i, pos);
      if (n >= 1)
        hops.push_back({static_cast<Eigen::Index>(i),
                        static_cast<Eigen::Index>(i - stride),
                        std::sqrt(static_cast<double>(n))});
    }
    return hops;
  }

  SubsystemLayout layout_;
  double k_;
  double t2_;
  ComplexVector psi0_;
  double p_step1_ = 0.0;
  std::vector<int> n_phot_;
  int n_sectors_ = 0;
  std::vector<Hop> hops_a_;
  std::vector<Hop> hops_b_;
  std::size_t atom4_pos_ = 0;
  std::size_t kept_ge_ = 0;
  std::size_t kept_eg_ = 0;
  std::vector<std::size_t> traced_;
};

inline TrajectoryRecord run_trajectory(const ProtocolConfig& cfg, RngStream& rng) {
  return TrajectorySampler(cfg).run(rng);
}

struct EventStat {
  std::uint64_t count = 0;
  double probability = 0.0;
  double std_error = 0.0;  // sqrt(p (1-p) / n)
};

struct EstimateReport {
  std::uint64_t n_trajectories = 0;
  std::uint64_t seed = 0;
  double p_step1 = 0.0;
  EventStat no_click;
  EventStat one_click_plus;
  EventStat one_click_minus;
  EventStat two_clicks;
  std::optional<double> mean_conditional_fidelity;  // over one-click samples
  std::optional<double> fidelity_std_error;         // absent below 2 samples
};

// Runs n independent trajectories with per-trajectory streams (seed, index).
// Workers only partition the index range; every trajectory's draws and the
// index-ordered aggregation are identical for any partition, so the report is
// reproducible bit for bit.
inline EstimateReport estimate(const ProtocolConfig& cfg, std::uint64_t n,
                               std::uint64_t seed, unsigned workers = 1) {
  if (n < 1) throw validation_error("trajectory count must be >= 1");
  if (workers < 1) throw validation_error("worker count must be >= 1");
  const TrajectorySampler sampler(cfg);

  struct Summary {
    EventClass cls;
    double fidelity;
  };
  std::vector<Summary> results(n, Summary{EventClass::no_click, 0.0});
  const std::uint64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(workers);
  for (unsigned wkr = 0; wkr < workers; ++wkr) {
    const std::uint64_t lo = std::min<std::uint64_t>(n, wkr * chunk);
    const std::uint64_t hi = std::min<std::uint64_t>(n, lo + chunk);
    if (lo == hi) break;
    pool.emplace_back([&, wkr, lo, hi] {
      try {
        for (std::uint64_t idx = lo; idx < hi; ++idx) {
          RngStream rng(seed, idx);
          const TrajectorySampler::Outcome out = sampler.simulate(rng, false);
          results[idx] = {out.classification, out.fidelity.value_or(0.0)};
        }
      } catch (...) {
        failures[wkr] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);

  std::array<std::uint64_t, 4> counts{};
  detail::NeumaierSum fid_sum, fid_sumsq;
  for (const Summary& s : results) {
    counts[static_cast<std::size_t>(s.cls)] += 1;
    if (s.cls == EventClass::one_click_plus ||
        s.cls == EventClass::one_click_minus) {
      fid_sum.add(s.fidelity);
      fid_sumsq.add(s.fidelity * s.fidelity);
    }
  }

  const auto stat = [n](std::uint64_t count) {
    EventStat e;
    e.count = count;
    e.probability = static_cast<double>(count) / static_cast<double>(n);
    e.std_error =
        std::sqrt(e.probability * (1.0 - e.probability) / static_cast<double>(n));
    return e;
  };
  EstimateReport report;
  report.n_trajectories = n;
  report.seed = seed;
  report.p_step1 = sampler.p_step1();
  report.no_click = stat(counts[static_cast<std::size_t>(EventClass::no_click)]);
  report.one_click_plus =
      stat(counts[static_cast<std::size_t>(EventClass::one_click_plus)]);
  report.one_click_minus =
      stat(counts[static_cast<std::size_t>(EventClass::one_click_minus)]);
  report.two_clicks = stat(counts[static_cast<std::size_t>(EventClass::two_clicks)]);
  const std::uint64_t ones =
      report.one_click_plus.count + report.one_click_minus.count;
  if (ones >= 1) {
    const double m = static_cast<double>(ones);
    const double mean = fid_sum.value() / m;
    report.mean_conditional_fidelity = mean;
    if (ones >= 2) {
      const double var =
          std::max(0.0, (fid_sumsq.value() - m * mean * mean) / (m - 1.0));
      report.fidelity_std_error = std::sqrt(var / m);
    }
  }
  return report;
}

}  // namespace cavcon

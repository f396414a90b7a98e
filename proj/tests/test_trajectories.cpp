#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "cavcon/protocol.hpp"
#include "cavcon/rng.hpp"
#include "cavcon/trajectories.hpp"
#include "oracles.hpp"

using namespace cavcon;

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;

ProtocolConfig fixture_config() {
  const InputPair pair(Complex(kInvSqrt2, 0.0), Complex(kInvSqrt2, 0.0));
  return ProtocolConfig(pair, pair, DynamicsParams(1.0, 0.1), 2.0);
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
  const std::array<std::uint32_t, 4> zeros =
      philox4x32_10({0u, 0u, 0u, 0u}, {0u, 0u});
  REQUIRE(zeros == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du,
                                                0xbc57ac4cu, 0x9b00dbd8u});

  const std::array<std::uint32_t, 4> ones = philox4x32_10(
      {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
      {0xffffffffu, 0xffffffffu});
  REQUIRE(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu,
                                               0xa20bc7c6u, 0x6d5451fdu});

  const std::array<std::uint32_t, 4> pi_digits = philox4x32_10(
      {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
      {0xa4093822u, 0x299f31d0u});
  REQUIRE(pi_digits == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu,
                                                    0x5001e420u, 0x24126ea1u});
}

TEST_CASE("counter-based streams are reproducible and independent") {
  RngStream zero_stream(0, 0);
  REQUIRE(zero_stream.next_u64() == 0xe169c58d6627e8d5ull);
  REQUIRE(zero_stream.next_u64() == 0x9b00dbd8bc57ac4cull);

  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::vector<double> seq_a, seq_b;
  bool c_differs = false, d_differs = false;
  for (int i = 0; i < 64; ++i) {
    const double ua = a.next_uniform();
    REQUIRE(ua >= 0.0);
    REQUIRE(ua < 1.0);
    seq_a.push_back(ua);
    seq_b.push_back(b.next_uniform());
    c_differs = c_differs || c.next_uniform() != ua;
    d_differs = d_differs || d.next_uniform() != ua;
  }
  REQUIRE(seq_a == seq_b);
  REQUIRE(c_differs);
  REQUIRE(d_differs);
}

TEST_CASE("detector jumps resolve the total photon flux") {
  // ||L+ psi||^2 + ||L- psi||^2 must equal <n_A + n_B> for any state, which
  // is what makes the waiting-time distribution exp(-2 k n t) consistent with
  // the two-port unraveling.
  const SubsystemLayout lay = protocol_layout(2);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const StateVector psi(lay, oracles::random_state(rng, static_cast<int>(lay.dim())));
    const double flux = click_jump(psi, Detector::plus).norm2() +
                        click_jump(psi, Detector::minus).norm2();
    double expect = 0.0;
    for (std::size_t i = 0; i < lay.dim(); ++i)
      expect += (lay.digit_at(i, 4) + lay.digit_at(i, 5)) * std::norm(psi.amp(i));
    REQUIRE(std::abs(flux - expect) < 1e-12);
  }
}

TEST_CASE("sampler setup matches the step-1 pipeline") {
  const ProtocolConfig cfg = fixture_config();
  const TrajectorySampler sampler(cfg);
  const Step1Outcome s1 = run_step1(cfg);
  REQUIRE(sampler.p_step1() == s1.p_step1);
  REQUIRE((sampler.initial_state().amps() - s1.state.amps()).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("a trajectory without clicks reproduces the no-click evolution") {
  const ProtocolConfig cfg = fixture_config();
  const TrajectorySampler sampler(cfg);
  const Step1Outcome s1 = run_step1(cfg);
  const StateVector quiet = detection_no_click(s1.state, cfg, cfg.t2).state;

  bool found = false;
  for (std::uint64_t index = 0; index < 64 && !found; ++index) {
    RngStream rng(2024, index);
    const TrajectoryRecord rec = sampler.run(rng);
    if (rec.classification != EventClass::no_click) continue;
    found = true;
    REQUIRE(rec.clicks.empty());
    REQUIRE_FALSE(rec.conditional_fidelity.has_value());
    REQUIRE((rec.final_state.amps() - quiet.amps()).cwiseAbs().maxCoeff() <=
            1e-10);
  }
  REQUIRE(found);  // p_no_click is about 0.72 here
}

TEST_CASE("click records are consistent with the conditional state") {
  const ProtocolConfig cfg = fixture_config();
  const TrajectorySampler sampler(cfg);
  const StateVector bell = bell_phi24();
  const oracles::EventOracle ref = oracles::event_oracle(
      Complex(kInvSqrt2, 0.0), Complex(kInvSqrt2, 0.0), Complex(kInvSqrt2, 0.0),
      Complex(kInvSqrt2, 0.0), 1.0, 0.1, 2.0);

  int ones_seen = 0, twos_seen = 0;
  for (std::uint64_t index = 0; index < 400 && (ones_seen < 8 || twos_seen < 2);
       ++index) {
    RngStream rng(5, index);
    const TrajectoryRecord rec = sampler.run(rng);
    REQUIRE(std::abs(rec.final_state.norm() - 1.0) < 1e-12);
    double prev = 0.0;
    for (const Click& click : rec.clicks) {
      REQUIRE(click.time > prev);
      REQUIRE(click.time <= cfg.t2);
      prev = click.time;
    }
    if (rec.clicks.size() == 1) {
      ++ones_seen;
      const bool is_plus = rec.clicks.front().detector == Detector::plus;
      REQUIRE(rec.classification == (is_plus ? EventClass::one_click_plus
                                             : EventClass::one_click_minus));
      REQUIRE(rec.conditional_fidelity.has_value());
      // The record's shortcut fidelity must agree with the full reduction.
      const double full =
          fidelity_pure(reduce_rho24(rec.final_state), bell);
      REQUIRE(std::abs(*rec.conditional_fidelity - full) < 1e-12);
      // One-click fidelity is click-time independent, so it is exact per shot.
      REQUIRE(std::abs(*rec.conditional_fidelity - ref.fidelity) < 1e-10);
    } else if (rec.clicks.size() == 2) {
      ++twos_seen;
      REQUIRE(rec.classification == EventClass::two_clicks);
      REQUIRE_FALSE(rec.conditional_fidelity.has_value());
    }
  }
  REQUIRE(ones_seen >= 8);
  REQUIRE(twos_seen >= 2);
}

TEST_CASE("ground pairs never click") {
  const InputPair ground(Complex(0.0, 0.0), Complex(1.0, 0.0));
  const ProtocolConfig cfg(ground, ground, DynamicsParams(1.0, 0.1), 2.0);
  const TrajectorySampler sampler(cfg);
  for (std::uint64_t index = 0; index < 50; ++index) {
    RngStream rng(9, index);
    REQUIRE(sampler.simulate(rng, false).classification == EventClass::no_click);
  }
}

TEST_CASE("single shared photon splits evenly and exactly") {
  const InputPair excited(Complex(1.0, 0.0), Complex(0.0, 0.0));
  const InputPair ground(Complex(0.0, 0.0), Complex(1.0, 0.0));
  const ProtocolConfig cfg(excited, ground, DynamicsParams(1.0, 0.2), 3.0);
  const EstimateReport report = estimate(cfg, 4000, 11);

  REQUIRE(report.two_clicks.count == 0);
  const double p_click = 1.0 - std::exp(-2.0 * 0.2 * 3.0);
  const double sigma = std::sqrt(p_click * (1.0 - p_click) / 4000.0);
  const double clicked = report.one_click_plus.probability +
                         report.one_click_minus.probability;
  REQUIRE(std::abs(clicked - p_click) <= 3.0 * sigma);
  // D+ and D- are symmetric for a photon in one arm.
  const double half_sigma = std::sqrt(0.25 * p_click * (2.0 - p_click) / 4000.0);
  REQUIRE(std::abs(report.one_click_plus.probability - 0.5 * p_click) <=
          3.0 * half_sigma);
  // The conditional state is |g e> exactly, so every sample reports 1/2.
  REQUIRE(std::abs(*report.mean_conditional_fidelity - 0.5) < 1e-12);
  REQUIRE(*report.fidelity_std_error < 1e-12);
}

TEST_CASE("estimates agree with the closed-form distribution") {
  const ProtocolConfig cfg = fixture_config();
  const oracles::EventOracle ref = oracles::event_oracle(
      Complex(kInvSqrt2, 0.0), Complex(kInvSqrt2, 0.0), Complex(kInvSqrt2, 0.0),
      Complex(kInvSqrt2, 0.0), 1.0, 0.1, 2.0);
  const std::uint64_t n = 20000;
  const EstimateReport report = estimate(cfg, n, 7);

  const auto check = [n](double estimate_p, double true_p) {
    const double sigma = std::sqrt(true_p * (1.0 - true_p) / static_cast<double>(n));
    REQUIRE(std::abs(estimate_p - true_p) <= 3.0 * sigma);
  };
  check(report.no_click.probability, ref.p_no_click);
  check(report.one_click_plus.probability, ref.p_one_each);
  check(report.one_click_minus.probability, ref.p_one_each);
  check(report.two_clicks.probability, ref.p_two);
  REQUIRE(std::abs(*report.mean_conditional_fidelity - ref.fidelity) <=
          3.0 * *report.fidelity_std_error + 1e-12);

  const double sum = report.no_click.probability +
                     report.one_click_plus.probability +
                     report.one_click_minus.probability +
                     report.two_clicks.probability;
  REQUIRE(std::abs(sum - 1.0) < 1e-14);  // counts partition n exactly
  REQUIRE(report.no_click.count + report.one_click_plus.count +
              report.one_click_minus.count + report.two_clicks.count ==
          n);
  REQUIRE(report.n_trajectories == n);
  REQUIRE(report.seed == 7);
  REQUIRE(report.p_step1 == TrajectorySampler(cfg).p_step1());
}

TEST_CASE("estimates are bit-identical for any worker count") {
  const ProtocolConfig cfg = fixture_config();
  const EstimateReport base = estimate(cfg, 3000, 3, 1);
  for (const unsigned workers : {2u, 3u, 8u}) {
    const EstimateReport other = estimate(cfg, 3000, 3, workers);
    REQUIRE(other.no_click.count == base.no_click.count);
    REQUIRE(other.one_click_plus.count == base.one_click_plus.count);
    REQUIRE(other.one_click_minus.count == base.one_click_minus.count);
    REQUIRE(other.two_clicks.count == base.two_clicks.count);
    REQUIRE(other.no_click.probability == base.no_click.probability);
    REQUIRE(other.no_click.std_error == base.no_click.std_error);
    REQUIRE(*other.mean_conditional_fidelity == *base.mean_conditional_fidelity);
    REQUIRE(*other.fidelity_std_error == *base.fidelity_std_error);
  }
  // Same seed, same answer; different seed, different trajectories.
  const EstimateReport again = estimate(cfg, 3000, 3, 2);
  REQUIRE(again.no_click.count == base.no_click.count);
  // A different seed reshuffles the per-index outcomes. (The mean fidelity
  // cannot tell seeds apart here: it is the same constant on every one-click
  // trajectory of a matched config.)
  const TrajectorySampler sampler(cfg);
  std::vector<EventClass> seed3, seed4;
  for (std::uint64_t index = 0; index < 64; ++index) {
    RngStream r3(3, index), r4(4, index);
    seed3.push_back(sampler.simulate(r3, false).classification);
    seed4.push_back(sampler.simulate(r4, false).classification);
  }
  REQUIRE(seed3 != seed4);

  REQUIRE_THROWS_AS(estimate(cfg, 0, 1), validation_error);
  REQUIRE_THROWS_AS(estimate(cfg, 10, 1, 0), validation_error);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "swapcalc/chain.hpp"
#include "swapcalc/fock.hpp"

using namespace swapcalc;
using namespace swapcalc::fock;

namespace {

SparseKet random_two_mode_state(std::mt19937_64& rng) {
  ModeRegistry reg(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SparseKet ket(reg.total_modes());
  for (int n0 = 0; n0 <= 4; ++n0) {
    for (int n1 = 0; n0 + n1 <= 4; ++n1) {
      Key k{};
      k.set(reg.signal_a(0), n0);
      k.set(reg.signal_b(0), n1);
      ket.add(k, {u(rng), u(rng)});
    }
  }
  const double norm = std::sqrt(ket.norm_squared());
  SparseKet out(ket.mode_count());
  for (const auto& [k, a] : ket.amplitudes()) out.add(k, a / norm);
  return out;
}

double ket_distance(const SparseKet& x, const SparseKet& y) {
  double worst = 0.0;
  for (const auto& [k, a] : x.amplitudes()) {
    auto it = y.amplitudes().find(k);
    const Complex b = it == y.amplitudes().end() ? Complex{} : it->second;
    worst = std::max(worst, std::abs(a - b));
  }
  for (const auto& [k, b] : y.amplitudes()) {
    if (!x.amplitudes().contains(k)) worst = std::max(worst, std::abs(b));
  }
  return worst;
}

}  // namespace

TEST_CASE("source state structure") {
  ModeRegistry reg(2);
  const auto stats = SourceStats::exact(0.1);
  const auto ket = source_state(stats, reg, 0, 1);
  CHECK(ket.norm_squared() == Catch::Approx(1.0).epsilon(1e-14));

  // vacuum only
  const auto vac = source_state(SourceStats::quadratic(0.0), reg, 0, 1);
  REQUIRE(vac.amplitudes().size() == 1);
  CHECK(vac.norm_squared() == Catch::Approx(1.0).epsilon(1e-14));

  // the three four-photon kets carry equal probability p2/3
  const auto four = source_component(stats, 2, reg, 0, 1);
  REQUIRE(four.amplitudes().size() == 3);
  for (const auto& [k, a] : four.amplitudes())
    CHECK(std::norm(a) == Catch::Approx(stats.p2 / 3.0).epsilon(1e-12));
}

TEST_CASE("loss channel limits") {
  ModeRegistry reg(2);
  const auto stats = SourceStats::exact(0.2);

  auto ket = source_state(stats, reg, 0, 1);
  apply_loss(ket, reg, 0, 1.0);
  CHECK(ket_distance(ket, source_state(stats, reg, 0, 1)) < 1e-14);

  apply_loss(ket, reg, 0, 0.0);
  for (const auto& [k, a] : ket.amplitudes()) {
    CHECK(k.get(reg.signal_a(0)) == 0);
    CHECK(k.get(reg.signal_b(0)) == 0);
  }
  CHECK(ket.norm_squared() == Catch::Approx(1.0).epsilon(1e-12));

  // single photon splits with amplitudes sqrt(eta), sqrt(1-eta)
  SparseKet one(reg.total_modes());
  Key k{};
  k.set(reg.signal_a(0), 1);
  one.add(k, 1.0);
  apply_loss(one, reg, 0, 0.36);
  Key kept{};
  kept.set(reg.signal_a(0), 1);
  Key lost{};
  lost.set(reg.loss_a(0), 1);
  CHECK(std::abs(one.amplitudes().at(kept) - 0.6) < 1e-14);
  CHECK(std::abs(one.amplitudes().at(lost) - 0.8) < 1e-14);
}

TEST_CASE("dephasing") {
  ModeRegistry reg(1);
  SparseDensityMatrix rho(reg.total_modes());
  Key zero{};
  Key one{};
  one.set(reg.signal_a(0), 1);
  rho.add(one, zero, {0.3, 0.1});  // |1><0| coherence
  rho.add(one, one, 0.5);
  rho.add(zero, zero, 0.5);
  apply_dephasing(rho, reg, 0);
  CHECK(rho.element(one, zero) == Complex{0.0, 0.0});
  CHECK(rho.element(one, one) == Complex{0.5, 0.0});
  CHECK(rho.trace_real() == Catch::Approx(1.0));
  const auto snapshot = rho.elements();
  apply_dephasing(rho, reg, 0);  // idempotent
  CHECK(rho.elements().size() == snapshot.size());
}

TEST_CASE("reduced source state matches the closed forms") {
  const auto stats = SourceStats::exact(0.08);
  const double ei = 0.62, ej = 0.47;

  const auto full = reduced_source_state(stats, ei, ej);
  CHECK(full.trace_real() == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(full.max_hermiticity_violation() < 1e-12);

  // double emission with one photon surviving per channel
  const auto two = reduced_source_component(stats, 2, ei, ej);
  ModeRegistry reg(2);
  double block_trace = 0.0;
  for (const auto& [kb, v] : two.elements()) {
    if (kb.first != kb.second) continue;
    const Key& k = kb.first;
    if (k.get(reg.signal_a(0)) + k.get(reg.signal_b(0)) == 1 &&
        k.get(reg.signal_a(1)) + k.get(reg.signal_b(1)) == 1)
      block_trace += v.real();
  }
  const double expected = 4.0 * stats.p2 * ei * ej * (1 - ei) * (1 - ej);
  CHECK(block_trace == Catch::Approx(expected).epsilon(1e-12));

  // ensemble split: 2/3 entangled pair + 1/3 completely mixed.  The pair
  // weight shows up in the ab<->ba coherence (the mixed part has none), and
  // the overall matrix element on the pair is 2/3 + 1/3 * 1/4 = 3/4.
  Key ab{};
  ab.set(reg.signal_a(0), 1);
  ab.set(reg.signal_b(1), 1);
  Key ba{};
  ba.set(reg.signal_b(0), 1);
  ba.set(reg.signal_a(1), 1);
  CHECK(two.element(ab, ba).real() / expected == Catch::Approx(-2.0 / 3.0 / 2.0).epsilon(1e-10));
  const double singlet =
      0.5 * (two.element(ab, ab).real() + two.element(ba, ba).real() -
             2.0 * two.element(ab, ba).real());
  CHECK(singlet / expected == Catch::Approx(0.75).epsilon(1e-10));

  // one-pair sector: entangled pair with weight p1 ei ej
  const auto one = reduced_source_component(stats, 1, ei, ej);
  const double psi_minus =
      0.5 * (one.element(ab, ab).real() + one.element(ba, ba).real() -
             2.0 * one.element(ab, ba).real());
  CHECK(psi_minus == Catch::Approx(stats.p1 * ei * ej).epsilon(1e-12));

  // double emission, both photons of one channel surviving
  const auto two22 = reduced_source_component(stats, 2, 1.0, 1.0);
  CHECK(two22.trace_real() == Catch::Approx(stats.p2).epsilon(1e-12));
}

TEST_CASE("detector model") {
  const DetectorModel pnr{0.73, 1.0};
  for (int n = 0; n <= 4; ++n) {
    CHECK(pnr.p_detect(0, n) == Catch::Approx(std::pow(0.27, n)));
    if (n >= 1) {
      // PNR equals a perfect detector behind a beam splitter
      CHECK(pnr.p_detect(1, n) == Catch::Approx(n * 0.73 * std::pow(0.27, n - 1)));
    }
  }
  const DetectorModel threshold{0.73, 0.0};
  CHECK(threshold.p_detect(1, 2) == Catch::Approx(0.73 * (1 + 0.27)));
}

TEST_CASE("bell basis change identities") {
  ModeRegistry reg(2);
  // psi+_ab = phi-_cd, phi+_ab = phi+_cd, psi-_ab = -psi-_cd, phi-_ab = psi+_cd
  auto expect_equal = [&](const SparseKet& x, const SparseKet& y, double sign) {
    SparseKet scaled(y.mode_count());
    for (const auto& [k, a] : y.amplitudes()) scaled.add(k, sign * a);
    CHECK(ket_distance(x, scaled) < 1e-12);
  };
  expect_equal(bell_state(reg, 0, 1, 'p', +1), bell_state(reg, 0, 1, 'f', -1,
                                                          BsmBasis::diagonal), 1.0);
  expect_equal(bell_state(reg, 0, 1, 'f', +1), bell_state(reg, 0, 1, 'f', +1,
                                                          BsmBasis::diagonal), 1.0);
  expect_equal(bell_state(reg, 0, 1, 'p', -1), bell_state(reg, 0, 1, 'p', -1,
                                                          BsmBasis::diagonal), -1.0);
  expect_equal(bell_state(reg, 0, 1, 'f', -1), bell_state(reg, 0, 1, 'p', +1,
                                                          BsmBasis::diagonal), 1.0);
}

TEST_CASE("bsm projector identities") {
  ModeRegistry reg(2);
  // two opposite photons in one channel belong to the success span
  SparseKet same_channel(reg.total_modes());
  Key k{};
  k.set(reg.signal_a(0), 1);
  k.set(reg.signal_b(0), 1);
  same_channel.add(k, 1.0);
  const auto kept =
      apply_bsm_projector(same_channel, reg, 0, 1, BsmBasis::standard, BsmOutcome::none);
  CHECK(ket_distance(kept, same_channel) < 1e-14);

  // a lone photon can never fire the measurement
  SparseKet lone(reg.total_modes());
  Key k1{};
  k1.set(reg.signal_a(0), 1);
  lone.add(k1, 1.0);
  CHECK(apply_bsm_projector(lone, reg, 0, 1, BsmBasis::standard, BsmOutcome::none).empty());

  // plus/minus split the success span
  SparseKet cross(reg.total_modes());
  Key kc{};
  kc.set(reg.signal_a(0), 1);
  kc.set(reg.signal_b(1), 1);
  cross.add(kc, 1.0);
  CHECK(!apply_bsm_projector(cross, reg, 0, 1, BsmBasis::standard, BsmOutcome::minus).empty());
  CHECK(apply_bsm_projector(cross, reg, 0, 1, BsmBasis::standard, BsmOutcome::plus).empty());
}

TEST_CASE("four-photon term projects the partner channel onto a N00N state") {
  ModeRegistry reg(2);
  const auto stats = SourceStats::exact(0.1);
  auto four = source_component(stats, 2, reg, 0, 1);
  // keep the opposite-polarization component of channel 0
  SparseKet projected(four.mode_count());
  for (const auto& [k, a] : four.amplitudes()) {
    if (k.get(reg.signal_a(0)) == 1 && k.get(reg.signal_b(0)) == 1) projected.add(k, a);
  }
  REQUIRE(!projected.empty());
  rotate_to_diagonal(projected, reg, 1);
  double p11 = 0.0;
  for (const auto& [k, a] : projected.amplitudes()) {
    if (k.get(reg.signal_a(1)) == 1 && k.get(reg.signal_b(1)) == 1) p11 += std::norm(a);
  }
  CHECK(p11 < 1e-12);
}

TEST_CASE("loss equivalence across the splitter") {
  std::mt19937_64 rng(31);
  CHECK(loss_equivalence_deviation(random_two_mode_state(rng), 1.0) < 1e-12);
  CHECK(loss_equivalence_deviation(random_two_mode_state(rng), 0.0) < 1e-12);
  for (int trial = 0; trial < 10; ++trial) {
    CHECK(loss_equivalence_deviation(random_two_mode_state(rng), 0.7) < 1e-12);
  }
}

TEST_CASE("sector traces reproduce the coefficient calculus") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.1, 0.95);
  for (SigmaRule rule : {SigmaRule::standard(), SigmaRule::absm()}) {
    for (int n : {2, 3}) {
      std::vector<SourceStats> sources;
      for (int s = 0; s < n; ++s) sources.push_back(SourceStats::exact(0.05 + 0.05 * s));
      std::vector<double> etas(static_cast<std::size_t>(2 * n), 1.0);
      for (std::size_t c = 1; c + 1 < etas.size(); ++c) etas[c] = u(rng);
      const ChainSpec spec(sources, etas, rule);

      EmissionSequence nu(static_cast<std::size_t>(n), 0);
      while (true) {
        const auto t = sector_trace(spec, nu);
        const double expected = p_sequence(spec, nu) * beta_sequence(spec, nu);
        CHECK(t.coincidence == Catch::Approx(expected).margin(1e-12));
        int i = 0;
        while (i < n && ++nu[static_cast<std::size_t>(i)] == 3)
          nu[static_cast<std::size_t>(i++)] = 0;
        if (i == n) break;
      }
    }
  }
}

TEST_CASE("chain trace of a clean two-source link") {
  SourceStats s = SourceStats::quadratic(0.04);
  s.p2 = 0.0;
  s.p0 = 1.0 - s.p1;
  const ChainSpec spec({s, s}, {1, 1, 1, 1}, SigmaRule::standard());
  const auto t = chain_trace(spec);
  CHECK(t.eta_bar == Catch::Approx(0.04 * 0.04 / 2.0).epsilon(1e-12));
  CHECK(t.eta_ab == Catch::Approx(t.eta_bar_ab).epsilon(1e-12));  // unit fidelity
}

TEST_CASE("monte carlo cross check") {
  std::vector<SourceStats> sources = {SourceStats::exact(0.15), SourceStats::exact(0.2)};
  const ChainSpec spec(sources, {1, 0.8, 0.7, 1}, SigmaRule::standard());

  const auto a = monte_carlo_cross_check(spec, 200000, 42);
  const auto b = monte_carlo_cross_check(spec, 200000, 42);
  CHECK(a.successes == b.successes);  // seed-pinned

  const double exact = chain_trace(spec).eta_bar;
  CHECK(std::abs(a.eta_bar - exact) <= 4.0 * a.std_error);

  // dead sources never fire
  std::vector<SourceStats> dead = {SourceStats::quadratic(0.0), SourceStats::quadratic(0.0)};
  const ChainSpec empty_spec(dead, {1, 0.8, 0.7, 1}, SigmaRule::standard());
  CHECK(monte_carlo_cross_check(empty_spec, 1000, 7).successes == 0);
  CHECK_THROWS_AS(monte_carlo_cross_check(spec, 0, 1), std::invalid_argument);
}

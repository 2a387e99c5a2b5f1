#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "swapcalc/chain.hpp"

using namespace swapcalc;

namespace {

std::vector<double> random_etas(std::mt19937_64& rng, std::size_t n_sources,
                                bool unit_outer = true) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> etas(2 * n_sources);
  for (auto& e : etas) e = u(rng);
  if (unit_outer) {
    etas.front() = 1.0;
    etas.back() = 1.0;
  }
  return etas;
}

ChainSpec random_chain(std::mt19937_64& rng, std::size_t n_sources, SigmaRule rule,
                       double p_max = 0.25) {
  std::uniform_real_distribution<double> up(0.001, p_max);
  std::vector<SourceStats> sources;
  for (std::size_t i = 0; i < n_sources; ++i) sources.push_back(SourceStats::exact(up(rng)));
  return ChainSpec(std::move(sources), random_etas(rng, n_sources), rule);
}

// Unpruned reference: walk every ternary sequence and add p * L(prod betas).
double naive_sum(const ChainSpec& spec, detail::SumKind kind) {
  const std::size_t n = spec.source_count();
  std::vector<int> nu(n, 0);
  double total = 0.0;
  while (true) {
    bool admissible = true;
    if (kind != detail::SumKind::coincidence) {
      const int lo = kind == detail::SumKind::bell ? 1 : 1;
      const int hi = kind == detail::SumKind::bell ? 1 : 2;
      admissible = nu.front() >= lo && nu.front() <= hi && nu.back() >= lo && nu.back() <= hi;
    }
    if (admissible) {
      if (kind == detail::SumKind::bell) {
        int n2 = 0;
        for (int v : nu) n2 += v == 2;
        total += p_sequence(spec, nu) * (0.25 * beta_sequence(spec, nu) +
                                         0.75 * std::pow(2.0 / 3.0, n2) *
                                             beta_hat_sequence(spec, nu));
      } else {
        total += p_sequence(spec, nu) * beta_sequence(spec, nu);
      }
    }
    std::size_t i = 0;
    while (i < n && ++nu[i] == 3) nu[i++] = 0;
    if (i == n) break;
  }
  return total;
}

}  // namespace

TEST_CASE("source statistics") {
  const auto exact = SourceStats::exact(8.0 / 27.0);
  CHECK(exact.lambda_sq == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(exact.p2 == Catch::Approx(4.0 / 27.0).epsilon(1e-12));
  CHECK(exact.p0 == Catch::Approx(15.0 / 27.0).epsilon(1e-12));

  const auto quad = SourceStats::quadratic(0.01);
  CHECK(quad.p2 == Catch::Approx(7.5e-5));
  CHECK(quad.p0 == Catch::Approx(1.0 - 0.01 - 7.5e-5));

  CHECK_THROWS_AS(SourceStats::exact(0.31), std::invalid_argument);
  CHECK_THROWS_AS(SourceStats::quadratic(-0.1), std::invalid_argument);

  // exact mode reproduces the squeezed-vacuum ratio, quadratic its small-p limit
  const auto small = SourceStats::exact(1e-4);
  CHECK(small.p2 / (small.p1 * small.p1) == Catch::Approx(0.75).epsilon(1e-3));
}

TEST_CASE("pair coefficients") {
  const double ei = 0.7, ej = 0.4;
  CHECK(beta_pair(1, 1, ei, ej, 0, 1).constant_term() == Catch::Approx(0.5 * ei * ej));
  CHECK(beta_pair(1, 1, ei, ej, 0, 1).term_count() == 1);

  const auto b20 = beta_pair(2, 0, ei, ej, 0, 1);
  CHECK(b20.coefficient(1u << 0) == Catch::Approx(ei * ei / 3.0));
  CHECK(b20.constant_term() == 0.0);

  const auto b02 = beta_pair(0, 2, ei, ej, 0, 1);
  CHECK(b02.coefficient(1u << 1) == Catch::Approx(ej * ej / 3.0));

  CHECK(beta_pair(0, 0, ei, ej, 0, 1).is_zero());
  CHECK(beta_pair(0, 1, ei, ej, 0, 1).is_zero());
  CHECK(beta_pair(1, 0, ei, ej, 0, 1).is_zero());

  const auto b22 = beta_pair(2, 2, ei, ej, 0, 1);
  CHECK(b22.constant_term() == Catch::Approx(2 * ei * ej * 0.3 * 0.6));
  CHECK(b22.coefficient(1u << 0) == Catch::Approx(ei * ei * 0.6 * 0.6 / 3.0));
  CHECK(b22.coefficient(1u << 1) == Catch::Approx(ej * ej * 0.3 * 0.3 / 3.0));

  CHECK_THROWS_AS(beta_pair(3, 0, ei, ej, 0, 1), std::invalid_argument);
}

TEST_CASE("sequence coefficients") {
  auto chain = [](SigmaRule rule, std::vector<double> etas) {
    std::vector<SourceStats> s(etas.size() / 2, SourceStats::quadratic(0.01));
    return ChainSpec(std::move(s), std::move(etas), rule, true);
  };

  // two sources, unit transmissions
  const auto two = chain(SigmaRule::standard(), {1, 1, 1, 1});
  CHECK(beta_sequence(two, {1, 1}) == Catch::Approx(0.5));

  const double e2 = 0.8, e3 = 0.55, e4 = 0.3, e5 = 0.9;
  for (SigmaRule rule : {SigmaRule::standard(), SigmaRule::absm()}) {
    const auto three = chain(rule, {1, e2, e3, e4, e5, 1});
    CHECK(beta_sequence(three, {2, 0, 2}) ==
          Catch::Approx(e2 * e2 * e5 * e5 / 9.0).epsilon(1e-12));
    CHECK(beta_hat_sequence(three, {1, 2, 1}) ==
          Catch::Approx(e2 * e3 * e4 * e5 * (1 - e3) * (1 - e4)).epsilon(1e-12));
    CHECK(beta_hat_sequence(three, {0, 2, 0}) == 0.0);
    // all-singles sequences carry no tags
    CHECK(beta_hat_sequence(three, {1, 1, 1}) ==
          Catch::Approx(beta_sequence(three, {1, 1, 1})).epsilon(1e-12));
  }

  const auto std3 = chain(SigmaRule::standard(), {1, e2, e3, e4, e5, 1});
  const auto absm3 = chain(SigmaRule::absm(), {1, e2, e3, e4, e5, 1});
  CHECK(beta_sequence(std3, {0, 2, 0}) == Catch::Approx(e3 * e3 * e4 * e4 / 3.0).epsilon(1e-12));
  CHECK(beta_sequence(absm3, {0, 2, 0}) == 0.0);
}

TEST_CASE("sequence probabilities") {
  std::vector<SourceStats> s = {SourceStats::quadratic(0.01), SourceStats::quadratic(0.01)};
  const ChainSpec spec(s, {1, 0.5, 0.5, 1}, SigmaRule::standard());
  CHECK(p_sequence(spec, {0, 0}) == Catch::Approx(s[0].p0 * s[1].p0));
  CHECK(p_sequence(spec, {1, 1}) == Catch::Approx(1e-4));
  CHECK(p_sequence(spec, {2, 1}) == Catch::Approx(7.5e-5 * 0.01));
}

TEST_CASE("pruned and unpruned sums agree") {
  std::mt19937_64 rng(11);
  for (SigmaRule rule : {SigmaRule::standard(), SigmaRule::absm()}) {
    for (std::size_t n : {2u, 3u, 4u, 5u}) {
      const auto spec = random_chain(rng, n, rule);
      CHECK(coincidence_efficiency(spec) ==
            Catch::Approx(naive_sum(spec, detail::SumKind::coincidence)).margin(1e-15));
      CHECK(terminated_efficiency(spec) ==
            Catch::Approx(naive_sum(spec, detail::SumKind::terminated)).margin(1e-15));
      CHECK(bell_efficiency(spec) ==
            Catch::Approx(naive_sum(spec, detail::SumKind::bell)).margin(1e-15));
    }
  }
}

TEST_CASE("transfer recursion matches enumeration") {
  std::mt19937_64 rng(12);
  for (SigmaRule rule : {SigmaRule::standard(), SigmaRule::absm()}) {
    for (std::size_t n : {2u, 3u, 5u, 7u}) {
      const auto spec = random_chain(rng, n, rule);
      CHECK(coincidence_efficiency_fast(spec) ==
            Catch::Approx(coincidence_efficiency(spec)).epsilon(1e-12));
      CHECK(terminated_efficiency_fast(spec) ==
            Catch::Approx(terminated_efficiency(spec)).epsilon(1e-12));
      CHECK(bell_efficiency_fast(spec) ==
            Catch::Approx(bell_efficiency(spec)).epsilon(1e-12));
    }
  }
}

TEST_CASE("enumeration cap") {
  std::vector<SourceStats> s(17, SourceStats::quadratic(0.01));
  std::vector<double> etas(34, 1.0);
  const ChainSpec spec(std::move(s), std::move(etas), SigmaRule::standard());
  CHECK_THROWS_AS(coincidence_efficiency(spec), std::invalid_argument);
  CHECK_NOTHROW(coincidence_efficiency_fast(spec));
}

TEST_CASE("protocol ordering and metric ordering") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    // ordering invariants concern the operating regime of modest emission
    // probability; at large p the terminated sum is dominated by end-source
    // double emissions the Bell-projected numerator excludes by construction
    const auto std_spec = random_chain(rng, 3, SigmaRule::standard(), 0.05);
    const ChainSpec absm_spec(std_spec.sources, std_spec.channel_eta, SigmaRule::absm());
    CHECK(coincidence_efficiency(absm_spec) <= coincidence_efficiency(std_spec) + 1e-15);

    const auto m = link_metrics(std_spec);
    CHECK(m.eta_ab <= m.eta_bar_ab + 1e-15);
    CHECK(m.eta_bar_ab <= m.eta_bar_chain + 1e-15);
    CHECK(m.fidelity >= 0.25);
    CHECK(m.fidelity <= 1.0 + 1e-12);
  }
}

TEST_CASE("coincidence efficiency is monotone in channels and pair probability") {
  // Holds for channels below one-half transmission: every loss-gated term
  // in the coefficients switches sign at eta = 1/2, where a surviving extra
  // photon starts turning successes into discarded 3-photon events under
  // number-resolving detection.
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.05, 0.45);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SourceStats> sources(3, SourceStats::exact(0.01));
    std::vector<double> etas = {1.0, u(rng), u(rng), u(rng), u(rng), 1.0};
    auto spec = ChainSpec(std::move(sources), std::move(etas), SigmaRule::standard());
    const double base = coincidence_efficiency(spec);
    for (std::size_t c = 1; c + 1 < spec.channel_eta.size(); ++c) {
      ChainSpec bumped = spec;
      bumped.channel_eta[c] = std::min(1.0, bumped.channel_eta[c] + 0.02);
      CHECK(coincidence_efficiency(bumped) >= base - 1e-15);
    }
    ChainSpec hotter = spec;
    hotter.sources[1] = SourceStats::exact(std::min(kMaxPairProbability,
                                                    hotter.sources[1].p1 * 1.05));
    CHECK(coincidence_efficiency(hotter) >= base - 1e-15);
  }
}

TEST_CASE("single-pair chains have unit fidelity") {
  // force p2 = 0 by hand
  SourceStats s = SourceStats::quadratic(0.02);
  s.p2 = 0.0;
  s.p0 = 1.0 - s.p1;
  const ChainSpec spec({s, s}, {1, 0.6, 0.7, 1}, SigmaRule::standard());
  CHECK(bell_fidelity(spec) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(bell_efficiency(spec) == Catch::Approx(terminated_efficiency(spec)).epsilon(1e-12));
}

TEST_CASE("dead terminal source leaves the fidelity undefined") {
  SourceStats dead = SourceStats::quadratic(0.0);
  const ChainSpec spec({SourceStats::quadratic(0.01), dead}, {1, 0.6, 0.7, 1},
                       SigmaRule::standard());
  CHECK(terminated_efficiency(spec) == 0.0);
  CHECK_THROWS_AS(bell_fidelity(spec), UndefinedFidelityError);
}

TEST_CASE("lost pair fidelity") {
  CHECK(lost_pair_fidelity(0) == 1.0);
  CHECK(lost_pair_fidelity(1) == Catch::Approx(0.75));
  CHECK(lost_pair_fidelity(400) == Catch::Approx(0.25));
  CHECK_THROWS_AS(lost_pair_fidelity(-1), std::invalid_argument);
}

TEST_CASE("spec validation") {
  std::vector<SourceStats> s2(2, SourceStats::quadratic(0.01));
  CHECK_THROWS_AS(ChainSpec({SourceStats::quadratic(0.01)}, {1.0, 1.0}, SigmaRule::standard()),
                  std::invalid_argument);
  CHECK_THROWS_AS(ChainSpec(s2, {1, 0.5, 0.5}, SigmaRule::standard()), std::invalid_argument);
  CHECK_THROWS_AS(ChainSpec(s2, {0.9, 0.5, 0.5, 1}, SigmaRule::standard()),
                  std::invalid_argument);
  CHECK_NOTHROW(ChainSpec(s2, {0.9, 0.5, 0.5, 1}, SigmaRule::standard(), true));

  ChainSpec folded(s2, {1, 0.5, 0.5, 1}, SigmaRule::standard());
  folded.fold_detector_efficiency(0.8);
  CHECK(folded.channel_eta[0] == 1.0);
  CHECK(folded.channel_eta[1] == Catch::Approx(0.4));
  CHECK(folded.channel_eta[3] == 1.0);
}

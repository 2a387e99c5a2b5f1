#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "swapcalc/algebra.hpp"

namespace swapcalc {

/// Largest single-pair probability a two-mode squeezed source can reach,
/// attained at lambda_sq = 1/3.
inline constexpr double kMaxPairProbability = 8.0 / 27.0;

/// Thrown when a fidelity is requested for a link that never delivers a
/// two-photon outcome (zero terminated efficiency).
class UndefinedFidelityError : public std::domain_error {
 public:
  explicit UndefinedFidelityError(const std::string& what) : std::domain_error(what) {}
};

/// Per-source n-pair emission probabilities, truncated at two pairs.
/// Exact mode derives p2 from the squeezed-vacuum photon statistics
/// p(n) = (n+1)(1-x)^2 x^n with x = lambda_sq chosen so p(1) matches;
/// quadratic mode uses the small-p approximation p2 = (3/4) p1^2.
/// Either way p0 = 1 - p1 - p2.
struct SourceStats {
  double p1 = 0.0;
  double p2 = 0.0;
  double p0 = 1.0;
  double lambda_sq = std::numeric_limits<double>::quiet_NaN();

  static SourceStats exact(double p1) {
    check_p1(p1);
    // Root of 2(1-x)^2 x = p1 on [0, 1/3] in closed form (the branch of the
    // depressed cubic t^3 - t/3 + (2/27 - p1/2) landing in that interval);
    // bisection is ill conditioned here because the cubic flattens at 1/3.
    const double arg = std::clamp(6.75 * p1 - 1.0, -1.0, 1.0);
    const double x = std::clamp(
        2.0 / 3.0 * (1.0 + std::cos(std::acos(arg) / 3.0 - 4.0 * std::acos(-1.0) / 3.0)), 0.0,
        1.0 / 3.0);
    SourceStats s;
    s.p1 = p1;
    s.p2 = 3.0 * (1.0 - x) * (1.0 - x) * x * x;
    s.p0 = 1.0 - s.p1 - s.p2;
    s.lambda_sq = x;
    return s;
  }

  static SourceStats quadratic(double p1) {
    check_p1(p1);
    SourceStats s;
    s.p1 = p1;
    s.p2 = 0.75 * p1 * p1;
    s.p0 = 1.0 - s.p1 - s.p2;
    return s;
  }

  double pn(int n) const {
    switch (n) {
      case 0: return p0;
      case 1: return p1;
      case 2: return p2;
      default: throw std::invalid_argument("pair count must be 0, 1 or 2");
    }
  }

 private:
  static void check_p1(double p1) {
    if (!(p1 >= 0.0 && p1 <= kMaxPairProbability + 1e-15))
      throw std::invalid_argument("p1 must lie in [0, 8/27]");
  }
};

/// A chain of N sources joined by N-1 linear-optical BSMs.  Source s feeds
/// channels 2s and 2s+1 (zero-based); BSM j sits between channels 2j+1 and
/// 2j+2.  The outer channels connect the end sources to the receivers and
/// are unit-transmission unless allow_lossy_terminals is set.
struct ChainSpec {
  std::vector<SourceStats> sources;
  std::vector<double> channel_eta;
  SigmaRule rule;
  bool allow_lossy_terminals = false;

  ChainSpec(std::vector<SourceStats> src, std::vector<double> eta, SigmaRule r,
            bool lossy_terminals = false)
      : sources(std::move(src)),
        channel_eta(std::move(eta)),
        rule(r),
        allow_lossy_terminals(lossy_terminals) {
    validate();
  }

  std::size_t source_count() const { return sources.size(); }
  std::size_t bsm_count() const { return sources.size() - 1; }

  /// Channel transmissions seen by BSM j.
  double bsm_eta_left(std::size_t j) const { return channel_eta[2 * j + 1]; }
  double bsm_eta_right(std::size_t j) const { return channel_eta[2 * j + 2]; }

  /// Folds a common detector efficiency into the channels feeding the BSMs.
  /// Outer channels are touched only when lossy terminals are allowed.
  void fold_detector_efficiency(double eta_d) {
    if (!(eta_d >= 0.0 && eta_d <= 1.0))
      throw std::invalid_argument("detector efficiency must lie in [0,1]");
    for (std::size_t c = 0; c < channel_eta.size(); ++c) {
      bool interior = c != 0 && c != channel_eta.size() - 1;
      if (interior || allow_lossy_terminals) channel_eta[c] *= eta_d;
    }
  }

 private:
  void validate() const {
    if (sources.size() < 2) throw std::invalid_argument("chain needs at least 2 sources");
    if (sources.size() > 64) throw std::invalid_argument("chain supports at most 64 sources");
    if (channel_eta.size() != 2 * sources.size())
      throw std::invalid_argument("chain needs exactly 2N channel efficiencies");
    for (double e : channel_eta)
      if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("channel efficiency outside [0,1]");
    if (!allow_lossy_terminals) {
      if (channel_eta.front() != 1.0 || channel_eta.back() != 1.0)
        throw std::invalid_argument("outer channels must be lossless (or set allow_lossy_terminals)");
    }
  }
};

/// Pair counts emitted by each source, entries in {0,1,2}.
using EmissionSequence = std::vector<int>;

/// Algebra-valued success coefficient of one BSM fed by m photons on its
/// left channel (transmission eta_i, owned by left_source) and n photons on
/// its right channel (eta_j, right_source).  Identically zero for
/// (0,0), (0,1) and (1,0).
inline AlgebraElement beta_pair(int m, int n, double eta_i, double eta_j,
                                unsigned left_source, unsigned right_source) {
  if (m < 0 || m > 2 || n < 0 || n > 2)
    throw std::invalid_argument("pair counts must lie in {0,1,2}");
  const double ti = 1.0 - eta_i;
  const double tj = 1.0 - eta_j;
  if (m == 1 && n == 1) return scalar(0.5 * eta_i * eta_j);
  if (m == 2 && n == 0) return sigma(left_source) * (eta_i * eta_i / 3.0);
  if (m == 0 && n == 2) return sigma(right_source) * (eta_j * eta_j / 3.0);
  if (m == 2 && n == 1)
    return scalar(eta_i * eta_j * ti) + sigma(left_source) * (eta_i * eta_i * tj / 3.0);
  if (m == 1 && n == 2)
    return scalar(eta_i * eta_j * tj) + sigma(right_source) * (eta_j * eta_j * ti / 3.0);
  if (m == 2 && n == 2)
    return scalar(2.0 * eta_i * eta_j * ti * tj) +
           sigma(left_source) * (eta_i * eta_i * tj * tj / 3.0) +
           sigma(right_source) * (eta_j * eta_j * ti * ti / 3.0);
  return AlgebraElement{};  // (0,0), (0,1), (1,0)
}

namespace detail {

inline void check_sequence(const ChainSpec& spec, const EmissionSequence& nu) {
  if (nu.size() != spec.source_count())
    throw std::invalid_argument("emission sequence length must equal source count");
  for (int v : nu)
    if (v < 0 || v > 2) throw std::invalid_argument("emission counts must lie in {0,1,2}");
}

inline AlgebraElement bsm_factor(const ChainSpec& spec, std::size_t j, int m, int n) {
  return beta_pair(m, n, spec.bsm_eta_left(j), spec.bsm_eta_right(j),
                   static_cast<unsigned>(j), static_cast<unsigned>(j + 1));
}

}  // namespace detail

/// Real coefficient of one emission sequence: the algebra product of the
/// per-BSM factors with every tag sent to 1 afterwards.
inline double beta_sequence(const ChainSpec& spec, const EmissionSequence& nu) {
  detail::check_sequence(spec, nu);
  AlgebraElement prod = scalar(1.0);
  for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
    prod = mul(prod, detail::bsm_factor(spec, j, nu[j], nu[j + 1]), spec.rule);
    if (prod.is_zero()) return 0.0;
  }
  return prod.sum_coefficients();
}

/// Variant keeping only events where every BSM fires on one photon from
/// each side: the tag-free part of each factor, multiplied as reals.
inline double beta_hat_sequence(const ChainSpec& spec, const EmissionSequence& nu) {
  detail::check_sequence(spec, nu);
  double prod = 1.0;
  for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
    prod *= detail::bsm_factor(spec, j, nu[j], nu[j + 1]).constant_term();
    if (prod == 0.0) return 0.0;
  }
  return prod;
}

/// Probability that the sources emit exactly the given pair counts.
inline double p_sequence(const ChainSpec& spec, const EmissionSequence& nu) {
  detail::check_sequence(spec, nu);
  double p = 1.0;
  for (std::size_t s = 0; s < spec.source_count(); ++s) p *= spec.sources[s].pn(nu[s]);
  return p;
}

namespace detail {

enum class SumKind { coincidence, terminated, bell };

inline bool first_allowed(SumKind kind, int v) {
  return kind == SumKind::coincidence || (kind == SumKind::terminated ? v > 0 : v == 1);
}
inline bool last_allowed(SumKind kind, int v) { return first_allowed(kind, v); }

inline constexpr int kDefaultEnumerationCap = 16;

/// Depth-first sum over emission sequences with the zero-coefficient
/// adjacencies (0,0), (0,1), (1,0) pruned.  For the bell kind the running
/// state carries both the algebra product and the tag-free real product so
/// the 1/4 + 3/4 (2/3)^n2 split is accumulated in one pass.
struct Enumerator {
  const ChainSpec& spec;
  SumKind kind;
  double total = 0.0;

  Enumerator(const ChainSpec& s, SumKind k) : spec(s), kind(k) {}

  void run() {
    for (int v = 0; v <= 2; ++v) {
      if (!first_allowed(kind, v)) continue;
      descend(0, v, spec.sources[0].pn(v), scalar(1.0), 1.0, v == 2 ? 1 : 0);
    }
  }

  void descend(std::size_t s, int v, double p, AlgebraElement beta, double beta_hat, int n2) {
    if (p == 0.0) return;
    if (s + 1 == spec.source_count()) {
      if (kind == SumKind::bell) {
        total += p * (0.25 * beta.sum_coefficients() +
                      0.75 * std::pow(2.0 / 3.0, n2) * beta_hat);
      } else {
        total += p * beta.sum_coefficients();
      }
      return;
    }
    for (int w = 0; w <= 2; ++w) {
      if (s + 2 == spec.source_count() && !last_allowed(kind, w)) continue;
      const AlgebraElement factor = bsm_factor(spec, s, v, w);
      if (factor.is_zero()) continue;
      AlgebraElement next = mul(beta, factor, spec.rule);
      double next_hat = beta_hat * factor.constant_term();
      if (next.is_zero() && (kind != SumKind::bell || next_hat == 0.0)) continue;
      descend(s + 1, w, p * spec.sources[s + 1].pn(w), std::move(next), next_hat,
              n2 + (w == 2 ? 1 : 0));
    }
  }
};

inline double enumerate_sum(const ChainSpec& spec, SumKind kind, int max_sources) {
  if (static_cast<int>(spec.source_count()) > max_sources)
    throw std::invalid_argument("chain too long for exhaustive enumeration (raise the cap)");
  Enumerator e(spec, kind);
  e.run();
  return e.total;
}

/// Same sums via a left-to-right transfer recursion, linear in N.  The
/// running coefficient is tracked as A + B*tag(s) for the tag of the source
/// about to be shared with the next BSM; closing a source reduces its
/// squared tag by the rule and sends a lone tag to 1.  Used for long chains
/// where enumeration is off the table; agreement with enumerate_sum is
/// checked in the tests.
inline double transfer_sum_beta(const ChainSpec& spec, SumKind kind) {
  const std::size_t n = spec.source_count();
  const double s2 = spec.rule.sigma_squared;
  struct State {
    double a = 0.0, b = 0.0;
  };
  std::vector<State> cur(3), next(3);
  for (int v = 0; v <= 2; ++v) {
    if (!first_allowed(kind, v)) continue;
    cur[v].a = spec.sources[0].pn(v);
  }
  for (std::size_t j = 0; j + 1 < n; ++j) {
    for (auto& st : next) st = State{};
    for (int v = 0; v <= 2; ++v) {
      const State st = cur[v];
      if (st.a == 0.0 && st.b == 0.0) continue;
      for (int w = 0; w <= 2; ++w) {
        if (j + 2 == n && !last_allowed(kind, w)) continue;
        const AlgebraElement f = bsm_factor(spec, j, v, w);
        if (f.is_zero()) continue;
        const double c00 = f.constant_term();
        const double cl = f.coefficient(std::uint64_t{1} << j);
        const double cr = f.coefficient(std::uint64_t{1} << (j + 1));
        const double weight = spec.sources[j + 1].pn(w);
        if (weight == 0.0) continue;
        // Close tag(j): degree 2 becomes s2, a leftover degree 1 maps to 1.
        next[w].a += weight * (st.a * (c00 + cl) + st.b * (c00 + cl * s2));
        next[w].b += weight * (st.a + st.b) * cr;
      }
    }
    std::swap(cur, next);
  }
  double total = 0.0;
  for (int v = 0; v <= 2; ++v) total += cur[v].a + cur[v].b;
  return total;
}

inline double transfer_sum_beta_hat(const ChainSpec& spec, SumKind kind) {
  const std::size_t n = spec.source_count();
  std::vector<double> cur(3, 0.0), next(3);
  for (int v = 0; v <= 2; ++v) {
    if (!first_allowed(kind, v)) continue;
    cur[v] = spec.sources[0].pn(v) * (v == 2 ? 2.0 / 3.0 : 1.0);
  }
  for (std::size_t j = 0; j + 1 < n; ++j) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int v = 0; v <= 2; ++v) {
      if (cur[v] == 0.0) continue;
      for (int w = 0; w <= 2; ++w) {
        if (j + 2 == n && !last_allowed(kind, w)) continue;
        const double c00 = bsm_factor(spec, j, v, w).constant_term();
        if (c00 == 0.0) continue;
        next[w] += cur[v] * c00 * spec.sources[j + 1].pn(w) * (w == 2 ? 2.0 / 3.0 : 1.0);
      }
    }
    std::swap(cur, next);
  }
  return cur[0] + cur[1] + cur[2];
}

inline double transfer_sum(const ChainSpec& spec, SumKind kind) {
  if (kind != SumKind::bell) return transfer_sum_beta(spec, kind);
  // the (2/3)^n2 reduction applies only to the unbroken-chain part
  return 0.25 * transfer_sum_beta(spec, SumKind::bell) +
         0.75 * transfer_sum_beta_hat(spec, SumKind::bell);
}

}  // namespace detail

/// Probability of the (2N-2)-fold coincidence connecting every BSM,
/// summed over all emission sequences.
inline double coincidence_efficiency(const ChainSpec& spec,
                                     int max_sources = detail::kDefaultEnumerationCap) {
  return detail::enumerate_sum(spec, detail::SumKind::coincidence, max_sources);
}

/// As coincidence_efficiency but restricted to sequences whose end sources
/// emit, so the vacuum-filtering receivers both see a photon.
inline double terminated_efficiency(const ChainSpec& spec,
                                    int max_sources = detail::kDefaultEnumerationCap) {
  return detail::enumerate_sum(spec, detail::SumKind::terminated, max_sources);
}

/// Weight of the delivered state on the target Bell state: sequences with
/// single pairs at both ends, each contributing 1/4 beta plus
/// 3/4 (2/3)^n2 beta_hat where n2 counts double emissions.
inline double bell_efficiency(const ChainSpec& spec,
                              int max_sources = detail::kDefaultEnumerationCap) {
  return detail::enumerate_sum(spec, detail::SumKind::bell, max_sources);
}

inline double bell_fidelity(const ChainSpec& spec,
                            int max_sources = detail::kDefaultEnumerationCap) {
  const double denom = terminated_efficiency(spec, max_sources);
  if (denom <= 0.0)
    throw UndefinedFidelityError("terminated efficiency is zero; fidelity undefined");
  return bell_efficiency(spec, max_sources) / denom;
}

/// Linear-time variants of the three sums for long chains.
inline double coincidence_efficiency_fast(const ChainSpec& spec) {
  return detail::transfer_sum(spec, detail::SumKind::coincidence);
}
inline double terminated_efficiency_fast(const ChainSpec& spec) {
  return detail::transfer_sum(spec, detail::SumKind::terminated);
}
inline double bell_efficiency_fast(const ChainSpec& spec) {
  return detail::transfer_sum(spec, detail::SumKind::bell);
}
inline double bell_fidelity_fast(const ChainSpec& spec) {
  const double denom = terminated_efficiency_fast(spec);
  if (denom <= 0.0)
    throw UndefinedFidelityError("terminated efficiency is zero; fidelity undefined");
  return bell_efficiency_fast(spec) / denom;
}

/// Fidelity of a connected chain in which every secondary photon of the n2
/// double emissions was lost: 1/4 + 3/4 (2/3)^n2.
inline double lost_pair_fidelity(int n2) {
  if (n2 < 0) throw std::invalid_argument("double-pair count must be nonnegative");
  return 0.25 + 0.75 * std::pow(2.0 / 3.0, n2);
}

/// Bundle of the per-link figures of merit.
struct LinkMetrics {
  double eta_bar_chain = 0.0;
  double eta_bar_ab = 0.0;
  double eta_ab = 0.0;
  double fidelity = 0.0;
};

inline LinkMetrics link_metrics(const ChainSpec& spec,
                                int max_sources = detail::kDefaultEnumerationCap) {
  LinkMetrics m;
  m.eta_bar_chain = coincidence_efficiency(spec, max_sources);
  m.eta_bar_ab = terminated_efficiency(spec, max_sources);
  m.eta_ab = bell_efficiency(spec, max_sources);
  if (m.eta_bar_ab <= 0.0)
    throw UndefinedFidelityError("terminated efficiency is zero; fidelity undefined");
  m.fidelity = m.eta_ab / m.eta_bar_ab;
  return m;
}

}  // namespace swapcalc

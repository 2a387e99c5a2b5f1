#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "swapcalc/chain.hpp"

namespace swapcalc {

/// Fiber attenuation used to translate total link loss into distance.
inline constexpr double kFiberAttenuationDbPerKm = 0.15;

inline double db_to_efficiency(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }
inline double efficiency_to_db(double eta) { return -10.0 * std::log10(eta); }

/// Chain of ell identical elementary links: per-BSM channel transmission
/// eta inside each link, eta_r on the channels feeding the repeater-node
/// BSMs, emission probability p at every source.
struct BalancedChainSpec {
  int ell = 1;
  double eta = 1.0;
  double eta_r = 1.0;
  double p = 0.0;
  SigmaRule rule;
};

/// Error terms of the closed-form chain fidelity.  eps0_prime/eps0 cover
/// connected single-double sequences; epsp_prime/epsp cover the remaining
/// multi-double families and vanish for a single link.  The epsp term
/// carries the l^2 growth for the standard protocol; under ABSM its
/// quadratic part drops and only linear growth in l remains.
struct FidelityErrorTerms {
  double eps0_prime = 0.0;
  double eps0 = 0.0;
  double epsp_prime = 0.0;
  double epsp = 0.0;

  double sum() const { return eps0_prime + eps0 + epsp_prime + epsp; }
};

inline FidelityErrorTerms fidelity_error_terms(int ell, double eta, double eta_r,
                                               SigmaRule rule) {
  if (ell < 1) throw std::invalid_argument("need at least one elementary link");
  const double s = rule.sigma();
  const double le = 1.0 - eta;
  const double lr = 1.0 - eta_r;
  FidelityErrorTerms t;
  t.eps0_prime = le;
  t.eps0 = 0.5 * (ell - 1) * (5.0 + s) * le * lr;
  if (ell > 1) {
    t.epsp_prime = 0.25 * (1.0 + s) * (1.0 + s * (ell - 2)) * le;
    t.epsp = 0.25 * (ell - 2) * (1.0 + s) * (1.0 + s) * (2.0 + s * (ell - 3)) * le * lr;
  }
  return t;
}

/// Closed-form Bell-state fidelity of a balanced chain, first order in p.
inline double closed_form_fidelity(const BalancedChainSpec& c) {
  const FidelityErrorTerms t = fidelity_error_terms(c.ell, c.eta, c.eta_r, c.rule);
  const double s = c.rule.sigma();
  const double numerator = 1.0 + c.p * (t.epsp + (11.0 + s) / (5.0 + s) * t.eps0);
  const double denominator = 1.0 + 4.0 * c.p * t.sum();
  return numerator / denominator;
}

struct AllowedEmission {
  double p = 0.0;
  bool clamped = false;  // capped at the physical maximum 8/27
};

/// Inverts the closed-form fidelity for the emission probability that
/// attains target fidelity F on a balanced chain.
inline AllowedEmission allowed_emission_probability(double fidelity, int ell, double eta,
                                                    double eta_r, SigmaRule rule) {
  if (!(fidelity > 0.25 && fidelity < 1.0))
    throw std::invalid_argument("target fidelity must lie in (1/4, 1)");
  const FidelityErrorTerms t = fidelity_error_terms(ell, eta, eta_r, rule);
  const double s = rule.sigma();
  const double denom = 4.0 * fidelity * t.sum() - t.epsp - (11.0 + s) / (5.0 + s) * t.eps0;
  if (denom <= 0.0) throw std::domain_error("target fidelity unreachable for this chain");
  AllowedEmission out;
  out.p = (1.0 - fidelity) / denom;
  if (out.p > kMaxPairProbability) {
    out.p = kMaxPairProbability;
    out.clamped = true;
  }
  return out;
}

/// Gain in elementary-link efficiency (proportional to p^2) from running
/// the alternating-basis protocol at fixed fidelity.
inline double elementary_gain(double fidelity, int ell, double eta, double eta_r) {
  const double p_absm = allowed_emission_probability(fidelity, ell, eta, eta_r,
                                                     SigmaRule::absm()).p;
  const double p_std = allowed_emission_probability(fidelity, ell, eta, eta_r,
                                                    SigmaRule::standard()).p;
  return (p_absm / p_std) * (p_absm / p_std);
}

/// Assembles the 2*ell-source chain of a balanced repeater: elementary-link
/// BSMs see (eta, eta), repeater-node BSMs see (eta_r, eta_r).
inline ChainSpec build_balanced_chain(const BalancedChainSpec& c, bool exact_stats = true) {
  if (c.ell < 1) throw std::invalid_argument("need at least one elementary link");
  const int n = 2 * c.ell;
  std::vector<SourceStats> sources(static_cast<std::size_t>(n),
                                   exact_stats ? SourceStats::exact(c.p)
                                               : SourceStats::quadratic(c.p));
  std::vector<double> etas(static_cast<std::size_t>(2 * n), 1.0);
  for (int j = 0; j + 1 < n; ++j) {
    const double e = (j % 2 == 0) ? c.eta : c.eta_r;
    etas[static_cast<std::size_t>(2 * j + 1)] = e;
    etas[static_cast<std::size_t>(2 * j + 2)] = e;
  }
  return ChainSpec(std::move(sources), std::move(etas), c.rule);
}

enum class ImbalancedChainType { IA, IB };

/// Chain of ell imbalanced elementary links with per-link BSM channels
/// (eta2, eta3).  Type IA alternates the imbalance direction link by link;
/// type IB repeats it.  Repeater-node channels carry eta_r.
inline ChainSpec build_imbalanced_chain(ImbalancedChainType type, int ell, double eta2,
                                        double eta3, double eta_r, double p, SigmaRule rule,
                                        bool exact_stats = true) {
  if (ell < 1) throw std::invalid_argument("need at least one elementary link");
  const int n = 2 * ell;
  std::vector<SourceStats> sources(static_cast<std::size_t>(n),
                                   exact_stats ? SourceStats::exact(p)
                                               : SourceStats::quadratic(p));
  std::vector<double> etas(static_cast<std::size_t>(2 * n), 1.0);
  for (int j = 0; j + 1 < n; ++j) {
    double left, right;
    if (j % 2 == 1) {
      left = right = eta_r;
    } else {
      const int link = j / 2;
      const bool flipped = type == ImbalancedChainType::IA && link % 2 == 1;
      left = flipped ? eta3 : eta2;
      right = flipped ? eta2 : eta3;
    }
    etas[static_cast<std::size_t>(2 * j + 1)] = left;
    etas[static_cast<std::size_t>(2 * j + 2)] = right;
  }
  return ChainSpec(std::move(sources), std::move(etas), rule);
}

/// Two-level repeater bookkeeping: average modes per elementary link,
/// second-level success probability, and pairs delivered per source mode.
struct RepeaterMetrics {
  double mu1 = 0.0;
  double p2 = 0.0;
  double eta_tilde_ab = 0.0;
};

/// Evaluates the two-level scheme on an explicit chain partitioned into
/// ell elementary links of two sources each.  Elementary-link success is
/// the coincidence at the link's central BSM; the second level conditions
/// the full terminated chain on all links having succeeded.
inline RepeaterMetrics two_level_efficiency(const ChainSpec& spec, int ell) {
  if (static_cast<int>(spec.source_count()) != 2 * ell)
    throw std::invalid_argument("chain must contain exactly 2*ell sources");
  double inv_sum = 0.0;
  double product = 1.0;
  for (int link = 0; link < ell; ++link) {
    std::vector<SourceStats> pair = {spec.sources[static_cast<std::size_t>(2 * link)],
                                     spec.sources[static_cast<std::size_t>(2 * link + 1)]};
    std::vector<double> etas = {1.0, spec.channel_eta[static_cast<std::size_t>(4 * link + 1)],
                                spec.channel_eta[static_cast<std::size_t>(4 * link + 2)], 1.0};
    const double eff = coincidence_efficiency(ChainSpec(std::move(pair), std::move(etas),
                                                        spec.rule));
    if (eff <= 0.0) throw std::domain_error("elementary link has zero success probability");
    inv_sum += 1.0 / eff;
    product *= eff;
  }
  RepeaterMetrics m;
  m.mu1 = inv_sum / ell;
  const double eta_bar_ab = terminated_efficiency_fast(spec);
  m.p2 = eta_bar_ab / product;
  m.eta_tilde_ab = ell * eta_bar_ab / (product * inv_sum);
  return m;
}

/// Entangled-pair rate from the multiplexed source rate R.
inline double pair_rate(const RepeaterMetrics& m, double source_rate) {
  if (source_rate < 0.0) throw std::invalid_argument("rate must be nonnegative");
  return source_rate * m.eta_tilde_ab;
}

/// Leading-order pairs-per-mode of a balanced chain dividing a total
/// channel loss, with the source probability tuned for the target
/// fidelity: eta_tilde = p^2 eta^2 eta_r^(2(l-1)) / 2^(2l-1), where
/// eta = eta_c^(1/2l) eta_d folds the BSM detector efficiency.
inline double balanced_link_efficiency(int ell, double total_loss_db, double fidelity,
                                       double eta_r, double eta_d, SigmaRule rule) {
  const double eta_c = db_to_efficiency(total_loss_db);
  const double eta = std::pow(eta_c, 1.0 / (2.0 * ell)) * eta_d;
  const double p = allowed_emission_probability(fidelity, ell, eta, eta_r, rule).p;
  return p * p * eta * eta * std::pow(eta_r, 2.0 * (ell - 1)) / std::ldexp(1.0, 2 * ell - 1);
}

struct OptimalLinkCount {
  int ell = 1;
  double eta_tilde_ab = 0.0;
};

/// Best elementary-link count for a given total loss; ties resolve to the
/// smaller count.
inline OptimalLinkCount optimal_link_count(double total_loss_db, double fidelity, double eta_r,
                                           double eta_d, int ell_max, SigmaRule rule) {
  if (ell_max < 1) throw std::invalid_argument("need at least one elementary link");
  OptimalLinkCount best;
  best.eta_tilde_ab = -1.0;
  for (int ell = 1; ell <= ell_max; ++ell) {
    double eff;
    try {
      eff = balanced_link_efficiency(ell, total_loss_db, fidelity, eta_r, eta_d, rule);
    } catch (const std::domain_error&) {
      continue;  // fidelity unreachable at this segmentation
    }
    if (eff > best.eta_tilde_ab) {
      best.ell = ell;
      best.eta_tilde_ab = eff;
    }
  }
  if (best.eta_tilde_ab < 0.0) throw std::domain_error("target fidelity unreachable at any ell");
  return best;
}

/// Exact (enumerated) fidelity of the balanced chain, any length.
inline double exact_balanced_fidelity(const BalancedChainSpec& c, bool exact_stats = true) {
  return bell_fidelity_fast(build_balanced_chain(c, exact_stats));
}

/// Inverts the exact fidelity by bisection on p.  The exact fidelity is
/// decreasing in p over the physical range.
inline double exact_allowed_emission(double fidelity, int ell, double eta, double eta_r,
                                     SigmaRule rule, bool exact_stats = true) {
  if (!(fidelity > 0.25 && fidelity < 1.0))
    throw std::invalid_argument("target fidelity must lie in (1/4, 1)");
  BalancedChainSpec c{ell, eta, eta_r, kMaxPairProbability, rule};
  if (exact_balanced_fidelity(c, exact_stats) > fidelity)
    throw std::domain_error("target fidelity reached even at maximum emission");
  double lo = 0.0, hi = kMaxPairProbability;
  for (int i = 0; i < 100; ++i) {
    c.p = 0.5 * (lo + hi);
    (exact_balanced_fidelity(c, exact_stats) > fidelity ? lo : hi) = c.p;
  }
  return 0.5 * (lo + hi);
}

inline double exact_elementary_gain(double fidelity, int ell, double eta, double eta_r,
                                    bool exact_stats = true) {
  const double p_absm =
      exact_allowed_emission(fidelity, ell, eta, eta_r, SigmaRule::absm(), exact_stats);
  const double p_std =
      exact_allowed_emission(fidelity, ell, eta, eta_r, SigmaRule::standard(), exact_stats);
  return (p_absm / p_std) * (p_absm / p_std);
}

}  // namespace swapcalc

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "swapcalc/chain.hpp"
#include "swapcalc/repeater.hpp"

namespace swapcalc {

/// Double-pair to single-pair ratio used throughout the double-swap
/// analytics: p2 = gamma * p1^2.
inline constexpr double kGamma = 0.75;

/// Multiplexed heralded source bank replacing each outer source: M pairs of
/// sources behind an internal BSM with channel efficiency eta_r.
struct CascadedConfig {
  double multiplexing = 1.0;  // M
  double eta_r = 0.9;
};

/// Double entanglement swap: channels eta2..eta5 between the three sources
/// and the two BSMs, receiver-side PNR identification fraction alpha, and
/// an optional cascaded-source stage.
struct Type2Spec {
  double eta2 = 1.0;
  double eta3 = 1.0;
  double eta4 = 1.0;
  double eta5 = 1.0;
  SigmaRule rule;
  double alpha_receiver = 0.0;
  std::optional<CascadedConfig> cascaded;

  void validate() const {
    for (double e : {eta2, eta3, eta4, eta5})
      if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("channel efficiency outside [0,1]");
    if (!(alpha_receiver >= 0.0 && alpha_receiver < 1.0))
      throw std::invalid_argument("receiver PNR fraction must lie in [0,1)");
    if (cascaded) {
      if (cascaded->multiplexing < 1.0) throw std::invalid_argument("multiplexing must be >= 1");
      if (!(cascaded->eta_r > 0.0 && cascaded->eta_r < 1.0))
        throw std::invalid_argument("cascaded internal efficiency must lie in (0,1)");
    }
  }
};

/// Leading-order success coefficients of the double swap.  Receiver PNR
/// discards identified double emissions from the outer sources, scaling the
/// one-sided coefficients by (1-alpha) and the two-sided one by (1-alpha)^2.
struct Type2Betas {
  double beta111 = 0.0;
  double beta121_hat = 0.0;
  double beta121 = 0.0;
  double beta211 = 0.0;
  double beta112 = 0.0;
  double beta202 = 0.0;
};

inline Type2Betas type2_betas(const Type2Spec& s) {
  s.validate();
  const double e2 = s.eta2, e3 = s.eta3, e4 = s.eta4, e5 = s.eta5;
  const double t2 = 1.0 - e2, t3 = 1.0 - e3, t4 = 1.0 - e4, t5 = 1.0 - e5;
  const double sig = s.rule.sigma();
  Type2Betas b;
  b.beta111 = 0.25 * e2 * e3 * e4 * e5;
  b.beta121_hat = e2 * e3 * e4 * e5 * t3 * t4;
  b.beta121 = b.beta121_hat + sig / 3.0 * e3 * e3 * e4 * e4 * t2 * t5 +
              e2 * e3 * e4 * e4 * t3 * t5 / 3.0 + e3 * e3 * e4 * e5 * t2 * t4 / 3.0;
  b.beta211 = 0.5 * e2 * e3 * e4 * e5 * t2 + e2 * e2 * e4 * e5 * t3 / 6.0;
  b.beta112 = 0.5 * e2 * e3 * e4 * e5 * t5 + e2 * e3 * e5 * e5 * t4 / 6.0;
  b.beta202 = e2 * e2 * e5 * e5 / 9.0;
  const double keep = 1.0 - s.alpha_receiver;
  b.beta211 *= keep;
  b.beta112 *= keep;
  b.beta202 *= keep * keep;
  return b;
}

/// The three-source chain realizing the double swap, for cross-checks
/// against the generic coefficient machinery.
inline ChainSpec type2_chain(const Type2Spec& s, double p12, double p34, double p56,
                             bool exact_stats = false) {
  auto stats = [&](double p) {
    return exact_stats ? SourceStats::exact(p) : SourceStats::quadratic(p);
  };
  return ChainSpec({stats(p12), stats(p34), stats(p56)},
                   {1.0, s.eta2, s.eta3, s.eta4, s.eta5, 1.0}, s.rule);
}

inline double weight_w(double b) { return 2.0 / (1.0 + std::sqrt(1.0 + 8.0 * kGamma * b)); }

/// Channel imbalance of one BSM, outer channel over inner.  Returns
/// +infinity when the outer channel is lossless.
inline double lambda_imbalance(double eta_outer, double eta_inner) {
  if (eta_outer >= 1.0) return std::numeric_limits<double>::infinity();
  return eta_outer * (1.0 - eta_inner) / (eta_inner * (1.0 - eta_outer));
}

/// Balance parameter expressed through the two imbalance coordinates,
/// taking limits at infinite lambda.
inline double b_from_lambdas(SigmaRule rule, double l23, double l54) {
  const double sig = rule.sigma();
  const bool i23 = std::isinf(l23), i54 = std::isinf(l54);
  if (i23 && i54) return 1.0;
  if (i23) return (1.0 + l54) / (3.0 + l54);
  if (i54) return (1.0 + l23) / (3.0 + l23);
  return (sig + l23 + l54 + l23 * l54) / (9.0 + 3.0 * l23 + 3.0 * l54 + l23 * l54);
}

/// Source probabilities maximizing the link efficiency at fixed infidelity.
struct OperatingPoint {
  double p12 = 0.0;
  double p34 = 0.0;
  double p56 = 0.0;
  double p = 0.0;  // common scale p = p12 b12 = p34 b34 w = p56 b56
  double b = 0.0;
  double w = 0.0;
  double lambda23 = 0.0;
  double lambda54 = 0.0;
  bool clamped = false;
};

inline OperatingPoint lagrange_operating_point(const Type2Spec& s, double delta_f) {
  s.validate();
  if (!(delta_f > 0.0 && delta_f < 0.75))
    throw std::invalid_argument("infidelity must lie in (0, 3/4)");
  const Type2Betas bb = type2_betas(s);
  const double b12 = bb.beta211;
  const double b56 = bb.beta112;
  const double b34 = 0.75 * bb.beta121 - 0.5 * bb.beta121_hat;
  if (b12 <= 0.0 || b34 <= 0.0 || b56 <= 0.0)
    throw std::domain_error("a Lagrange weight vanishes (perfect channel edge case)");
  OperatingPoint op;
  op.b = b34 * bb.beta202 / (b12 * b56);
  op.w = weight_w(op.b);
  op.p = 16.0 * bb.beta111 * delta_f / (36.0 + 27.0 * op.b * op.w);
  op.p12 = op.p / b12;
  op.p34 = op.p / (b34 * op.w);
  op.p56 = op.p / b56;
  op.lambda23 = lambda_imbalance(s.eta2, s.eta3);
  op.lambda54 = lambda_imbalance(s.eta5, s.eta4);
  for (double* pp : {&op.p12, &op.p34, &op.p56}) {
    if (*pp > kMaxPairProbability) {
      *pp = kMaxPairProbability;
      op.clamped = true;
    }
  }
  return op;
}

/// Maximum efficiency factored into the balanced-lossy source efficiency
/// pi0, the deterministic-source link efficiency, and the balancing factor
/// pi_hat capturing imbalance penalty and PNR gain.
struct EfficiencyBreakdown {
  double pi0 = 0.0;
  double beta111 = 0.0;
  double pi_hat = 0.0;
  double eta_hat_ab = 0.0;
  double delta_f = 0.0;
};

/// Balanced lossy-limit source-efficiency coefficient: pi0 = coeff * df^3.
inline double type2_pi0_coefficient(SigmaRule rule) {
  const double sig = rule.sigma();
  const double b = (3.0 + sig) / 16.0;
  const double w = weight_w(b);
  const double c = 36.0 + 27.0 * b * w;
  return 576.0 / ((3.0 + sig) * w * c * c * c);
}

/// Single-swap reference in the same limit: pi0 = df^2 / 16.
inline double type1_pi0_coefficient() { return 1.0 / 16.0; }

inline EfficiencyBreakdown max_efficiency(const Type2Spec& s, double delta_f) {
  const Type2Betas bb = type2_betas(s);
  const OperatingPoint op = lagrange_operating_point(s, delta_f);
  const double b12 = bb.beta211;
  const double b56 = bb.beta112;
  const double b34 = 0.75 * bb.beta121 - 0.5 * bb.beta121_hat;
  const double c = 36.0 + 27.0 * op.b * op.w;
  EfficiencyBreakdown out;
  out.delta_f = delta_f;
  out.beta111 = bb.beta111;
  out.eta_hat_ab = 4096.0 * bb.beta111 * bb.beta111 * bb.beta111 * bb.beta111 * delta_f *
                   delta_f * delta_f / (b12 * b34 * b56 * op.w * c * c * c);
  out.pi0 = type2_pi0_coefficient(s.rule) * delta_f * delta_f * delta_f;
  out.pi_hat = out.eta_hat_ab / (out.pi0 * out.beta111);
  return out;
}

/// Efficiency gain of the alternating protocol at fixed infidelity,
/// expressed through the imbalance coordinates only.
inline double absm_gain(double eta2, double eta3, double eta4, double eta5) {
  const double l23 = lambda_imbalance(eta2, eta3);
  const double l54 = lambda_imbalance(eta5, eta4);
  const double b1 = b_from_lambdas(SigmaRule::standard(), l23, l54);
  const double b0 = b_from_lambdas(SigmaRule::absm(), l23, l54);
  if (b0 == 0.0) return std::numeric_limits<double>::infinity();
  const double w1 = weight_w(b1), w0 = weight_w(b0);
  const double c1 = 36.0 + 27.0 * b1 * w1;
  const double c0 = 36.0 + 27.0 * b0 * w0;
  const double r = c1 / c0;
  return (b1 / b0) * (w1 / w0) * r * r * r;
}

/// Leading-order Bell-state fidelity of the double swap at the given
/// source probabilities (gamma-quadratic double-pair statistics).
inline double type2_fidelity(const Type2Spec& s, double p12, double p34, double p56) {
  const Type2Betas b = type2_betas(s);
  const double q1 = kGamma * p12 * p12;
  const double q2 = kGamma * p34 * p34;
  const double q3 = kGamma * p56 * p56;
  const double eta_bar = p12 * p34 * p56 * b.beta111 + q1 * p34 * p56 * b.beta211 +
                         p12 * q2 * p56 * b.beta121 + p12 * p34 * q3 * b.beta112 +
                         q1 * q3 * b.beta202;
  if (eta_bar <= 0.0) throw UndefinedFidelityError("double swap never connects; fidelity undefined");
  const double eta = p12 * p56 *
                     (p34 * b.beta111 + q2 * (0.25 * b.beta121 + 0.5 * b.beta121_hat));
  return eta / eta_bar;
}

/// Coefficient set of the five-source chain modeling the cascaded link.
struct CascadedBetas {
  double b11111 = 0.0;
  double b21111 = 0.0;
  double b12111 = 0.0, b12111_hat = 0.0;
  double b11211 = 0.0, b11211_hat = 0.0;
  double b11121 = 0.0, b11121_hat = 0.0;
  double b11112 = 0.0;
  double b20211 = 0.0;
  double b11202 = 0.0;
  double b20202 = 0.0;
  double b12021 = 0.0;
};

/// Five-source chain of the cascaded link: internal bank BSMs at the ends
/// (channels eta_r), downlink BSMs inside (channels eta2..eta5).
inline ChainSpec cascaded_chain(const Type2Spec& s, double p_bank_a, double p_central,
                                double p_bank_b) {
  if (!s.cascaded) throw std::invalid_argument("cascaded configuration missing");
  const double er = s.cascaded->eta_r;
  auto q = [](double p) { return SourceStats::quadratic(p); };
  return ChainSpec({q(p_bank_a), q(p_bank_a), q(p_central), q(p_bank_b), q(p_bank_b)},
                   {1.0, er, er, s.eta2, s.eta3, s.eta4, s.eta5, er, er, 1.0}, s.rule);
}

inline CascadedBetas cascaded_betas(const Type2Spec& s) {
  const ChainSpec chain = cascaded_chain(s, 0.01, 0.01, 0.01);  // stats unused by the coefficients
  CascadedBetas cb;
  cb.b11111 = beta_sequence(chain, {1, 1, 1, 1, 1});
  cb.b21111 = beta_sequence(chain, {2, 1, 1, 1, 1});
  cb.b12111 = beta_sequence(chain, {1, 2, 1, 1, 1});
  cb.b12111_hat = beta_hat_sequence(chain, {1, 2, 1, 1, 1});
  cb.b11211 = beta_sequence(chain, {1, 1, 2, 1, 1});
  cb.b11211_hat = beta_hat_sequence(chain, {1, 1, 2, 1, 1});
  cb.b11121 = beta_sequence(chain, {1, 1, 1, 2, 1});
  cb.b11121_hat = beta_hat_sequence(chain, {1, 1, 1, 2, 1});
  cb.b11112 = beta_sequence(chain, {1, 1, 1, 1, 2});
  cb.b20211 = beta_sequence(chain, {2, 0, 2, 1, 1});
  cb.b11202 = beta_sequence(chain, {1, 1, 2, 0, 2});
  cb.b20202 = beta_sequence(chain, {2, 0, 2, 0, 2});
  cb.b12021 = beta_sequence(chain, {1, 2, 0, 2, 1});
  return cb;
}

struct CascadedResult {
  OperatingPoint point;  // p12/p56: bank probabilities, p34: central source
  EfficiencyBreakdown breakdown;
};

/// Lossy-limit coefficient of the cascaded source efficiency:
/// pi0 = coeff * M^2 eta_r^4 / (1-eta_r)^4 * df^5.
inline double cascaded_pi0_coefficient(SigmaRule rule) {
  const double sig = rule.sigma();
  const double k12 = (17.0 + 3.0 * sig) / 96.0;
  const double k34 = (13.0 + 8.0 * sig) / 48.0;
  const double kswap = (1.0 + sig) * (1.0 + sig) / 9.0;
  const double b = (9.0 / 16.0) * k34 * kswap / (k12 * k12);
  const double w = weight_w(b);
  const double c = 30.0 + 15.0 * b * w;
  const double p1 = 48.0 / (c * (17.0 + 3.0 * sig));
  const double p2 = 24.0 / (c * (13.0 + 8.0 * sig) * w);
  return p1 * p1 * p1 * p1 * p2 / 16.0;
}

inline CascadedResult cascaded_operating_point(const Type2Spec& s, double delta_f) {
  s.validate();
  if (!s.cascaded) throw std::invalid_argument("cascaded configuration missing");
  if (!(delta_f > 0.0 && delta_f < 0.75))
    throw std::invalid_argument("infidelity must lie in (0, 3/4)");
  const double m = s.cascaded->multiplexing;
  const double er = s.cascaded->eta_r;
  if (m >= 32.0 / (er * delta_f * er * delta_f))
    throw std::domain_error("multiplexing too large for the perturbative bank model");

  const CascadedBetas cb = cascaded_betas(s);
  const double b12 = 0.5 * (cb.b21111 + 0.75 * cb.b12111 - 0.5 * cb.b12111_hat);
  const double b56 = 0.5 * (cb.b11112 + 0.75 * cb.b11121 - 0.5 * cb.b11121_hat);
  const double b34 = 0.75 * (cb.b11211 - 2.0 / 3.0 * cb.b11211_hat + cb.b20211 + cb.b11202 +
                             0.75 * cb.b20202);
  if (b12 <= 0.0 || b34 <= 0.0 || b56 <= 0.0)
    throw std::domain_error("a Lagrange weight vanishes (perfect channel edge case)");

  CascadedResult out;
  OperatingPoint& op = out.point;
  op.b = (9.0 / 16.0) * b34 * cb.b12021 / (b12 * b56);
  op.w = weight_w(op.b);
  op.p = 8.0 * cb.b11111 * delta_f / (30.0 + 15.0 * op.b * op.w);
  op.p12 = op.p / b12;
  op.p34 = op.p / (b34 * op.w);
  op.p56 = op.p / b56;
  op.lambda23 = lambda_imbalance(s.eta2, s.eta3);
  op.lambda54 = lambda_imbalance(s.eta5, s.eta4);
  for (double* pp : {&op.p12, &op.p34, &op.p56}) {
    if (*pp > kMaxPairProbability) {
      *pp = kMaxPairProbability;
      op.clamped = true;
    }
  }

  EfficiencyBreakdown& eb = out.breakdown;
  eb.delta_f = delta_f;
  eb.beta111 = 0.25 * s.eta2 * s.eta3 * s.eta4 * s.eta5;
  const double p_tilde = op.p12 * op.p12 * op.p34 * op.p56 * op.p56;
  eb.eta_hat_ab = m * m * p_tilde * cb.b11111 / 4.0;
  const double om = 1.0 - er;
  eb.pi0 = cascaded_pi0_coefficient(s.rule) * m * m * er * er * er * er /
           (om * om * om * om) * std::pow(delta_f, 5);
  eb.pi_hat = eb.eta_hat_ab / (eb.pi0 * eb.beta111);
  return out;
}

/// Efficiency penalties of the fully imbalanced double swap (BSMs at the
/// outer nodes, all loss on the central channels) relative to a balanced
/// single-swap link with the same combined loss, in dB.
struct ImbalancedPenaltyReport {
  double plain_db = 0.0;              // passive double swap, either protocol
  double cascaded_standard_db = 0.0;  // cascaded sources, standard BSMs
  double cascaded_absm_db = 0.0;      // cascaded sources, alternating BSMs
};

inline ImbalancedPenaltyReport fully_imbalanced_penalty(double total_loss_db, double fidelity,
                                                        double multiplexing, double eta_r) {
  const double delta_f = 1.0 - fidelity;
  const double eta_c = db_to_efficiency(total_loss_db);
  const double eta_half = std::sqrt(eta_c);  // per-arm transmission

  // Balanced single-swap reference with the same combined loss.
  const double p_ref =
      allowed_emission_probability(fidelity, 1, eta_half, 1.0, SigmaRule::standard()).p;
  const double eta_ref = p_ref * p_ref * 0.5 * eta_c;

  auto spec = [&](SigmaRule rule, bool cascaded) {
    Type2Spec s;
    s.eta2 = 1.0;
    s.eta3 = eta_half;
    s.eta4 = eta_half;
    s.eta5 = 1.0;
    s.rule = rule;
    if (cascaded) s.cascaded = CascadedConfig{multiplexing, eta_r};
    return s;
  };
  ImbalancedPenaltyReport r;
  r.plain_db = 10.0 * std::log10(eta_ref / max_efficiency(spec(SigmaRule::standard(), false),
                                                          delta_f).eta_hat_ab);
  r.cascaded_standard_db =
      10.0 * std::log10(eta_ref / cascaded_operating_point(spec(SigmaRule::standard(), true),
                                                           delta_f).breakdown.eta_hat_ab);
  r.cascaded_absm_db =
      10.0 * std::log10(eta_ref / cascaded_operating_point(spec(SigmaRule::absm(), true),
                                                           delta_f).breakdown.eta_hat_ab);
  return r;
}

}  // namespace swapcalc

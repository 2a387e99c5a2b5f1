#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "swapcalc/chain.hpp"

namespace swapcalc::fock {

using Complex = std::complex<double>;

/// Occupation numbers packed 4 bits per mode, up to 32 labeled modes.
struct Key {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  int get(int mode) const {
    const std::uint64_t w = mode < 16 ? lo : hi;
    return static_cast<int>((w >> (4 * (mode & 15))) & 0xF);
  }
  void set(int mode, int value) {
    std::uint64_t& w = mode < 16 ? lo : hi;
    const int shift = 4 * (mode & 15);
    w = (w & ~(std::uint64_t{0xF} << shift)) |
        (static_cast<std::uint64_t>(value & 0xF) << shift);
  }
  bool operator==(const Key&) const = default;
};

struct KeyHash {
  std::size_t operator()(const Key& k) const {
    std::uint64_t x = k.lo * 0x9E3779B97F4A7C15ull;
    x ^= (k.hi + 0xBF58476D1CE4E5B9ull) + (x << 6) + (x >> 2);
    return static_cast<std::size_t>(x);
  }
};

inline constexpr double kAmplitudePruneThreshold = 1e-15;
inline constexpr int kMaxModes = 32;

/// Sparse bosonic state: occupation vector -> complex amplitude.
class SparseKet {
 public:
  explicit SparseKet(int mode_count) : mode_count_(mode_count) {
    if (mode_count < 1 || mode_count > kMaxModes)
      throw std::invalid_argument("mode count out of range");
  }

  int mode_count() const { return mode_count_; }
  const std::unordered_map<Key, Complex, KeyHash>& amplitudes() const { return amps_; }
  bool empty() const { return amps_.empty(); }

  void add(const Key& k, Complex a) {
    auto [it, inserted] = amps_.try_emplace(k, a);
    if (!inserted) it->second += a;
  }

  double norm_squared() const {
    double s = 0.0;
    for (const auto& [k, a] : amps_) s += std::norm(a);
    return s;
  }

  void prune(double threshold = kAmplitudePruneThreshold) {
    for (auto it = amps_.begin(); it != amps_.end();) {
      it = std::abs(it->second) < threshold ? amps_.erase(it) : std::next(it);
    }
  }

  /// Rewrites the pair (m1, m2) by the mode-operator substitution
  ///   m1+ -> a11 m1+ + a21 m2+,   m2+ -> a12 m1+ + a22 m2+.
  /// Bosonic normalization is handled through the sqrt(n!) factors.
  void apply_two_mode_unitary(int m1, int m2, double a11, double a21, double a12, double a22) {
    std::unordered_map<Key, Complex, KeyHash> out;
    out.reserve(amps_.size() * 2);
    for (const auto& [key, amp] : amps_) {
      const int n1 = key.get(m1);
      const int n2 = key.get(m2);
      if (n1 == 0 && n2 == 0) {
        auto [it, inserted] = out.try_emplace(key, amp);
        if (!inserted) it->second += amp;
        continue;
      }
      const Complex base = amp / std::sqrt(factorial(n1) * factorial(n2));
      for (int i = 0; i <= n1; ++i) {
        for (int j = 0; j <= n2; ++j) {
          const double coeff = binomial(n1, i) * binomial(n2, j) * ipow(a11, i) *
                               ipow(a21, n1 - i) * ipow(a12, j) * ipow(a22, n2 - j);
          if (coeff == 0.0) continue;
          const int k1 = i + j;
          const int k2 = n1 + n2 - i - j;
          if (k1 > 15 || k2 > 15) throw std::overflow_error("occupation exceeds packing width");
          Key nk = key;
          nk.set(m1, k1);
          nk.set(m2, k2);
          const Complex na = base * coeff * std::sqrt(factorial(k1) * factorial(k2));
          auto [it, inserted] = out.try_emplace(nk, na);
          if (!inserted) it->second += na;
        }
      }
    }
    amps_ = std::move(out);
    prune();
  }

  /// Tensor product of states on disjoint mode supports of a shared registry.
  friend SparseKet tensor(const SparseKet& x, const SparseKet& y) {
    SparseKet out(x.mode_count_);
    out.amps_.reserve(x.amps_.size() * y.amps_.size());
    for (const auto& [kx, ax] : x.amps_) {
      for (const auto& [ky, ay] : y.amps_) {
        Key k{kx.lo + ky.lo, kx.hi + ky.hi};  // disjoint supports: fields add
        out.add(k, ax * ay);
      }
    }
    return out;
  }

 private:
  static double factorial(int n) {
    static const std::array<double, 16> table = {1, 1, 2, 6, 24, 120, 720, 5040, 40320,
                                                 362880, 3628800, 39916800, 479001600,
                                                 6227020800.0, 87178291200.0, 1307674368000.0};
    return table[static_cast<std::size_t>(n)];
  }
  static double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }
  static double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
  }

  int mode_count_;
  std::unordered_map<Key, Complex, KeyHash> amps_;
};

/// Mode bookkeeping for a chain: channel c owns signal polarization modes
/// (a, b) and matching loss modes (a'', b'').
struct ModeRegistry {
  int channels = 0;

  explicit ModeRegistry(int channel_count) : channels(channel_count) {
    if (4 * channel_count > kMaxModes)
      throw std::invalid_argument("too many channels for the packed key (max 8)");
  }
  int signal_a(int c) const { return 4 * c; }
  int signal_b(int c) const { return 4 * c + 1; }
  int loss_a(int c) const { return 4 * c + 2; }
  int loss_b(int c) const { return 4 * c + 3; }
  int total_modes() const { return 4 * channels; }
};

/// Detector response P(m|n): probability of registering m photons given an
/// n-photon Fock state at the detection mode.  alpha = 1 is number
/// resolving, alpha = 0 is a threshold detector.
struct DetectorModel {
  double eta_d = 1.0;
  double alpha = 1.0;

  double p_detect(int m, int n) const {
    if (n < 0 || m < 0) throw std::invalid_argument("negative photon count");
    if (m == 0) return std::pow(1.0 - eta_d, n);
    if (m == 1) {
      double s = 0.0;
      for (int k = 0; k <= n - 1; ++k)
        s += eta_d * std::pow(1.0 - eta_d, k) * std::pow(1.0 - alpha * eta_d, n - 1 - k);
      return s;
    }
    throw std::invalid_argument("model covers detection of 0 or 1 photons only");
  }
};

/// The nu-pair component of the truncated source state on channels
/// (ch_i, ch_j), carrying its sqrt(p) weight so the squared norm equals the
/// emission probability.
inline SparseKet source_component(const SourceStats& stats, int nu, const ModeRegistry& reg,
                                  int ch_i, int ch_j) {
  SparseKet ket(reg.total_modes());
  const int ai = reg.signal_a(ch_i), bi = reg.signal_b(ch_i);
  const int aj = reg.signal_a(ch_j), bj = reg.signal_b(ch_j);
  if (stats.pn(nu) == 0.0) return ket;
  Key k{};
  switch (nu) {
    case 0:
      ket.add(k, std::sqrt(stats.p0));
      break;
    case 1: {
      const double amp = std::sqrt(stats.p1 / 2.0);
      k = Key{};
      k.set(ai, 1);
      k.set(bj, 1);
      ket.add(k, amp);
      k = Key{};
      k.set(bi, 1);
      k.set(aj, 1);
      ket.add(k, -amp);
      break;
    }
    case 2: {
      // (ai^2 bj^2 + bi^2 aj^2 - 2 ai bi aj bj)+ |0>, creation normalization
      // turning each squared operator into a factor sqrt(2).
      const double amp = std::sqrt(stats.p2 / 12.0);
      k = Key{};
      k.set(ai, 2);
      k.set(bj, 2);
      ket.add(k, 2.0 * amp);
      k = Key{};
      k.set(bi, 2);
      k.set(aj, 2);
      ket.add(k, 2.0 * amp);
      k = Key{};
      k.set(ai, 1);
      k.set(bi, 1);
      k.set(aj, 1);
      k.set(bj, 1);
      ket.add(k, -2.0 * amp);
      break;
    }
    default:
      throw std::invalid_argument("pair count must be 0, 1 or 2");
  }
  return ket;
}

/// Full normalized truncated source state on channels (ch_i, ch_j).
inline SparseKet source_state(const SourceStats& stats, const ModeRegistry& reg, int ch_i,
                              int ch_j) {
  SparseKet ket = source_component(stats, 0, reg, ch_i, ch_j);
  for (int nu = 1; nu <= 2; ++nu) {
    const SparseKet part = source_component(stats, nu, reg, ch_i, ch_j);
    for (const auto& [k, a] : part.amplitudes()) ket.add(k, a);
  }
  return ket;
}

/// Pure-loss channel: moves amplitude from the channel's signal modes into
/// its loss modes with transmission eta.
inline void apply_loss(SparseKet& ket, const ModeRegistry& reg, int channel, double eta) {
  const double t = std::sqrt(eta), r = std::sqrt(1.0 - eta);
  ket.apply_two_mode_unitary(reg.signal_a(channel), reg.loss_a(channel), t, r, -r, t);
  ket.apply_two_mode_unitary(reg.signal_b(channel), reg.loss_b(channel), t, r, -r, t);
}

/// Rewrites one channel's signal pair into the diagonal polarization basis
/// c = (a+b)/sqrt2, d = (a-b)/sqrt2; the stored (a, b) slots then hold the
/// (c, d) occupations.
inline void rotate_to_diagonal(SparseKet& ket, const ModeRegistry& reg, int channel) {
  const double s = 1.0 / std::sqrt(2.0);
  ket.apply_two_mode_unitary(reg.signal_a(channel), reg.signal_b(channel), s, s, s, -s);
}

/// Sparse density matrix keyed by (ket, bra) occupation pairs.
class SparseDensityMatrix {
 public:
  struct PairHash {
    std::size_t operator()(const std::pair<Key, Key>& p) const {
      return KeyHash{}(p.first) * 1000003u ^ KeyHash{}(p.second);
    }
  };
  using Map = std::unordered_map<std::pair<Key, Key>, Complex, PairHash>;

  explicit SparseDensityMatrix(int mode_count) : mode_count_(mode_count) {}

  int mode_count() const { return mode_count_; }
  Map& elements() { return elems_; }
  const Map& elements() const { return elems_; }

  void add(const Key& ket, const Key& bra, Complex v) {
    auto [it, inserted] = elems_.try_emplace({ket, bra}, v);
    if (!inserted) it->second += v;
  }

  double trace_real() const {
    double t = 0.0;
    for (const auto& [kb, v] : elems_)
      if (kb.first == kb.second) t += v.real();
    return t;
  }

  Complex element(const Key& ket, const Key& bra) const {
    auto it = elems_.find({ket, bra});
    return it == elems_.end() ? Complex{0.0, 0.0} : it->second;
  }

  double max_hermiticity_violation() const {
    double worst = 0.0;
    for (const auto& [kb, v] : elems_)
      worst = std::max(worst, std::abs(v - std::conj(element(kb.second, kb.first))));
    return worst;
  }

  void prune(double threshold = kAmplitudePruneThreshold) {
    for (auto it = elems_.begin(); it != elems_.end();) {
      it = std::abs(it->second) < threshold ? elems_.erase(it) : std::next(it);
    }
  }

 private:
  int mode_count_;
  Map elems_;
};

/// Partial trace of |ket><ket| over the listed modes; the kept modes retain
/// their positions (traced slots are zeroed in the surviving keys).
inline SparseDensityMatrix reduce_over(const SparseKet& ket, const std::vector<int>& traced) {
  auto split = [&](const Key& k) {
    Key env{}, sys = k;
    for (int m : traced) {
      env.set(m, k.get(m));
      sys.set(m, 0);
    }
    return std::pair<Key, Key>{env, sys};
  };
  std::unordered_map<Key, std::vector<std::pair<Key, Complex>>, KeyHash> groups;
  for (const auto& [k, a] : ket.amplitudes()) {
    auto [env, sys] = split(k);
    groups[env].push_back({sys, a});
  }
  SparseDensityMatrix rho(ket.mode_count());
  for (const auto& [env, terms] : groups) {
    for (const auto& [k1, a1] : terms)
      for (const auto& [k2, a2] : terms) rho.add(k1, k2, a1 * std::conj(a2));
  }
  rho.prune();
  return rho;
}

/// Removes coherences between ket/bra components whose total photon number
/// in the channel's signal pair differs (random channel phase, averaged).
inline void apply_dephasing(SparseDensityMatrix& rho, const ModeRegistry& reg, int channel) {
  const int a = reg.signal_a(channel), b = reg.signal_b(channel);
  auto& m = rho.elements();
  for (auto it = m.begin(); it != m.end();) {
    const auto& [ket, bra] = it->first;
    const int nk = ket.get(a) + ket.get(b);
    const int nb = bra.get(a) + bra.get(b);
    it = (nk != nb) ? m.erase(it) : std::next(it);
  }
}

/// Reduced state of a single source after loss and dephasing on both of its
/// channels, traced over the loss modes.
inline SparseDensityMatrix reduced_source_state(const SourceStats& stats, double eta_i,
                                                double eta_j) {
  ModeRegistry reg(2);
  SparseKet ket = source_state(stats, reg, 0, 1);
  apply_loss(ket, reg, 0, eta_i);
  apply_loss(ket, reg, 1, eta_j);
  SparseDensityMatrix rho =
      reduce_over(ket, {reg.loss_a(0), reg.loss_b(0), reg.loss_a(1), reg.loss_b(1)});
  apply_dephasing(rho, reg, 0);
  apply_dephasing(rho, reg, 1);
  return rho;
}

/// As reduced_source_state restricted to one emission sector.
inline SparseDensityMatrix reduced_source_component(const SourceStats& stats, int nu,
                                                    double eta_i, double eta_j) {
  ModeRegistry reg(2);
  SparseKet ket = source_component(stats, nu, reg, 0, 1);
  apply_loss(ket, reg, 0, eta_i);
  apply_loss(ket, reg, 1, eta_j);
  SparseDensityMatrix rho =
      reduce_over(ket, {reg.loss_a(0), reg.loss_b(0), reg.loss_a(1), reg.loss_b(1)});
  apply_dephasing(rho, reg, 0);
  apply_dephasing(rho, reg, 1);
  return rho;
}

enum class BsmBasis { standard, diagonal };
enum class BsmOutcome { none, plus, minus };

/// Classifies the signal pattern of a BSM's channel pair.  Success needs
/// exactly two photons of opposite polarization; "plus" means both came
/// from the same channel, "minus" one from each.
inline BsmOutcome classify_bsm(int na_i, int nb_i, int na_j, int nb_j) {
  if (na_i + nb_i + na_j + nb_j != 2) return BsmOutcome::none;
  if (na_i + na_j != 1 || nb_i + nb_j != 1) return BsmOutcome::none;
  if ((na_i == 1 && nb_i == 1) || (na_j == 1 && nb_j == 1)) return BsmOutcome::plus;
  return BsmOutcome::minus;
}

/// Projects a state onto the requested BSM outcome across channels
/// (ch_i, ch_j), measured in the given polarization basis.
inline SparseKet apply_bsm_projector(const SparseKet& input, const ModeRegistry& reg, int ch_i,
                                     int ch_j, BsmBasis basis, BsmOutcome which) {
  SparseKet ket = input;
  if (basis == BsmBasis::diagonal) {
    rotate_to_diagonal(ket, reg, ch_i);
    rotate_to_diagonal(ket, reg, ch_j);
  }
  SparseKet out(ket.mode_count());
  for (const auto& [k, a] : ket.amplitudes()) {
    const BsmOutcome o = classify_bsm(k.get(reg.signal_a(ch_i)), k.get(reg.signal_b(ch_i)),
                                      k.get(reg.signal_a(ch_j)), k.get(reg.signal_b(ch_j)));
    const bool keep = which == BsmOutcome::none ? o != BsmOutcome::none : o == which;
    if (keep) out.add(k, a);
  }
  if (basis == BsmBasis::diagonal) {
    rotate_to_diagonal(out, reg, ch_i);
    rotate_to_diagonal(out, reg, ch_j);
  }
  return out;
}

/// Dual-rail Bell states across two channels, for identity checks.
inline SparseKet bell_state(const ModeRegistry& reg, int ch_i, int ch_j, char kind, int sign,
                            BsmBasis basis = BsmBasis::standard) {
  SparseKet ket(reg.total_modes());
  const double amp = std::sqrt(0.5);
  Key k{};
  if (kind == 'p') {  // psi: opposite polarizations
    k.set(reg.signal_a(ch_i), 1);
    k.set(reg.signal_b(ch_j), 1);
    ket.add(k, amp);
    k = Key{};
    k.set(reg.signal_b(ch_i), 1);
    k.set(reg.signal_a(ch_j), 1);
    ket.add(k, sign * amp);
  } else {  // phi: matching polarizations
    k.set(reg.signal_a(ch_i), 1);
    k.set(reg.signal_a(ch_j), 1);
    ket.add(k, amp);
    k = Key{};
    k.set(reg.signal_b(ch_i), 1);
    k.set(reg.signal_b(ch_j), 1);
    ket.add(k, sign * amp);
  }
  if (basis == BsmBasis::diagonal) {
    // Interpret the state as written in the diagonal basis: rotate back to
    // the storage (a, b) basis.  The rotation is its own inverse.
    rotate_to_diagonal(ket, reg, ch_i);
    rotate_to_diagonal(ket, reg, ch_j);
  }
  return ket;
}

/// Under the alternating protocol every second analyzer measures in the
/// diagonal polarization basis.
inline bool is_absm_diagonal_bsm(std::size_t bsm, SigmaRule rule) {
  return rule.sigma_squared == 0.0 && bsm % 2 == 1;
}

/// Exact traces for one emission sector of a chain of up to 3 sources:
/// the full-coincidence probability tr(E rho), the terminated variant, and
/// the Bell-projected numerator 2^(N-1) tr(E- rho P_psi-).
struct SectorTrace {
  double coincidence = 0.0;
  double terminated = 0.0;
  double bell_numerator = 0.0;
};

inline SectorTrace sector_trace(const ChainSpec& spec, const EmissionSequence& nu) {
  detail::check_sequence(spec, nu);
  const int n = static_cast<int>(spec.source_count());
  if (n > 3) throw std::invalid_argument("exact traces are limited to 3 sources");
  ModeRegistry reg(2 * n);

  SparseKet ket = source_component(spec.sources[0], nu[0], reg, 0, 1);
  for (int s = 1; s < n; ++s)
    ket = tensor(ket, source_component(spec.sources[s], nu[s], reg, 2 * s, 2 * s + 1));

  for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
    if (is_absm_diagonal_bsm(j, spec.rule)) {
      rotate_to_diagonal(ket, reg, 2 * static_cast<int>(j) + 1);
      rotate_to_diagonal(ket, reg, 2 * static_cast<int>(j) + 2);
    }
  }
  for (int c = 0; c < 2 * n; ++c) {
    if (spec.channel_eta[c] < 1.0) apply_loss(ket, reg, c, spec.channel_eta[c]);
  }

  SectorTrace result;
  const int last = 2 * n - 1;

  // Coincidences are blind to which Bell state fired, so the measurement
  // splitters drop out and a source-mode pattern filter suffices.
  for (const auto& [k, a] : ket.amplitudes()) {
    bool all_fire = true;
    for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
      const int ci = 2 * static_cast<int>(j) + 1, cj = ci + 1;
      if (classify_bsm(k.get(reg.signal_a(ci)), k.get(reg.signal_b(ci)),
                       k.get(reg.signal_a(cj)), k.get(reg.signal_b(cj))) ==
          BsmOutcome::none) {
        all_fire = false;
        break;
      }
    }
    if (!all_fire) continue;
    const double w = std::norm(a);
    result.coincidence += w;
    if (k.get(reg.signal_a(0)) + k.get(reg.signal_b(0)) >= 1 &&
        k.get(reg.signal_a(last)) + k.get(reg.signal_b(last)) >= 1)
      result.terminated += w;
  }

  // The Bell-resolved outcome does distinguish the click pattern, so mix
  // each analyzer's channel pair through its 50:50 splitter; the stored
  // channel slots then hold the detection-port occupations.  A lone
  // same-channel photon pair also produces cross-port clicks here, which is
  // exactly the double-emission false herald.
  SparseKet det = ket;
  const double s = std::sqrt(0.5);
  for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
    const int ci = 2 * static_cast<int>(j) + 1, cj = ci + 1;
    det.apply_two_mode_unitary(reg.signal_a(ci), reg.signal_a(cj), s, s, s, -s);
    det.apply_two_mode_unitary(reg.signal_b(ci), reg.signal_b(cj), s, s, s, -s);
  }

  // Group key: everything except the end-channel signal modes.  s1/s2
  // collect the two opposite-polarization end patterns entering the
  // projection on the target Bell state.
  std::unordered_map<Key, std::pair<Complex, Complex>, KeyHash> bell_groups;
  for (const auto& [k, a] : det.amplitudes()) {
    bool all_minus = true;
    for (std::size_t j = 0; j < spec.bsm_count(); ++j) {
      const int ci = 2 * static_cast<int>(j) + 1, cj = ci + 1;
      // one a-click and one b-click on opposite output ports
      if (classify_bsm(k.get(reg.signal_a(ci)), k.get(reg.signal_b(ci)),
                       k.get(reg.signal_a(cj)), k.get(reg.signal_b(cj))) !=
          BsmOutcome::minus) {
        all_minus = false;
        break;
      }
    }
    if (!all_minus) continue;
    const int a0 = k.get(reg.signal_a(0)), b0 = k.get(reg.signal_b(0));
    const int aL = k.get(reg.signal_a(last)), bL = k.get(reg.signal_b(last));
    const bool p1 = a0 == 1 && b0 == 0 && aL == 0 && bL == 1;
    const bool p2 = a0 == 0 && b0 == 1 && aL == 1 && bL == 0;
    if (!p1 && !p2) continue;
    Key g = k;
    g.set(reg.signal_a(0), 0);
    g.set(reg.signal_b(0), 0);
    g.set(reg.signal_a(last), 0);
    g.set(reg.signal_b(last), 0);
    auto& [s1, s2] = bell_groups[g];
    (p1 ? s1 : s2) += a;
  }
  double bell = 0.0;
  for (const auto& [g, amps] : bell_groups) bell += 0.5 * std::norm(amps.first - amps.second);
  result.bell_numerator = std::ldexp(bell, n - 1);  // 2^(N-1) equal success chains
  return result;
}

struct ChainTraceResult {
  double eta_bar = 0.0;
  double eta_bar_ab = 0.0;
  double eta_ab = 0.0;
};

/// Exact link quantities by direct trace, summing every emission sector.
inline ChainTraceResult chain_trace(const ChainSpec& spec) {
  const int n = static_cast<int>(spec.source_count());
  if (n > 3) throw std::invalid_argument("exact traces are limited to 3 sources");
  ChainTraceResult out;
  EmissionSequence nu(static_cast<std::size_t>(n), 0);
  while (true) {
    const SectorTrace t = sector_trace(spec, nu);
    out.eta_bar += t.coincidence;
    out.eta_bar_ab += t.terminated;
    out.eta_ab += t.bell_numerator;
    int i = 0;
    while (i < n && ++nu[static_cast<std::size_t>(i)] == 3) nu[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
  }
  return out;
}

/// Verifies that uniform loss commutes with a 50:50 beam splitter: the
/// reduced states of loss-after-splitter and loss-before-splitter agree.
/// Returns the largest elementwise deviation.
inline double loss_equivalence_deviation(const SparseKet& two_mode_state, double eta_d) {
  // Registry reuse: channel 0 holds the mode pair under test, with the
  // channel's loss slots as environment.
  ModeRegistry reg(1);
  const int m0 = reg.signal_a(0), m1 = reg.signal_b(0);
  const int l0 = reg.loss_a(0), l1 = reg.loss_b(0);
  const double s = 1.0 / std::sqrt(2.0);
  const double t = std::sqrt(eta_d), r = std::sqrt(1.0 - eta_d);
  const std::vector<int> env = {l0, l1};

  SparseKet after = two_mode_state;  // splitter first, then loss
  after.apply_two_mode_unitary(m0, m1, s, s, s, -s);
  after.apply_two_mode_unitary(m0, l0, t, r, -r, t);
  after.apply_two_mode_unitary(m1, l1, t, r, -r, t);
  SparseDensityMatrix rho_after = reduce_over(after, env);

  SparseKet before = two_mode_state;  // loss first, then splitter
  before.apply_two_mode_unitary(m0, l0, t, r, -r, t);
  before.apply_two_mode_unitary(m1, l1, t, r, -r, t);
  before.apply_two_mode_unitary(m0, m1, s, s, s, -s);
  SparseDensityMatrix rho_before = reduce_over(before, env);

  double worst = 0.0;
  for (const auto& [kb, v] : rho_after.elements())
    worst = std::max(worst, std::abs(v - rho_before.element(kb.first, kb.second)));
  for (const auto& [kb, v] : rho_before.elements())
    worst = std::max(worst, std::abs(v - rho_after.element(kb.first, kb.second)));
  return worst;
}

inline bool loss_equivalence_check(const SparseKet& two_mode_state, double eta_d,
                                   double tolerance = 1e-12) {
  return loss_equivalence_deviation(two_mode_state, eta_d) <= tolerance;
}

struct MonteCarloEstimate {
  double eta_bar = 0.0;
  double std_error = 0.0;
  std::uint64_t successes = 0;
  std::uint64_t samples = 0;
};

/// Statistical cross-check of the coincidence trace.  Each source's two
/// arms are sampled jointly from its exact post-loss diagonal distribution
/// (in the measurement basis of the adjacent BSMs), then the coincidence
/// logic is applied per draw.
inline MonteCarloEstimate monte_carlo_cross_check(const ChainSpec& spec, std::uint64_t samples,
                                                  std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("sample count must be positive");
  const int n = static_cast<int>(spec.source_count());
  if (n > 3) throw std::invalid_argument("exact sampling is limited to 3 sources");

  // Pattern of one source: detected signal occupations (a, b) per arm.
  struct Outcome {
    std::array<int, 4> counts;
    double probability;
  };
  std::vector<std::vector<Outcome>> outcome_tables;
  for (int s = 0; s < n; ++s) {
    ModeRegistry reg(2);
    SparseKet ket = source_state(spec.sources[static_cast<std::size_t>(s)], reg, 0, 1);
    for (int arm = 0; arm < 2; ++arm) {
      const int channel = 2 * s + arm;
      bool diagonal = false;
      if (channel > 0 && channel < 2 * n - 1) {
        const std::size_t bsm = static_cast<std::size_t>((channel - 1) / 2);
        diagonal = is_absm_diagonal_bsm(bsm, spec.rule);
      }
      if (diagonal) rotate_to_diagonal(ket, reg, arm);
      apply_loss(ket, reg, arm, spec.channel_eta[static_cast<std::size_t>(channel)]);
    }
    std::unordered_map<std::uint32_t, double> dist;
    for (const auto& [k, a] : ket.amplitudes()) {
      const std::uint32_t code = static_cast<std::uint32_t>(
          k.get(reg.signal_a(0)) | k.get(reg.signal_b(0)) << 4 | k.get(reg.signal_a(1)) << 8 |
          k.get(reg.signal_b(1)) << 12);
      dist[code] += std::norm(a);
    }
    std::vector<Outcome> table;
    table.reserve(dist.size());
    for (const auto& [code, p] : dist) {
      table.push_back({{static_cast<int>(code & 0xF), static_cast<int>(code >> 4 & 0xF),
                        static_cast<int>(code >> 8 & 0xF), static_cast<int>(code >> 12 & 0xF)},
                       p});
    }
    std::sort(table.begin(), table.end(),
              [](const Outcome& x, const Outcome& y) { return x.counts < y.counts; });
    outcome_tables.push_back(std::move(table));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](const std::vector<Outcome>& table) -> const Outcome& {
    double u = unif(rng);
    for (const auto& o : table) {
      u -= o.probability;
      if (u <= 0.0) return o;
    }
    return table.back();
  };

  std::uint64_t hits = 0;
  std::vector<const Outcome*> drawn(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < samples; ++i) {
    for (int s = 0; s < n; ++s)
      drawn[static_cast<std::size_t>(s)] = &draw(outcome_tables[static_cast<std::size_t>(s)]);
    bool all_fire = true;
    for (int j = 0; j + 1 < n; ++j) {
      const auto& left = drawn[static_cast<std::size_t>(j)]->counts;    // right arm: counts[2..3]
      const auto& right = drawn[static_cast<std::size_t>(j) + 1]->counts;  // left arm: counts[0..1]
      if (classify_bsm(left[2], left[3], right[0], right[1]) == BsmOutcome::none) {
        all_fire = false;
        break;
      }
    }
    if (all_fire) ++hits;
  }
  MonteCarloEstimate est;
  est.successes = hits;
  est.samples = samples;
  est.eta_bar = static_cast<double>(hits) / static_cast<double>(samples);
  est.std_error =
      std::sqrt(std::max(est.eta_bar * (1.0 - est.eta_bar), 1e-300) / static_cast<double>(samples));
  return est;
}

}  // namespace swapcalc::fock

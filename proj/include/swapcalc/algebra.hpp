#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace swapcalc {

/// Reduction rule for squared source tags.  sigma_squared is 3 for the
/// standard BSM protocol and 0 for the alternating-basis (ABSM) protocol;
/// no other values are meaningful.
struct SigmaRule {
  double sigma_squared = 3.0;

  static constexpr SigmaRule standard() { return SigmaRule{3.0}; }
  static constexpr SigmaRule absm() { return SigmaRule{0.0}; }

  /// Protocol parameter sigma = sigma_squared / 3 (1 standard, 0 ABSM).
  constexpr double sigma() const { return sigma_squared / 3.0; }

  bool operator==(const SigmaRule&) const = default;
};

/// Element of the real commutative algebra generated by one tag per photon
/// source.  Tags commute, and a squared tag reduces to the scalar given by
/// the SigmaRule, so every stored monomial is squarefree.  A monomial is
/// encoded as a bitmask of the source indices present (at most 64 sources);
/// terms are kept sorted by mask with zero coefficients dropped.
class AlgebraElement {
 public:
  using Term = std::pair<std::uint64_t, double>;

  AlgebraElement() = default;

  static AlgebraElement scalar(double c) {
    AlgebraElement e;
    if (c != 0.0) e.terms_.push_back({0u, c});
    return e;
  }

  /// The degree-one generator for source k.
  static AlgebraElement generator(unsigned source_index) {
    if (source_index >= 64) throw std::invalid_argument("source index must be < 64");
    AlgebraElement e;
    e.terms_.push_back({std::uint64_t{1} << source_index, 1.0});
    return e;
  }

  bool is_zero() const { return terms_.empty(); }
  std::size_t term_count() const { return terms_.size(); }
  const std::vector<Term>& terms() const { return terms_; }

  double coefficient(std::uint64_t monomial_mask) const {
    auto it = std::lower_bound(terms_.begin(), terms_.end(), monomial_mask,
                               [](const Term& t, std::uint64_t m) { return t.first < m; });
    return (it != terms_.end() && it->first == monomial_mask) ? it->second : 0.0;
  }

  /// Linear functional taking every tag to 1, i.e. the sum of all
  /// coefficients after reduction.
  double sum_coefficients() const {
    double s = 0.0;
    for (const auto& [m, c] : terms_) s += c;
    return s;
  }

  /// Linear functional taking every tag to 0: the coefficient of the empty
  /// monomial.  Picks out events with no completed double-pair detection.
  double constant_term() const { return coefficient(0u); }

  AlgebraElement& operator+=(const AlgebraElement& rhs) {
    std::vector<Term> merged;
    merged.reserve(terms_.size() + rhs.terms_.size());
    std::size_t i = 0, j = 0;
    while (i < terms_.size() || j < rhs.terms_.size()) {
      if (j == rhs.terms_.size() || (i < terms_.size() && terms_[i].first < rhs.terms_[j].first)) {
        merged.push_back(terms_[i++]);
      } else if (i == terms_.size() || rhs.terms_[j].first < terms_[i].first) {
        merged.push_back(rhs.terms_[j++]);
      } else {
        double c = terms_[i].second + rhs.terms_[j].second;
        if (c != 0.0) merged.push_back({terms_[i].first, c});
        ++i;
        ++j;
      }
    }
    terms_ = std::move(merged);
    return *this;
  }

  friend AlgebraElement operator+(AlgebraElement a, const AlgebraElement& b) {
    a += b;
    return a;
  }

  AlgebraElement& operator*=(double c) {
    if (c == 0.0) {
      terms_.clear();
    } else {
      for (auto& t : terms_) t.second *= c;
    }
    return *this;
  }

  friend AlgebraElement operator*(AlgebraElement a, double c) {
    a *= c;
    return a;
  }
  friend AlgebraElement operator*(double c, AlgebraElement a) {
    a *= c;
    return a;
  }

 private:
  std::vector<Term> terms_;

  friend AlgebraElement mul(const AlgebraElement&, const AlgebraElement&, SigmaRule);
};

/// Product in the algebra.  Distributes over the stored terms; any tag
/// appearing in both monomials squares and reduces to rule.sigma_squared,
/// so the result stays squarefree (mask XOR plus a scalar factor per
/// overlapping tag).
inline AlgebraElement mul(const AlgebraElement& a, const AlgebraElement& b, SigmaRule rule) {
  AlgebraElement out;
  if (a.terms_.empty() || b.terms_.empty()) return out;
  std::vector<AlgebraElement::Term> raw;
  raw.reserve(a.terms_.size() * b.terms_.size());
  for (const auto& [ma, ca] : a.terms_) {
    for (const auto& [mb, cb] : b.terms_) {
      const std::uint64_t overlap = ma & mb;
      double c = ca * cb;
      if (overlap != 0) {
        if (rule.sigma_squared == 0.0) continue;
        for (int k = std::popcount(overlap); k > 0; --k) c *= rule.sigma_squared;
      }
      raw.push_back({ma ^ mb, c});
    }
  }
  std::sort(raw.begin(), raw.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  for (const auto& [m, c] : raw) {
    if (!out.terms_.empty() && out.terms_.back().first == m) {
      out.terms_.back().second += c;
    } else {
      out.terms_.push_back({m, c});
    }
  }
  out.terms_.erase(std::remove_if(out.terms_.begin(), out.terms_.end(),
                                  [](const auto& t) { return t.second == 0.0; }),
                   out.terms_.end());
  return out;
}

inline AlgebraElement scalar(double c) { return AlgebraElement::scalar(c); }
inline AlgebraElement sigma(unsigned source_index) { return AlgebraElement::generator(source_index); }

}  // namespace swapcalc

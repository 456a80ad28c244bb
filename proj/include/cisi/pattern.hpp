#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cisi {

inline constexpr int kMaxTreatments = 10;

/// A length-K binary treatment vector. The pattern index reads (t1, ..., tK)
/// as a binary numeral with t1 as the most significant bit.
class TreatmentPattern {
 public:
  TreatmentPattern() = default;
  TreatmentPattern(int k, std::uint32_t index);

  static TreatmentPattern zeros(int k) { return TreatmentPattern(k, 0); }
  /// t_{+k}: only treatment `treatment` (1-based) active.
  static TreatmentPattern one_hot(int k, int treatment);
  /// t_{(+Q)}: treatments listed in `subset` (1-based) active, others off.
  static TreatmentPattern activate(int k, const std::vector<int>& subset);
  static TreatmentPattern from_bits(const std::vector<int>& bits);

  int size() const { return k_; }
  std::uint32_t index() const { return index_; }
  /// 1-based treatment lookup.
  bool active(int treatment) const;
  int active_count() const;
  std::vector<int> active_treatments() const;
  std::vector<double> as_row() const;
  /// "1,0,1"
  std::string str() const;

  friend bool operator==(const TreatmentPattern&, const TreatmentPattern&) = default;
  friend auto operator<=>(const TreatmentPattern&, const TreatmentPattern&) = default;

 private:
  int k_ = 0;
  std::uint32_t index_ = 0;
};

/// Sorted 1-based treatment indices.
using Subset = std::vector<int>;

/// "1,2,3"
std::string subset_key(const Subset& s);
Subset parse_subset_key(const std::string& key);
/// Orders by size, then lexicographically.
bool subset_less(const Subset& a, const Subset& b);
/// All subsets of {1..k} with at least `min_size` elements, in subset_less order.
std::vector<Subset> subsets_of_size_at_least(int k, int min_size);

}  // namespace cisi

#include "cisi/pattern.hpp"

#include "cisi/errors.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace cisi {

TreatmentPattern::TreatmentPattern(int k, std::uint32_t index) : k_(k), index_(index) {
  if (k < 1 || k > kMaxTreatments) {
    throw ConfigError("treatment count must be in [1, " + std::to_string(kMaxTreatments) + "]");
  }
  if (index >= (1u << k)) throw ContractError("pattern index out of range");
}

TreatmentPattern TreatmentPattern::one_hot(int k, int treatment) {
  return activate(k, {treatment});
}

TreatmentPattern TreatmentPattern::activate(int k, const std::vector<int>& subset) {
  std::uint32_t index = 0;
  for (int t : subset) {
    if (t < 1 || t > k) {
      throw ContractError("treatment index " + std::to_string(t) + " outside 1.." +
                          std::to_string(k));
    }
    index |= 1u << (k - t);
  }
  return TreatmentPattern(k, index);
}

TreatmentPattern TreatmentPattern::from_bits(const std::vector<int>& bits) {
  const int k = static_cast<int>(bits.size());
  std::uint32_t index = 0;
  for (int i = 0; i < k; ++i) {
    if (bits[static_cast<std::size_t>(i)] != 0 && bits[static_cast<std::size_t>(i)] != 1) {
      throw DataError("treatment values must be 0 or 1");
    }
    if (bits[static_cast<std::size_t>(i)] == 1) index |= 1u << (k - 1 - i);
  }
  return TreatmentPattern(k, index);
}

bool TreatmentPattern::active(int treatment) const {
  if (treatment < 1 || treatment > k_) throw ContractError("treatment index out of range");
  return (index_ >> (k_ - treatment)) & 1u;
}

int TreatmentPattern::active_count() const { return std::popcount(index_); }

std::vector<int> TreatmentPattern::active_treatments() const {
  std::vector<int> out;
  for (int t = 1; t <= k_; ++t) {
    if (active(t)) out.push_back(t);
  }
  return out;
}

std::vector<double> TreatmentPattern::as_row() const {
  std::vector<double> row;
  for (int t = 1; t <= k_; ++t) row.push_back(active(t) ? 1.0 : 0.0);
  return row;
}

std::string TreatmentPattern::str() const {
  std::string s;
  for (int t = 1; t <= k_; ++t) {
    if (t > 1) s += ',';
    s += active(t) ? '1' : '0';
  }
  return s;
}

std::string subset_key(const Subset& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

Subset parse_subset_key(const std::string& key) {
  Subset s;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      s.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw DataError("malformed subset key '" + key + "'");
    }
  }
  std::sort(s.begin(), s.end());
  return s;
}

bool subset_less(const Subset& a, const Subset& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

std::vector<Subset> subsets_of_size_at_least(int k, int min_size) {
  std::vector<Subset> out;
  for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
    if (std::popcount(mask) < min_size) continue;
    Subset s;
    for (int t = 1; t <= k; ++t) {
      if (mask & (1u << (t - 1))) s.push_back(t);
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), subset_less);
  return out;
}

}  // namespace cisi

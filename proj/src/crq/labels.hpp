#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crq {

// A set of detector/volume labels as a bitset over registry indices.
// The experiment has 7 volumes; 16 is a hard cap kept for sanity.
class LabelSet {
 public:
  static constexpr int kMaxLabels = 16;

  constexpr LabelSet() = default;
  constexpr explicit LabelSet(std::uint16_t bits) : bits_(bits) {}

  static constexpr LabelSet single(int idx) {
    return LabelSet(static_cast<std::uint16_t>(1u << idx));
  }

  constexpr bool contains(int idx) const { return (bits_ >> idx) & 1u; }
  constexpr bool contains_all(LabelSet other) const {
    return (bits_ & other.bits_) == other.bits_;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int count() const { return __builtin_popcount(bits_); }
  constexpr std::uint16_t bits() const { return bits_; }

  constexpr LabelSet with(int idx) const {
    return LabelSet(static_cast<std::uint16_t>(bits_ | (1u << idx)));
  }
  constexpr LabelSet unite(LabelSet other) const {
    return LabelSet(static_cast<std::uint16_t>(bits_ | other.bits_));
  }
  constexpr LabelSet intersect(LabelSet other) const {
    return LabelSet(static_cast<std::uint16_t>(bits_ & other.bits_));
  }
  constexpr LabelSet without(LabelSet other) const {
    return LabelSet(static_cast<std::uint16_t>(bits_ & ~other.bits_));
  }

  friend constexpr bool operator==(LabelSet a, LabelSet b) { return a.bits_ == b.bits_; }
  friend constexpr bool operator<(LabelSet a, LabelSet b) { return a.bits_ < b.bits_; }

 private:
  std::uint16_t bits_ = 0;
};

// Maps label names ("A".."F", "Q") to bit indices in registration order.
class LabelRegistry {
 public:
  int add(const std::string& name) {
    if (find(name) >= 0) throw std::invalid_argument("duplicate label: " + name);
    if (static_cast<int>(names_.size()) >= LabelSet::kMaxLabels)
      throw std::invalid_argument("too many labels");
    names_.push_back(name);
    return static_cast<int>(names_.size()) - 1;
  }
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }
  int require(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw std::invalid_argument("unknown label: " + name);
    return i;
  }
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int idx) const { return names_.at(static_cast<std::size_t>(idx)); }

  // Canonical display string, registration order ("QAB").
  std::string to_string(LabelSet s) const {
    std::string out;
    for (int i = 0; i < size(); ++i)
      if (s.contains(i)) out += names_[static_cast<std::size_t>(i)];
    return out.empty() ? "-" : out;
  }
  LabelSet parse(const std::string& s) const {
    LabelSet out;
    for (char c : s) out = out.with(require(std::string(1, c)));
    return out;
  }

 private:
  std::vector<std::string> names_;
};

}  // namespace crq

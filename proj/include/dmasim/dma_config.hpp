#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmasim {

/// Binary meta-atom states, one entry per element: 0 = diode off, 1 = on.
struct DmaConfiguration {
  std::vector<std::uint8_t> bits;

  DmaConfiguration() = default;
  explicit DmaConfiguration(std::size_t n) : bits(n, 0) {}
  explicit DmaConfiguration(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  std::size_t size() const { return bits.size(); }
  void flip(std::size_t i) { bits[i] ^= 1u; }

  int popcount() const;
  double ones_fraction() const;

  /// Throws std::invalid_argument unless length matches and entries are 0/1.
  void check(std::size_t expected_n) const;

  std::string to_string() const;
  static DmaConfiguration from_string(const std::string& s);

  /// Configuration number `index` in enumeration order: bit i = (index >> i) & 1.
  static DmaConfiguration from_index(std::uint64_t index, int n);

  bool operator==(const DmaConfiguration&) const = default;
};

}  // namespace dmasim

#include "dmasim/dma_config.hpp"

#include <stdexcept>

namespace dmasim {

int DmaConfiguration::popcount() const {
  int n = 0;
  for (auto b : bits) {
    n += b;
  }
  return n;
}

double DmaConfiguration::ones_fraction() const {
  if (bits.empty()) {
    return 0.0;
  }
  return static_cast<double>(popcount()) / static_cast<double>(bits.size());
}

void DmaConfiguration::check(std::size_t expected_n) const {
  if (bits.size() != expected_n) {
    throw std::invalid_argument("configuration length " + std::to_string(bits.size()) +
                                " does not match element count " + std::to_string(expected_n));
  }
  for (auto b : bits) {
    if (b > 1) {
      throw std::invalid_argument("configuration entries must be 0 or 1");
    }
  }
}

std::string DmaConfiguration::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) {
    s.push_back(b ? '1' : '0');
  }
  return s;
}

DmaConfiguration DmaConfiguration::from_string(const std::string& s) {
  DmaConfiguration c(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '1') {
      c.bits[i] = 1;
    } else if (s[i] != '0') {
      throw std::invalid_argument("configuration string must contain only '0'/'1'");
    }
  }
  return c;
}

DmaConfiguration DmaConfiguration::from_index(std::uint64_t index, int n) {
  if (n < 1 || n > 63) {
    throw std::invalid_argument("from_index supports 1..63 elements");
  }
  DmaConfiguration c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    c.bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((index >> i) & 1u);
  }
  return c;
}

}  // namespace dmasim

#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace gf {

// Garment size vocabulary, ordered.
inline constexpr std::array<const char*, 4> kSizeNames = {"S", "M", "L", "XL"};

inline std::string size_name(int idx) {
  if (idx < 0 || idx >= 4) throw std::invalid_argument("size index out of range");
  return kSizeNames[idx];
}

inline int size_from_name(const std::string& name) {
  for (int i = 0; i < 4; ++i)
    if (name == kSizeNames[i]) return i;
  throw std::invalid_argument("unknown size label '" + name + "'");
}

}  // namespace gf

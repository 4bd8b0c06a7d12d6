#pragma once

#include "faircal/core.hpp"

#include <algorithm>
#include <initializer_list>

namespace faircal::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

inline IntVector ivec(std::initializer_list<int> v) {
  IntVector out(static_cast<Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

}  // namespace faircal::testing

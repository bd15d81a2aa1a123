#pragma once

#include <string>
#include <vector>

#include "aurum/mae.hpp"

namespace aurum::detail {

enum class Init { XavierUniform, Zeros, Ones, SmallNormal };

struct SectionSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  Init init;
};

/// Every weight section a config implies, in checkpoint order.
std::vector<SectionSpec> section_layout(const MaeConfig& config);

}  // namespace aurum::detail

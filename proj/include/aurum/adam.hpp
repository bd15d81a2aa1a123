#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aurum/autodiff.hpp"

namespace aurum::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter in registration order.
template <class T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its `grad`. The
/// state is sized lazily on the first call. Moments are updated in double and
/// stored back in T, so identical inputs give bitwise-identical results.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& config);

}  // namespace aurum::nn

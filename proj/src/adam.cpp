#include "aurum/adam.hpp"

#include <cmath>

#include "aurum/error.hpp"

namespace aurum::nn {

template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& config) {
  if (state.first_moment.empty()) {
    for (const Parameter<T>* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = *params[i];
    require_same_shape(p.value, p.grad, "adam (value vs grad)");
    require_same_shape(p.value, state.first_moment[i], "adam (value vs moment)");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.requires_grad) continue;
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      const double mk = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      const double vk = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = config.learning_rate * (mk / correction1) /
                            (std::sqrt(vk / correction2) + config.eps);
      p.value[k] = static_cast<T>(p.value[k] - update);
    }
  }
}

template void adam_step(std::span<Parameter<float>* const>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<Parameter<double>* const>, AdamState<double>&, const AdamConfig&);

}  // namespace aurum::nn

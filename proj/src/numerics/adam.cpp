#include "orgpose/numerics/adam.hpp"

#include <cmath>

#include "orgpose/error.hpp"

namespace orgpose::nn {

AdamMoments& Adam::moments(const std::string& name) { return state_[name]; }

const AdamMoments* Adam::find(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? nullptr : &it->second;
}

void Adam::update(Parameter& parameter, AdamMoments& moments, const AdamOptions& options) {
  if (!(options.learning_rate >= 0.0)) throw ConfigError("learning_rate", "must be non-negative");
  if (!same_shape(parameter.grad, parameter.value)) {
    throw DimensionError("adam: gradient shape does not match parameter '" + parameter.name + "'");
  }
  if (moments.first.empty()) {
    moments.first = Tensor::zeros_like(parameter.value);
    moments.second = Tensor::zeros_like(parameter.value);
  }
  ++moments.step;
  const double t = static_cast<double>(moments.step);
  const double inv_correction1 = 1.0 / (1.0 - std::pow(options.beta1, t));
  const double inv_correction2 = 1.0 / (1.0 - std::pow(options.beta2, t));
  auto value = parameter.value.data();
  const auto grad = parameter.grad.data();
  auto m = moments.first.data();
  auto v = moments.second.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i] + options.weight_decay * value[i];
    m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g;
    v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g * g;
    const double m_hat = m[i] * inv_correction1;
    const double v_hat = v[i] * inv_correction2;
    value[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
  }
}

void Adam::step(ParameterStore& store, const AdamOptions& options) {
  auto params = store.trainable();
  for (const auto* p : params) {
    if (!p->grad.all_finite()) throw NumericalError("non-finite gradient for parameter '" + p->name + "'");
  }
  for (auto* p : params) update(*p, state_[p->name], options);
}

}  // namespace orgpose::nn

#include "protoeeg/adam.hpp"

#include <cmath>

#include "protoeeg/errors.hpp"

namespace protoeeg::diff {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void Adam::add_group(std::string name, std::vector<Tensor> params, double lr) {
  Group group{std::move(name), std::move(params), lr, {}};
  for (const auto& p : group.params) group.states.emplace_back(p.size());
  groups_.push_back(std::move(group));
}

Adam::Group& Adam::find(const std::string& name) {
  for (auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ConfigError("Adam: unknown parameter group '" + name + "'");
}

void Adam::set_lr(const std::string& name, double lr) { find(name).lr = lr; }

double Adam::lr(const std::string& name) const { return const_cast<Adam*>(this)->find(name).lr; }

void Adam::step() {
  for (auto& group : groups_) {
    for (std::size_t i = 0; i < group.params.size(); ++i) {
      auto& p = group.params[i];
      adam_step(p.mutable_values(), p.grad(), group.states[i], group.lr);
    }
  }
}

void Adam::zero_grad() {
  for (auto& group : groups_) {
    for (auto& p : group.params) p.zero_grad();
  }
}

}  // namespace protoeeg::diff

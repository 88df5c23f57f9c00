#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protoeeg/tensor.hpp"

namespace protoeeg::diff {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// One bias-corrected Adam update of params in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

// Adam over named groups of tensors, each group with its own learning rate.
class Adam {
 public:
  struct Group {
    std::string name;
    std::vector<Tensor> params;
    double lr = 0.0;
    std::vector<AdamState> states;
  };

  void add_group(std::string name, std::vector<Tensor> params, double lr);
  void set_lr(const std::string& name, double lr);
  double lr(const std::string& name) const;
  const std::vector<Group>& groups() const { return groups_; }

  void step();
  void zero_grad();

 private:
  Group& find(const std::string& name);
  std::vector<Group> groups_;
};

}  // namespace protoeeg::diff

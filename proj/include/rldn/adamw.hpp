#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rldn/tensor.hpp"

namespace rldn {

class TensorArchive;

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay. Moments are held per parameter in the
/// order the parameters were registered.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Tensor> params, AdamWOptions options);

  /// One update from the parameters' current gradients. Any non-finite
  /// gradient raises NumericError before anything is modified; a parameter
  /// without a gradient is treated as having a zero gradient.
  void step();
  void zero_grad();

  AdamWOptions& options() { return options_; }
  const AdamWOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_count_; }

  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& first_moments() { return first_; }
  std::vector<Tensor>& second_moments() { return second_; }
  const std::vector<Tensor>& first_moments() const { return first_; }
  const std::vector<Tensor>& second_moments() const { return second_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }

  /// Moments, step count and hyperparameters under `prefix`.
  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  std::vector<Tensor> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  AdamWOptions options_;
  std::int64_t step_count_ = 0;
};

}  // namespace rldn

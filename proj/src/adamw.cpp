#include "rldn/adamw.hpp"

#include <cmath>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"

namespace rldn {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate >= 0.0)) throw ArgumentError("AdamW: learning rate must be >= 0");
  if (!(options_.weight_decay >= 0.0)) throw ArgumentError("AdamW: weight decay must be >= 0");
  first_.reserve(params_.size());
  second_.reserve(params_.size());
  for (const Tensor& p : params_) {
    first_.push_back(Tensor::zeros(p.shape()));
    second_.push_back(Tensor::zeros(p.shape()));
  }
}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].has_grad() && !all_finite(params_[i].grad())) {
      throw NumericError("AdamW: non-finite gradient in parameter " + std::to_string(i) + " " +
                         shape_str(params_[i].shape()) + "; update aborted");
    }
  }

  ++step_count_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const double decay = 1.0 - lr * options_.weight_decay;

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].mutable_data();
    auto m = first_[i].mutable_data();
    auto v = second_[i].mutable_data();
    const bool has_grad = params_[i].has_grad();
    std::span<const double> g = has_grad ? params_[i].grad() : std::span<const double>{};
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      p[j] *= decay;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void AdamW::save(TensorArchive& archive, const std::string& prefix) const {
  archive.put_scalar(prefix + "step_count", static_cast<double>(step_count_));
  archive.put_scalar(prefix + "learning_rate", options_.learning_rate);
  archive.put_scalar(prefix + "weight_decay", options_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.put(prefix + "m." + std::to_string(i), first_[i]);
    archive.put(prefix + "v." + std::to_string(i), second_[i]);
  }
}

void AdamW::load(const TensorArchive& archive, const std::string& prefix) {
  step_count_ = static_cast<std::int64_t>(archive.get_scalar(prefix + "step_count"));
  options_.learning_rate = archive.get_scalar(prefix + "learning_rate");
  options_.weight_decay = archive.get_scalar(prefix + "weight_decay");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.copy_into(prefix + "m." + std::to_string(i), first_[i]);
    archive.copy_into(prefix + "v." + std::to_string(i), second_[i]);
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace rldn

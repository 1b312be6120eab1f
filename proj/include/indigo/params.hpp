#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "indigo/tensor.hpp"

namespace indigo {

// Ordered, named collection of trainable tensors. Registration order defines
// the serialization order. Values are shared: load() writes through the
// storage that any layer holding a copy of the tensor already sees.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);  // duplicate name is an error
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  int64_t total_elements() const;
  void set_trainable(bool b);

  void save(const std::string& path) const;
  // Fills every registered tensor from the file. Missing entries, extra
  // entries, and shape mismatches are errors.
  void load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_name_;
};

// Raw checkpoint access, used when the reader must inspect metadata entries
// before it can construct the matching parameter store.
void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(
    const std::string& path);

// Adam optimizer over a ParamStore. step() consumes the gradients recorded on
// a tape whose backward() has already run; a parameter with no gradient on the
// tape is an error (it usually means a detached graph).
class Adam {
 public:
  struct Config {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
  };

  Adam(ParamStore& params, Config cfg);
  void step(Tape& tape);
  int64_t step_count() const { return t_; }

 private:
  ParamStore* params_;
  Config cfg_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

// Plain gradient-descent update p -= lr * grad(p), same missing-grad contract.
void sgd_step(ParamStore& params, Tape& tape, float lr);

}  // namespace indigo

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tqf/core/tensor.hpp"

namespace tqf {

struct InitSpec {
  enum class Kind { kUniformFanIn, kUniform, kZeros, kConstant, kIdentity };
  Kind kind = Kind::kUniformFanIn;
  double bound = 0.0;   // kUniform: half-width; kConstant: the value
  std::size_t fan_in = 1;
};

template <typename T>
struct Param {
  std::string name;  // module.layer.weight
  Tensor<T> tensor;
  InitSpec init;
};

/// Named, insertion-ordered parameter registry owned by a model.
///
/// Every parameter is initialized from its own generator seeded by
/// (store seed, name), so adding a parameter never perturbs the values of the
/// others.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor<T> create(const std::string& name, Shape shape, InitSpec init);

  const Param<T>& get(const std::string& name) const;
  Param<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;
  std::uint64_t seed() const { return seed_; }

  void zero_grad();
  // Re-runs every initializer (same seed -> same values).
  void reinitialize();

 private:
  void initialize(Param<T>& p) const;

  std::uint64_t seed_;
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient of `loss` for every parameter, untouched ones as zeros.
template <typename T>
std::map<std::string, Tensor<T>> gradient_map(const Tensor<T>& loss, ParamStore<T>& store);

std::uint64_t hash_name(const std::string& name);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace tqf

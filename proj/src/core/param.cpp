#include "tqf/core/param.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tqf {

std::uint64_t hash_name(const std::string& name) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, InitSpec init) {
  if (contains(name)) throw ValidationError("duplicate parameter name: " + name);
  Param<T> p{name, Tensor<T>(std::move(shape)), init};
  p.tensor.set_requires_grad(true);
  initialize(p);
  index_.emplace(name, params_.size());
  params_.push_back(p);
  return params_.back().tensor;
}

template <typename T>
void ParamStore<T>::initialize(Param<T>& p) const {
  auto data = p.tensor.mutable_data();
  std::mt19937_64 rng(splitmix64(seed_ ^ hash_name(p.name)));
  switch (p.init.kind) {
    case InitSpec::Kind::kUniformFanIn:
    case InitSpec::Kind::kUniform: {
      const double bound = p.init.kind == InitSpec::Kind::kUniform
                               ? p.init.bound
                               : 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, p.init.fan_in)));
      // Map 53 random bits to [-bound, bound) by hand so values do not depend
      // on the standard library's distribution implementation.
      for (auto& v : data) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = static_cast<T>((2.0 * u - 1.0) * bound);
      }
      break;
    }
    case InitSpec::Kind::kZeros:
      std::fill(data.begin(), data.end(), T(0));
      break;
    case InitSpec::Kind::kConstant:
      std::fill(data.begin(), data.end(), static_cast<T>(p.init.bound));
      break;
    case InitSpec::Kind::kIdentity: {
      std::fill(data.begin(), data.end(), T(0));
      const auto& shape = p.tensor.shape();
      if (shape.size() != 2) throw ValidationError("identity init needs a matrix: " + p.name);
      for (std::size_t i = 0; i < std::min(shape[0], shape[1]); ++i) data[i * shape[1] + i] = T(1);
      break;
    }
  }
}

template <typename T>
const Param<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
  return params_[it->second];
}

template <typename T>
Param<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
  return params_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void ParamStore<T>::reinitialize() {
  for (auto& p : params_) initialize(p);
}

template <typename T>
std::map<std::string, Tensor<T>> gradient_map(const Tensor<T>& loss, ParamStore<T>& store) {
  store.zero_grad();
  backward(loss);
  std::map<std::string, Tensor<T>> out;
  for (auto& p : store.params()) {
    Tensor<T> g(p.tensor.shape());
    if (p.tensor.has_grad()) {
      auto src = p.tensor.grad();
      std::copy(src.begin(), src.end(), g.mutable_data().begin());
    }
    out.emplace(p.name, g);
  }
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::map<std::string, Tensor<float>> gradient_map(const Tensor<float>&, ParamStore<float>&);
template std::map<std::string, Tensor<double>> gradient_map(const Tensor<double>&, ParamStore<double>&);

}  // namespace tqf

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "rode/autodiff.hpp"
#include "rode/tensor.hpp"

namespace rode {

using ad::GradientMap;

// Named learnable tensors. Iteration is sorted by name.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::uint64_t step() const noexcept { return step_; }
  void advance_step() noexcept { ++step_; }

  // One differentiable leaf per parameter, named after it.
  std::map<std::string, ad::Var> bind(bool requires_grad) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.params_ == b.params_; }

 private:
  Map params_;
  std::uint64_t step_ = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Parameters absent from `grads` are treated as having zero gradient.
  void step(ParamStore& params, const GradientMap& grads, double lr);

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };
  AdamOptions options_;
  std::map<std::string, Moments> moments_;
};

// "R-ODE-CKPT v1" text format: name<TAB>rows,cols<TAB>base64(little-endian float64).
void write_checkpoint(std::ostream& out, const ParamStore& params);
ParamStore read_checkpoint(std::istream& in, const std::string& source = "<stream>");
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace rode

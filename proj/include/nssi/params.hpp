#pragma once

#include "nssi/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace nssi {

struct ParamTensor {
  std::string name;
  Tensor value;
  bool decay = true;      // receives L2 weight decay (weights yes, biases / BatchNorm no)
  bool trainable = true;  // false for BatchNorm running statistics
};

// Ordered, name-addressable collection of tensors. Used for parameters,
// their gradients (GradientSet) and optimizer accumulators.
class ParamSet {
 public:
  ParamTensor& add(std::string name, Shape shape, bool decay = true, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& operator[](const std::string& name);
  const Tensor& operator[](const std::string& name) const;
  const ParamTensor& entry(const std::string& name) const;

  std::vector<ParamTensor>& entries() { return tensors_; }
  const std::vector<ParamTensor>& entries() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  std::size_t trainable_count() const;

  // Same names and shapes, trainable entries only, zero-filled.
  ParamSet zeros_like() const;

  void add_scaled(const ParamSet& other, double scale);  // this += scale * other (matching names)
  void scale(double s);
  void append(const ParamSet& other, const std::string& prefix = "");

 private:
  std::vector<ParamTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

using GradientSet = ParamSet;

// Throws naming the first tensor with a non-finite entry.
void require_finite(const ParamSet& set, const std::string& what);

}  // namespace nssi

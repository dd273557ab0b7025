#include "nssi/params.hpp"

#include <stdexcept>

namespace nssi {

ParamTensor& ParamSet::add(std::string name, Shape shape, bool decay, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter tensor '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back(ParamTensor{std::move(name), Tensor(std::move(shape)), decay, trainable});
  return tensors_.back();
}

Tensor& ParamSet::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter tensor '" + name + "'");
  return tensors_[it->second].value;
}

const Tensor& ParamSet::operator[](const std::string& name) const { return entry(name).value; }

const ParamTensor& ParamSet::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter tensor '" + name + "'");
  return tensors_[it->second];
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    if (t.trainable) n += t.value.size();
  }
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) {
    if (t.trainable) out.add(t.name, t.value.shape(), t.decay, true);
  }
  return out;
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
  for (const auto& t : other.tensors_) {
    Tensor& dst = (*this)[t.name];
    if (dst.shape() != t.value.shape()) throw std::invalid_argument("add_scaled: shape mismatch on " + t.name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * t.value[i];
  }
}

void ParamSet::scale(double s) {
  for (auto& t : tensors_) {
    for (auto& v : t.value.storage()) v *= s;
  }
}

void ParamSet::append(const ParamSet& other, const std::string& prefix) {
  for (const auto& t : other.tensors_) {
    ParamTensor& e = add(prefix + t.name, t.value.shape(), t.decay, t.trainable);
    e.value = t.value;
  }
}

void require_finite(const ParamSet& set, const std::string& what) {
  for (const auto& t : set.entries()) {
    if (!t.value.all_finite()) throw std::runtime_error(what + ": non-finite values in tensor '" + t.name + "'");
  }
}

}  // namespace nssi

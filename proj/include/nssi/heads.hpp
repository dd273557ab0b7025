#pragma once

#include "nssi/params.hpp"
#include "nssi/tensor.hpp"

#include <cstdint>
#include <string>

namespace nssi {

struct MlpCache {
  Tensor input;   // [N, in]
  Tensor pre;     // [N, hidden]
  Tensor hidden;  // relu(pre)
};

// in -> hidden (ReLU) -> out logits. Parameters: fc1.weight [hidden, in],
// fc1.bias, fc2.weight [out, hidden], fc2.bias.
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(std::string name, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);

  const std::string& name() const { return name_; }
  std::size_t in_width() const { return params_["fc1.weight"].dim(1); }
  std::size_t out_width() const { return params_["fc2.weight"].dim(0); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  Tensor forward(const Tensor& in, MlpCache& cache) const;  // logits [N, out]

  struct Backward {
    GradientSet grads;
    Tensor d_input;
  };
  Backward backward(const MlpCache& cache, const Tensor& d_logits) const;

 private:
  std::string name_;
  ParamSet params_;
};

// The four discriminator / classifier heads.
//   signal  D: reconstruction (C*P)  -> 1 logit
//   gender  e: features (M*F)        -> 1 logit (male = 1)
//   domain  d: features              -> 3 logits (S_l, S_u, T), or 2 for the merged-source variant
//   disease f: features              -> 1 logit (DN+ = 1)
struct HeadSet {
  MlpHead signal;
  MlpHead gender;
  MlpHead domain;
  MlpHead disease;

  std::size_t parameter_count() const;
};

HeadSet make_heads(std::size_t signal_width, std::size_t feature_width, std::size_t domain_classes,
                   std::size_t hidden, std::uint64_t seed);

}  // namespace nssi

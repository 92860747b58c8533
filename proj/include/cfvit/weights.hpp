// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfvit/config.hpp"
#include "cfvit/tensor.hpp"

namespace cfvit {

// Affine map stored input-major: weight [in x out], bias [out].
struct LinearWeights {
  Tensor weight;
  Tensor bias;
};

struct NormWeights {
  Tensor gain;
  Tensor bias;
};

struct EncoderWeights {
  NormWeights norm1;
  LinearWeights qkv;       // D -> 3D, columns ordered q | k | v
  LinearWeights attn_out;  // D -> D
  NormWeights norm2;
  LinearWeights ffn_in;    // D -> mlp_ratio*D
  LinearWeights ffn_out;   // mlp_ratio*D -> D
};

// Feature-reuse MLP: norm -> linear -> GELU -> linear.
struct ReuseWeights {
  NormWeights norm;
  LinearWeights mlp_in;   // D -> D_hidden
  LinearWeights mlp_out;  // D_hidden -> D
};

struct HeadWeights {
  NormWeights norm;
  LinearWeights linear;  // D -> n
};

// Parameters shared by both inference stages. Treated as immutable once
// built; pass by const reference to concurrent inferences.
struct ModelWeights {
  LinearWeights patch_projection;  // 3*p*p -> D, input flattened (channel, y, x)
  Tensor class_token;              // [D]
  Tensor pos_table_fine;           // [(1 + fine_grid^2) x D], row 0 is the class slot
  std::vector<EncoderWeights> encoders;
  ReuseWeights reuse;
  HeadWeights head;
};

using NamedTensor = std::pair<std::string, Tensor>;

// Canonical tensor names and shapes required by `cfg`, in container order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> required_tensors(const ModelConfig& cfg);

// Flattens weights into canonical (name, tensor) order.
std::vector<NamedTensor> to_named(const ModelWeights& w, const ModelConfig& cfg);

// Builds weights from a name map; every required name must be present with
// its expected shape (Error::Validation otherwise).
ModelWeights from_named(const std::map<std::string, Tensor>& tensors, const ModelConfig& cfg);

// Throws Error(Validation) if any tensor shape disagrees with `cfg`.
void check_shapes(const ModelWeights& w, const ModelConfig& cfg);

}  // namespace cfvit

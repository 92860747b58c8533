// SPDX-License-Identifier: Apache-2.0
#include "cfvit/weights.hpp"

#include <algorithm>

namespace cfvit {

namespace {

using Shape = std::vector<std::size_t>;

// Visits every tensor slot of `w` in canonical order with its name and
// expected shape. Shared by naming, loading and validation so the three can
// never disagree on order.
template <typename Weights, typename Fn>
void visit(Weights& w, const ModelConfig& cfg, Fn&& fn) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t hidden = cfg.mlp_hidden();
  const std::size_t rh = cfg.reuse_width();
  fn("patch_embed.weight", Shape{cfg.patch_dim(), d}, w.patch_projection.weight);
  fn("patch_embed.bias", Shape{d}, w.patch_projection.bias);
  fn("cls_token", Shape{d}, w.class_token);
  fn("pos_embed", Shape{1 + cfg.fine_patches(), d}, w.pos_table_fine);
  for (std::size_t k = 0; k < cfg.depth; ++k) {
    auto& e = w.encoders[k];
    const std::string p = "blocks." + std::to_string(k) + ".";
    fn(p + "norm1.weight", Shape{d}, e.norm1.gain);
    fn(p + "norm1.bias", Shape{d}, e.norm1.bias);
    fn(p + "attn.qkv.weight", Shape{d, 3 * d}, e.qkv.weight);
    fn(p + "attn.qkv.bias", Shape{3 * d}, e.qkv.bias);
    fn(p + "attn.proj.weight", Shape{d, d}, e.attn_out.weight);
    fn(p + "attn.proj.bias", Shape{d}, e.attn_out.bias);
    fn(p + "norm2.weight", Shape{d}, e.norm2.gain);
    fn(p + "norm2.bias", Shape{d}, e.norm2.bias);
    fn(p + "mlp.fc1.weight", Shape{d, hidden}, e.ffn_in.weight);
    fn(p + "mlp.fc1.bias", Shape{hidden}, e.ffn_in.bias);
    fn(p + "mlp.fc2.weight", Shape{hidden, d}, e.ffn_out.weight);
    fn(p + "mlp.fc2.bias", Shape{d}, e.ffn_out.bias);
  }
  fn("reuse.norm.weight", Shape{d}, w.reuse.norm.gain);
  fn("reuse.norm.bias", Shape{d}, w.reuse.norm.bias);
  fn("reuse.fc1.weight", Shape{d, rh}, w.reuse.mlp_in.weight);
  fn("reuse.fc1.bias", Shape{rh}, w.reuse.mlp_in.bias);
  fn("reuse.fc2.weight", Shape{rh, d}, w.reuse.mlp_out.weight);
  fn("reuse.fc2.bias", Shape{d}, w.reuse.mlp_out.bias);
  fn("head.norm.weight", Shape{d}, w.head.norm.gain);
  fn("head.norm.bias", Shape{d}, w.head.norm.bias);
  fn("head.weight", Shape{d, cfg.num_classes}, w.head.linear.weight);
  fn("head.bias", Shape{cfg.num_classes}, w.head.linear.bias);
}

}  // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> required_tensors(const ModelConfig& cfg) {
  ModelWeights scratch;
  scratch.encoders.resize(cfg.depth);
  std::vector<std::pair<std::string, Shape>> out;
  visit(scratch, cfg, [&](const std::string& name, const Shape& shape, Tensor&) { out.emplace_back(name, shape); });
  return out;
}

std::vector<NamedTensor> to_named(const ModelWeights& w, const ModelConfig& cfg) {
  check_shapes(w, cfg);
  std::vector<NamedTensor> out;
  visit(w, cfg, [&](const std::string& name, const Shape&, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

ModelWeights from_named(const std::map<std::string, Tensor>& tensors, const ModelConfig& cfg) {
  ModelWeights w;
  w.encoders.resize(cfg.depth);
  std::size_t used = 0;
  visit(w, cfg, [&](const std::string& name, const Shape& shape, Tensor& slot) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorKind::Validation, "missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw Error(ErrorKind::Validation, "tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                                             ", config requires " + shape_string(shape));
    }
    slot = it->second;
    ++used;
  });
  if (used != tensors.size()) {
    const auto required = required_tensors(cfg);
    for (const auto& [name, t] : tensors) {
      const bool known = std::any_of(required.begin(), required.end(), [&](const auto& r) { return r.first == name; });
      if (!known) throw Error(ErrorKind::Validation, "unexpected tensor '" + name + "'");
    }
  }
  return w;
}

void check_shapes(const ModelWeights& w, const ModelConfig& cfg) {
  if (w.encoders.size() != cfg.depth) {
    throw Error(ErrorKind::Validation, "weights hold " + std::to_string(w.encoders.size()) + " encoders, config depth is " +
                                           std::to_string(cfg.depth));
  }
  visit(w, cfg, [&](const std::string& name, const Shape& shape, const Tensor& t) {
    if (t.shape() != shape) {
      throw Error(ErrorKind::Validation,
                  "tensor '" + name + "' has shape " + shape_string(t.shape()) + ", config requires " + shape_string(shape));
    }
  });
}

}  // namespace cfvit

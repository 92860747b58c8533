// SPDX-License-Identifier: Apache-2.0
#include "cfvit/model.hpp"

#include <algorithm>

#include "cfvit/kernels.hpp"

namespace cfvit {

namespace {

struct Cell {
  std::size_t y;
  std::size_t x;
};

Cell coarse_cell(std::size_t parent, const ModelConfig& cfg) {
  const std::size_t idx = parent - 1;
  return {idx / cfg.coarse_grid, idx % cfg.coarse_grid};
}

Cell fine_cell(const Slot& slot, const ModelConfig& cfg) {
  const Cell c = coarse_cell(slot.parent, cfg);
  return {2 * c.y + slot.child / 2, 2 * c.x + slot.child % 2};
}

void check_slot(const Slot& slot, const ModelConfig& cfg) {
  if (slot.kind == SlotKind::Class) return;
  if (slot.parent < 1 || slot.parent > cfg.coarse_patches()) {
    throw Error(ErrorKind::Dimension, "slot parent " + std::to_string(slot.parent) + " outside 1.." +
                                          std::to_string(cfg.coarse_patches()));
  }
  if (slot.kind == SlotKind::Fine && slot.child > 3) {
    throw Error(ErrorKind::Dimension, "fine child index must be 0..3");
  }
}

}  // namespace

std::vector<Slot> coarse_layout(const ModelConfig& cfg) {
  std::vector<Slot> layout;
  layout.reserve(cfg.coarse_patches());
  for (std::size_t i = 1; i <= cfg.coarse_patches(); ++i) layout.push_back(Slot::coarse(i));
  return layout;
}

std::vector<Slot> fine_grid_layout(const ModelConfig& cfg) {
  std::vector<Slot> layout;
  layout.reserve(cfg.fine_patches());
  const std::size_t g = cfg.fine_grid();
  for (std::size_t fy = 0; fy < g; ++fy) {
    for (std::size_t fx = 0; fx < g; ++fx) {
      const std::size_t parent = (fy / 2) * cfg.coarse_grid + fx / 2 + 1;
      layout.push_back(Slot::fine(parent, (fy % 2) * 2 + fx % 2));
    }
  }
  return layout;
}

std::vector<Slot> mixed_layout(const ModelConfig& cfg, std::span<const std::size_t> selected) {
  const std::size_t nc = cfg.coarse_patches();
  std::vector<bool> split(nc + 1, false);
  for (std::size_t id : selected) {
    if (id < 1 || id > nc) {
      throw Error(ErrorKind::Consistency, "selected patch " + std::to_string(id) + " outside 1.." + std::to_string(nc));
    }
    if (split[id]) throw Error(ErrorKind::Consistency, "patch " + std::to_string(id) + " selected twice");
    split[id] = true;
  }
  std::vector<Slot> layout;
  layout.reserve(nc + 3 * selected.size());
  for (std::size_t i = 1; i <= nc; ++i) {
    if (split[i]) {
      for (std::size_t c = 0; c < 4; ++c) layout.push_back(Slot::fine(i, c));
    } else {
      layout.push_back(Slot::coarse(i));
    }
  }
  return layout;
}

std::size_t fine_table_row(const Slot& slot, const ModelConfig& cfg) {
  const Cell f = fine_cell(slot, cfg);
  return 1 + f.y * cfg.fine_grid() + f.x;
}

Tensor positional_lookup(const Slot& slot, const ModelConfig& cfg, const ModelWeights& w) {
  check_slot(slot, cfg);
  const std::size_t d = cfg.embed_dim;
  Tensor out({d});
  switch (slot.kind) {
    case SlotKind::Class: {
      const auto r = w.pos_table_fine.row(0);
      std::copy(r.begin(), r.end(), out.data().begin());
      break;
    }
    case SlotKind::Fine: {
      const auto r = w.pos_table_fine.row(fine_table_row(slot, cfg));
      std::copy(r.begin(), r.end(), out.data().begin());
      break;
    }
    case SlotKind::Coarse: {
      std::vector<double> acc(d, 0.0);
      for (std::size_t c = 0; c < 4; ++c) {
        const auto r = w.pos_table_fine.row(fine_table_row(Slot::fine(slot.parent, c), cfg));
        for (std::size_t j = 0; j < d; ++j) acc[j] += r[j];
      }
      for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(acc[j] / 4.0);
      break;
    }
  }
  return out;
}

void check_image(const Tensor& image, const ModelConfig& cfg) {
  const std::size_t px = cfg.image_px();
  if (image.rank() != 3 || image.extent(0) != 3 || image.extent(1) != px || image.extent(2) != px) {
    throw Error(ErrorKind::Dimension, "image shape " + shape_string(image.shape()) + " does not match [3x" +
                                          std::to_string(px) + "x" + std::to_string(px) + "] (fine_grid " +
                                          std::to_string(cfg.fine_grid()) + " x patch " + std::to_string(cfg.patch_px) +
                                          ")");
  }
}

std::vector<float> patch_pixels(const Tensor& image, const Slot& slot, const ModelConfig& cfg) {
  check_slot(slot, cfg);
  const std::size_t p = cfg.patch_px;
  const std::size_t side = cfg.image_px();
  const auto px = image.data();
  auto at = [&](std::size_t c, std::size_t y, std::size_t x) { return px[(c * side + y) * side + x]; };
  std::vector<float> out(3 * p * p);
  if (slot.kind == SlotKind::Fine) {
    const Cell f = fine_cell(slot, cfg);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) out[(c * p + y) * p + x] = at(c, f.y * p + y, f.x * p + x);
  } else if (slot.kind == SlotKind::Coarse) {
    const Cell cc = coarse_cell(slot.parent, cfg);
    const std::size_t y0 = cc.y * 2 * p;
    const std::size_t x0 = cc.x * 2 * p;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          const double s = static_cast<double>(at(c, y0 + 2 * y, x0 + 2 * x)) + at(c, y0 + 2 * y, x0 + 2 * x + 1) +
                           at(c, y0 + 2 * y + 1, x0 + 2 * x) + at(c, y0 + 2 * y + 1, x0 + 2 * x + 1);
          out[(c * p + y) * p + x] = static_cast<float>(s / 4.0);
        }
      }
    }
  } else {
    throw Error(ErrorKind::Dimension, "the class slot has no pixels");
  }
  return out;
}

TokenSequence embed_layout(const Tensor& image, std::vector<Slot> layout, const ModelConfig& cfg,
                           const ModelWeights& w, OpCounter* counter) {
  check_image(image, cfg);
  const std::size_t n = layout.size();
  const std::size_t d = cfg.embed_dim;
  const std::size_t pd = cfg.patch_dim();

  Tensor tokens({1 + n, d});
  {
    const auto pos = positional_lookup(Slot::class_slot(), cfg, w);
    for (std::size_t j = 0; j < d; ++j) tokens.at(0, j) = w.class_token[j] + pos[j];
  }
  if (n > 0) {
    Tensor patches({n, pd});
    for (std::size_t i = 0; i < n; ++i) {
      const auto pix = patch_pixels(image, layout[i], cfg);
      std::copy(pix.begin(), pix.end(), patches.row(i).begin());
    }
    const Tensor projected =
        kernels::linear(patches, w.patch_projection.weight, w.patch_projection.bias, counter, OpKind::PatchEmbed);
    for (std::size_t i = 0; i < n; ++i) {
      const auto pos = positional_lookup(layout[i], cfg, w);
      const auto src = projected.row(i);
      auto dst = tokens.row(i + 1);
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] + pos[j];
    }
  }
  return {std::move(tokens), std::move(layout)};
}

TokenSequence embed_patches(const Tensor& image, Granularity granularity, std::span<const std::size_t> selection,
                            const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter) {
  switch (granularity) {
    case Granularity::Coarse: return embed_layout(image, coarse_layout(cfg), cfg, w, counter);
    case Granularity::Fine: return embed_layout(image, fine_grid_layout(cfg), cfg, w, counter);
    case Granularity::Mixed: return embed_layout(image, mixed_layout(cfg, selection), cfg, w, counter);
  }
  throw Error(ErrorKind::Config, "unknown granularity");
}

EncoderOutput encoder_forward(const Tensor& tokens, const EncoderWeights& layer, const ModelConfig& cfg,
                              OpCounter* counter) {
  if (tokens.rank() != 2 || tokens.rows() < 1 || tokens.cols() != cfg.embed_dim) {
    throw Error(ErrorKind::Dimension, "encoder input " + shape_string(tokens.shape()));
  }
  const std::size_t n = tokens.rows();
  const std::size_t d = cfg.embed_dim;

  const Tensor h = kernels::layer_norm(tokens, layer.norm1.gain, layer.norm1.bias, cfg.norm_eps);
  const Tensor qkv = kernels::linear(h, layer.qkv.weight, layer.qkv.bias, counter, OpKind::QkvProjection);
  Tensor q({n, d}), k({n, d}), v({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = qkv.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(d), q.row(r).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(d), src.begin() + static_cast<std::ptrdiff_t>(2 * d),
              k.row(r).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(2 * d), src.end(), v.row(r).begin());
  }
  auto attn = kernels::multi_head_attention(q, k, v, cfg.heads, counter);
  const Tensor projected =
      kernels::linear(attn.output, layer.attn_out.weight, layer.attn_out.bias, counter, OpKind::OutProjection);
  const Tensor x1 = kernels::add(tokens, projected);

  const Tensor h2 = kernels::layer_norm(x1, layer.norm2.gain, layer.norm2.bias, cfg.norm_eps);
  const Tensor hidden = kernels::gelu(kernels::linear(h2, layer.ffn_in.weight, layer.ffn_in.bias, counter, OpKind::Ffn));
  const Tensor ffn = kernels::linear(hidden, layer.ffn_out.weight, layer.ffn_out.bias, counter, OpKind::Ffn);
  return {kernels::add(x1, ffn), std::move(attn.class_attention)};
}

Tensor classify(const Tensor& final_tokens, const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter) {
  const auto cls_row = final_tokens.row(0);
  const Tensor cls({1, cfg.embed_dim}, std::vector<float>(cls_row.begin(), cls_row.end()));
  const Tensor normed = kernels::layer_norm(cls, w.head.norm.gain, w.head.norm.bias, cfg.norm_eps);
  return kernels::linear(normed, w.head.linear.weight, w.head.linear.bias, counter, OpKind::Head)
      .reshaped({cfg.num_classes});
}

ForwardResult forward(const TokenSequence& seq, const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter) {
  if (seq.tokens.rank() != 2 || seq.tokens.rows() != seq.layout.size() + 1 || seq.tokens.cols() != cfg.embed_dim) {
    throw Error(ErrorKind::Dimension, "token sequence " + shape_string(seq.tokens.shape()) + " inconsistent with " +
                                          std::to_string(seq.layout.size()) + " layout slots");
  }
  if (w.encoders.size() != cfg.depth) throw Error(ErrorKind::Validation, "weights depth differs from config");

  ForwardResult result;
  result.class_attention.reserve(cfg.depth);
  Tensor x = seq.tokens;
  for (std::size_t k = 0; k < cfg.depth; ++k) {
    auto out = encoder_forward(x, w.encoders[k], cfg, counter);
    x = std::move(out.tokens);
    result.global_attention =
        update_global_attention(std::move(result.global_attention), out.class_attention, cfg.beta, k + 1, cfg.ema_start);
    result.class_attention.push_back(std::move(out.class_attention));
  }
  result.logits = classify(x, cfg, w, counter);
  result.final_tokens = std::move(x);
  return result;
}

}  // namespace cfvit

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfvit/config.hpp"
#include "cfvit/telemetry.hpp"
#include "cfvit/tensor.hpp"
#include "cfvit/weights.hpp"

namespace cfvit {

enum class SlotKind { Class, Coarse, Fine };

// Where a token came from. `parent` is the 1-based coarse patch id in raster
// order over the coarse grid; `child` (fine slots only) is the 2x2 sub-cell
// in raster suborder: 0=TL, 1=TR, 2=BL, 3=BR.
struct Slot {
  SlotKind kind = SlotKind::Coarse;
  std::size_t parent = 0;
  std::size_t child = 0;

  static Slot class_slot() { return {SlotKind::Class, 0, 0}; }
  static Slot coarse(std::size_t parent) { return {SlotKind::Coarse, parent, 0}; }
  static Slot fine(std::size_t parent, std::size_t child) { return {SlotKind::Fine, parent, child}; }

  friend bool operator==(const Slot&, const Slot&) = default;
};

// Row 0 of `tokens` is the [class] token; row i >= 1 corresponds to
// layout[i-1].
struct TokenSequence {
  Tensor tokens;
  std::vector<Slot> layout;

  std::size_t patch_count() const { return layout.size(); }
};

enum class Granularity { Coarse, Fine, Mixed };

// Layout builders.
std::vector<Slot> coarse_layout(const ModelConfig& cfg);
// Classic ViT order: raster over the fine grid.
std::vector<Slot> fine_grid_layout(const ModelConfig& cfg);
// Raster over coarse patches; each id in `selected` expands in place to its
// four children (TL, TR, BL, BR). Throws Error(Consistency) for ids outside
// 1..N_c or duplicates.
std::vector<Slot> mixed_layout(const ModelConfig& cfg, std::span<const std::size_t> selected);

// Row of the fine positional table for a fine cell of `slot`.
std::size_t fine_table_row(const Slot& slot, const ModelConfig& cfg);

// Fine slots read the fine table directly; coarse slots average the four
// fine entries they cover; the class slot reads row 0.
Tensor positional_lookup(const Slot& slot, const ModelConfig& cfg, const ModelWeights& w);

// Flattened pixels of one slot, (channel, y, x) order, p*p per channel.
// Coarse slots are 2x2 average pooled down to p*p.
std::vector<float> patch_pixels(const Tensor& image, const Slot& slot, const ModelConfig& cfg);

// Projects every slot of `layout`, prepends the class token and adds
// positions. Image is [3 x H x W] with H == W == fine_grid * patch_px.
TokenSequence embed_layout(const Tensor& image, std::vector<Slot> layout, const ModelConfig& cfg,
                           const ModelWeights& w, OpCounter* counter = nullptr);

// Granularity::Mixed requires `selection`; the other modes ignore it.
TokenSequence embed_patches(const Tensor& image, Granularity granularity, std::span<const std::size_t> selection,
                            const ModelConfig& cfg, const ModelWeights& w, OpCounter* counter = nullptr);

void check_image(const Tensor& image, const ModelConfig& cfg);

struct EncoderOutput {
  Tensor tokens;
  Tensor class_attention;  // [1 + N]
};

// Pre-norm block: x + proj(MHSA(norm1(x))), then + FFN(norm2(.)).
EncoderOutput encoder_forward(const Tensor& tokens, const EncoderWeights& layer, const ModelConfig& cfg,
                              OpCounter* counter = nullptr);

struct ForwardResult {
  Tensor logits;  // [n], pre-softmax
  std::vector<Tensor> class_attention;  // one per encoder
  GlobalAttentionState global_attention;
  Tensor final_tokens;  // [(1 + N) x D], before the head norm
};

// Runs all encoders plus the head on an embedded sequence.
ForwardResult forward(const TokenSequence& seq, const ModelConfig& cfg, const ModelWeights& w,
                      OpCounter* counter = nullptr);

// Head norm + linear on the class row of `final_tokens`.
Tensor classify(const Tensor& final_tokens, const ModelConfig& cfg, const ModelWeights& w,
                OpCounter* counter = nullptr);

}  // namespace cfvit

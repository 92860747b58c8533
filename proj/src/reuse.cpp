// SPDX-License-Identifier: Apache-2.0
#include "cfvit/reuse.hpp"

#include <algorithm>
#include <map>

#include "cfvit/kernels.hpp"

namespace cfvit {

Tensor reuse_features(const Tensor& coarse_final_tokens, std::span<const std::size_t> selected,
                      const std::vector<Slot>& layout, const ReuseWeights& rw, float norm_eps, OpCounter* counter) {
  const std::size_t d = coarse_final_tokens.cols();
  const std::size_t nc = coarse_final_tokens.rows() - 1;

  // Row of each selected parent within the MLP batch.
  std::map<std::size_t, std::size_t> batch_row;
  for (std::size_t id : selected) {
    if (id < 1 || id > nc) {
      throw Error(ErrorKind::Consistency, "selected patch " + std::to_string(id) + " outside 1.." + std::to_string(nc));
    }
    if (!batch_row.emplace(id, batch_row.size()).second) {
      throw Error(ErrorKind::Consistency, "patch " + std::to_string(id) + " selected twice");
    }
  }

  std::map<std::size_t, std::size_t> children_seen;
  for (const Slot& s : layout) {
    if (s.kind == SlotKind::Fine) {
      if (!batch_row.contains(s.parent)) {
        throw Error(ErrorKind::Consistency, "layout splits patch " + std::to_string(s.parent) + " which is not selected");
      }
      ++children_seen[s.parent];
    } else if (s.kind == SlotKind::Coarse && batch_row.contains(s.parent)) {
      throw Error(ErrorKind::Consistency, "selected patch " + std::to_string(s.parent) + " left coarse in layout");
    }
  }
  for (const auto& [id, row] : batch_row) {
    if (children_seen[id] != 4) {
      throw Error(ErrorKind::Consistency, "selected patch " + std::to_string(id) + " has " +
                                              std::to_string(children_seen[id]) + " fine children in layout");
    }
  }

  Tensor out({1 + layout.size(), d});
  if (batch_row.empty()) return out;

  Tensor gathered({batch_row.size(), d});
  for (const auto& [id, row] : batch_row) {
    const auto src = coarse_final_tokens.row(id);
    std::copy(src.begin(), src.end(), gathered.row(row).begin());
  }
  const Tensor normed = kernels::layer_norm(gathered, rw.norm.gain, rw.norm.bias, norm_eps);
  const Tensor hidden = kernels::gelu(kernels::linear(normed, rw.mlp_in.weight, rw.mlp_in.bias, counter, OpKind::Reuse));
  const Tensor transformed = kernels::linear(hidden, rw.mlp_out.weight, rw.mlp_out.bias, counter, OpKind::Reuse);

  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].kind != SlotKind::Fine) continue;
    const auto src = transformed.row(batch_row.at(layout[i].parent));
    std::copy(src.begin(), src.end(), out.row(i + 1).begin());
  }
  return out;
}

}  // namespace cfvit

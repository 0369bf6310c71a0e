// SPDX-License-Identifier: Apache-2.0
//
// Flat single-file tensor container for model weights.
//
// Layout:
//   bytes 0..7   u64 little-endian byte length of the text header
//   header       ASCII text, '\n'-separated lines:
//                  line 1: "sdtc1 <n_layers> <d_model> <n_heads> <vocab_size>
//                           <max_seq> <dtype> <eps_bits>"
//                  then one line per tensor:
//                           "tensor <name> <dtype> <rows>x<cols> <offset>"
//   payload      raw little-endian tensor data (row-major), each tensor at
//                its stated byte offset from the payload start
//
// dtype is "f32" or "f16"; eps_bits is the norm epsilon's raw IEEE-754 bits
// so the config survives the roundtrip exactly.
#pragma once

#include <string>

#include "sde/model.hpp"

namespace sde {

// Raised for unreadable, truncated, or structurally inconsistent archives.
class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes all model tensors in canonical order.  The file is written to a
// temporary sibling path and renamed into place.
void save_model(const Model& model, const std::string& path);

// Reconstructs a model.  Throws ArchiveError on truncation (header or
// payload shorter than declared), unknown dtype tags, missing tensors, or
// shape mismatches against the declared config; the offending tensor is
// named in the message.
Model load_model(const std::string& path);

}  // namespace sde

// SPDX-License-Identifier: Apache-2.0
//
// Wire format for latent payloads.
//
// Header (little-endian):
//   bytes 0..3   magic "SDE1"
//   u16          version (currently 1)
//   u16          layer count
//   u16 * k      layer ids
//   u32          token count
//   u32          d_model
//   u8           dtype tag (0 = f32, 1 = f16)
//   u32          CRC-32 (IEEE) of every header byte above
// Payload:
//   layer-major, token-minor: for each layer, for each token, d_model
//   little-endian scalars in the tagged dtype.
//
// The checksum exists so that any single corrupted header byte is detected
// instead of silently reshaping the payload.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sde/message.hpp"

namespace sde {

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The transportable view of a latent payload: one token-aligned matrix per
// layer.  Weighted-embedding payloads travel with the pseudo layer id
// 0xFFFF (they are input-side, not tied to a transformer layer).
struct WirePayload {
  std::vector<std::uint16_t> layer_ids;
  std::vector<Eigen::MatrixXf> rows;  // per layer: n_tokens x d_model
  Dtype dtype = Dtype::f32;
};

constexpr std::uint16_t kCipherLayerId = 0xFFFF;

WirePayload to_wire(const Payload& payload, Dtype dtype = Dtype::f32);
Payload from_wire(const WirePayload& wire, bool raw_states = false);

// Serialization is the identity on f32 payloads; f16 payloads roundtrip
// exactly at the byte level (deserialize then serialize reproduces the
// input bytes).
std::vector<std::uint8_t> serialize(const WirePayload& payload);

// Throws WireError on: short buffers, bad magic, unsupported version,
// unknown dtype tag, checksum mismatch, or a payload whose byte length
// does not match the header's dimensions.
WirePayload deserialize(std::span<const std::uint8_t> bytes);

std::size_t wire_payload_bytes(int n_tokens, int n_layers, int d_model, Dtype dtype);

// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Bytes-on-the-wire comparison for one message: the rendered text versus
// its latent payload in the given storage dtype.
struct OverheadReport {
  std::size_t token_bytes = 0;
  std::size_t latent_bytes = 0;
  double ratio = 0.0;  // latent / token; 0 when there is no latent payload
};

OverheadReport overhead_report(const Message& message, Dtype dtype = Dtype::f32);

}  // namespace sde

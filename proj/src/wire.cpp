// SPDX-License-Identifier: Apache-2.0
#include "sde/wire.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "sde/float16.hpp"

static_assert(std::endian::native == std::endian::little,
              "wire packets are little-endian; big-endian hosts are unsupported");

namespace sde {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'D', 'E', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const std::size_t n = out.size();
  out.resize(n + sizeof(T));
  std::memcpy(out.data() + n, &value, sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& cursor) {
  if (cursor + sizeof(T) > bytes.size()) {
    throw WireError("wire: truncated packet (needed " + std::to_string(sizeof(T)) +
                    " bytes at offset " + std::to_string(cursor) + ")");
  }
  T value;
  std::memcpy(&value, bytes.data() + cursor, sizeof(T));
  cursor += sizeof(T);
  return value;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

std::size_t wire_payload_bytes(int n_tokens, int n_layers, int d_model, Dtype dtype) {
  const std::size_t elem = dtype == Dtype::f32 ? 4 : 2;
  return static_cast<std::size_t>(n_tokens) * static_cast<std::size_t>(n_layers) *
         static_cast<std::size_t>(d_model) * elem;
}

WirePayload to_wire(const Payload& payload, Dtype dtype) {
  WirePayload wire;
  wire.dtype = dtype;
  if (const auto* d = std::get_if<DeltaPayload>(&payload)) {
    for (const DeltaTrajectory& t : d->layers) {
      wire.layer_ids.push_back(static_cast<std::uint16_t>(t.layer));
      wire.rows.push_back(t.deltas);
    }
  } else if (const auto* r = std::get_if<RawStatePayload>(&payload)) {
    for (const RawStateTrajectory& t : r->layers) {
      wire.layer_ids.push_back(static_cast<std::uint16_t>(t.layer));
      wire.rows.push_back(t.states);
    }
  } else if (const auto* c = std::get_if<CipherPayload>(&payload)) {
    wire.layer_ids.push_back(kCipherLayerId);
    wire.rows.push_back(c->embeddings);
  } else {
    throw WireError("wire: token-only messages carry no latent payload");
  }
  return wire;
}

Payload from_wire(const WirePayload& wire, bool raw_states) {
  if (wire.layer_ids.size() == 1 && wire.layer_ids[0] == kCipherLayerId) {
    return CipherPayload{wire.rows[0]};
  }
  if (raw_states) {
    RawStatePayload p;
    for (std::size_t i = 0; i < wire.layer_ids.size(); ++i) {
      p.layers.push_back(RawStateTrajectory{wire.layer_ids[i], wire.rows[i]});
    }
    return p;
  }
  DeltaPayload p;
  for (std::size_t i = 0; i < wire.layer_ids.size(); ++i) {
    p.layers.push_back(DeltaTrajectory{wire.layer_ids[i], wire.rows[i]});
  }
  return p;
}

std::vector<std::uint8_t> serialize(const WirePayload& payload) {
  if (payload.layer_ids.size() != payload.rows.size()) {
    throw WireError("wire: layer id / matrix count mismatch");
  }
  if (payload.rows.empty()) {
    throw WireError("wire: payload has no layers");
  }
  const Eigen::Index n_tokens = payload.rows.front().rows();
  const Eigen::Index d_model = payload.rows.front().cols();
  for (const Eigen::MatrixXf& m : payload.rows) {
    if (m.rows() != n_tokens || m.cols() != d_model) {
      throw WireError("wire: per-layer matrices disagree on shape");
    }
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, kVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(payload.layer_ids.size()));
  for (std::uint16_t id : payload.layer_ids) {
    put<std::uint16_t>(out, id);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n_tokens));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(d_model));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(payload.dtype));
  put<std::uint32_t>(out, crc32(out));

  // Payload: layer-major, token-minor.
  for (const Eigen::MatrixXf& m : payload.rows) {
    for (Eigen::Index t = 0; t < n_tokens; ++t) {
      for (Eigen::Index c = 0; c < d_model; ++c) {
        if (payload.dtype == Dtype::f32) {
          put<float>(out, m(t, c));
        } else {
          put<std::uint16_t>(out, f32_to_f16(m(t, c)));
        }
      }
    }
  }
  return out;
}

WirePayload deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t cursor = 0;
  for (std::uint8_t expected : kMagic) {
    if (take<std::uint8_t>(bytes, cursor) != expected) {
      throw WireError("wire: bad magic");
    }
  }
  const auto version = take<std::uint16_t>(bytes, cursor);
  if (version != kVersion) {
    throw WireError("wire: unsupported version " + std::to_string(version));
  }
  const auto layer_count = take<std::uint16_t>(bytes, cursor);
  if (layer_count == 0) {
    throw WireError("wire: zero layers");
  }
  std::vector<std::uint16_t> layer_ids(layer_count);
  for (auto& id : layer_ids) {
    id = take<std::uint16_t>(bytes, cursor);
  }
  const auto n_tokens = take<std::uint32_t>(bytes, cursor);
  const auto d_model = take<std::uint32_t>(bytes, cursor);
  const auto dtype_tag = take<std::uint8_t>(bytes, cursor);
  if (dtype_tag > 1) {
    throw WireError("wire: unknown dtype tag " + std::to_string(dtype_tag));
  }
  const Dtype dtype = static_cast<Dtype>(dtype_tag);
  const std::uint32_t declared_crc = [&] {
    const std::uint32_t expected = crc32(bytes.subspan(0, cursor));
    const auto stored = take<std::uint32_t>(bytes, cursor);
    if (stored != expected) {
      throw WireError("wire: header checksum mismatch");
    }
    return stored;
  }();
  (void)declared_crc;

  const std::size_t expect =
      wire_payload_bytes(static_cast<int>(n_tokens), layer_count, static_cast<int>(d_model),
                         dtype);
  if (bytes.size() - cursor != expect) {
    throw WireError("wire: payload holds " + std::to_string(bytes.size() - cursor) +
                    " bytes, header requires " + std::to_string(expect));
  }

  WirePayload payload;
  payload.layer_ids = std::move(layer_ids);
  payload.dtype = dtype;
  for (std::uint16_t i = 0; i < layer_count; ++i) {
    Eigen::MatrixXf m(n_tokens, d_model);
    for (std::uint32_t t = 0; t < n_tokens; ++t) {
      for (std::uint32_t c = 0; c < d_model; ++c) {
        if (dtype == Dtype::f32) {
          m(t, c) = take<float>(bytes, cursor);
        } else {
          m(t, c) = f16_to_f32(take<std::uint16_t>(bytes, cursor));
        }
      }
    }
    payload.rows.push_back(std::move(m));
  }
  return payload;
}

OverheadReport overhead_report(const Message& message, Dtype dtype) {
  OverheadReport report;
  report.token_bytes = message.text.size();
  const int rows = payload_rows(message.payload);
  if (rows > 0) {
    if (const auto* c = std::get_if<CipherPayload>(&message.payload)) {
      report.latent_bytes =
          wire_payload_bytes(rows, 1, static_cast<int>(c->embeddings.cols()), dtype);
    } else {
      const std::vector<int> layers = payload_layers(message.payload);
      int d = 0;
      if (const auto* dp = std::get_if<DeltaPayload>(&message.payload)) {
        d = static_cast<int>(dp->layers.front().deltas.cols());
      } else if (const auto* rp = std::get_if<RawStatePayload>(&message.payload)) {
        d = static_cast<int>(rp->layers.front().states.cols());
      }
      report.latent_bytes = wire_payload_bytes(rows, static_cast<int>(layers.size()), d, dtype);
    }
  }
  if (report.token_bytes > 0 && report.latent_bytes > 0) {
    report.ratio =
        static_cast<double>(report.latent_bytes) / static_cast<double>(report.token_bytes);
  }
  return report;
}

}  // namespace sde

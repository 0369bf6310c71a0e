// SPDX-License-Identifier: Apache-2.0
#include "sde/archive.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "sde/float16.hpp"

static_assert(std::endian::native == std::endian::little,
              "archives are little-endian; big-endian hosts are unsupported");

namespace sde {

namespace {

constexpr char kMagic[] = "sdtc1";

const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f16"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") {
    return Dtype::f32;
  }
  if (s == "f16") {
    return Dtype::f16;
  }
  throw ArchiveError("archive: unknown dtype tag '" + s + "'");
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 2; }

void append_tensor_payload(std::string& out, const Eigen::Map<const Eigen::MatrixXf>& m,
                           Dtype dtype) {
  // Row-major payload regardless of in-memory layout.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = m(r, c);
      if (dtype == Dtype::f32) {
        char buf[4];
        std::memcpy(buf, &v, 4);
        out.append(buf, 4);
      } else {
        const std::uint16_t h = f32_to_f16(v);
        char buf[2];
        std::memcpy(buf, &h, 2);
        out.append(buf, 2);
      }
    }
  }
}

struct TensorEntry {
  std::string name;
  Dtype dtype = Dtype::f32;
  Eigen::Index rows = 0, cols = 0;
  std::size_t offset = 0;
};

}  // namespace

void save_model(const Model& model, const std::string& path) {
  const ModelConfig& cfg = model.config();
  std::ostringstream header;
  header << kMagic << ' ' << cfg.n_layers << ' ' << cfg.d_model << ' ' << cfg.n_heads << ' '
         << cfg.vocab_size << ' ' << cfg.max_seq << ' ' << dtype_name(cfg.dtype) << ' '
         << std::bit_cast<std::uint32_t>(cfg.norm_eps) << '\n';

  std::string payload;
  for (const Model::ConstTensorView& t : model.tensors()) {
    header << "tensor " << t.name << ' ' << dtype_name(cfg.dtype) << ' ' << t.value.rows() << 'x'
           << t.value.cols() << ' ' << payload.size() << '\n';
    append_tensor_payload(payload, t.value, cfg.dtype);
  }

  const std::string head = header.str();
  const std::uint64_t head_len = head.size();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw ArchiveError("archive: cannot open for writing: " + tmp);
    }
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
      throw ArchiveError("archive: write failed: " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ArchiveError("archive: cannot open: " + path);
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(std::uint64_t)) {
    throw ArchiveError("archive: file shorter than the header length field");
  }
  std::uint64_t head_len = 0;
  std::memcpy(&head_len, bytes.data(), sizeof(head_len));
  if (sizeof(head_len) + head_len > bytes.size()) {
    throw ArchiveError("archive: truncated header (declared " + std::to_string(head_len) +
                       " bytes)");
  }
  const std::string head = bytes.substr(sizeof(head_len), head_len);
  const std::size_t payload_start = sizeof(head_len) + head_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  std::istringstream hs(head);
  std::string magic;
  hs >> magic;
  if (magic != kMagic) {
    throw ArchiveError("archive: bad magic '" + magic + "'");
  }
  ModelConfig cfg;
  std::string dtype_str;
  std::uint32_t eps_bits = 0;
  hs >> cfg.n_layers >> cfg.d_model >> cfg.n_heads >> cfg.vocab_size >> cfg.max_seq >>
      dtype_str >> eps_bits;
  if (!hs) {
    throw ArchiveError("archive: malformed config line");
  }
  cfg.dtype = parse_dtype(dtype_str);
  cfg.norm_eps = std::bit_cast<float>(eps_bits);
  cfg.validate();

  std::vector<TensorEntry> entries;
  std::string word;
  while (hs >> word) {
    if (word != "tensor") {
      throw ArchiveError("archive: unexpected header token '" + word + "'");
    }
    TensorEntry e;
    std::string dt, shape;
    hs >> e.name >> dt >> shape >> e.offset;
    if (!hs) {
      throw ArchiveError("archive: malformed tensor line for '" + e.name + "'");
    }
    e.dtype = parse_dtype(dt);
    const std::size_t x = shape.find('x');
    if (x == std::string::npos) {
      throw ArchiveError("archive: malformed shape '" + shape + "' for tensor '" + e.name + "'");
    }
    e.rows = std::stoll(shape.substr(0, x));
    e.cols = std::stoll(shape.substr(x + 1));
    entries.push_back(std::move(e));
  }

  // Size the model from the config, then fill each tensor by name.
  Model model = Model::zeros(cfg);
  std::size_t filled = 0;
  for (Model::TensorView& t : model.tensors()) {
    const TensorEntry* entry = nullptr;
    for (const TensorEntry& e : entries) {
      if (e.name == t.name) {
        entry = &e;
        break;
      }
    }
    if (entry == nullptr) {
      throw ArchiveError("archive: missing tensor '" + t.name + "'");
    }
    if (entry->rows != t.value.rows() || entry->cols != t.value.cols()) {
      throw ArchiveError("archive: shape mismatch for tensor '" + t.name + "': declared " +
                         std::to_string(entry->rows) + "x" + std::to_string(entry->cols) +
                         ", config requires " + std::to_string(t.value.rows()) + "x" +
                         std::to_string(t.value.cols()));
    }
    const std::size_t elem = dtype_size(entry->dtype);
    const std::size_t need = static_cast<std::size_t>(t.value.size()) * elem;
    if (entry->offset + need > payload_size) {
      throw ArchiveError("archive: truncated payload for tensor '" + t.name + "'");
    }
    const char* src = bytes.data() + payload_start + entry->offset;
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        const std::size_t i = static_cast<std::size_t>(r * t.value.cols() + c);
        if (entry->dtype == Dtype::f32) {
          float v = 0.0f;
          std::memcpy(&v, src + i * 4, 4);
          t.value(r, c) = v;
        } else {
          std::uint16_t h = 0;
          std::memcpy(&h, src + i * 2, 2);
          t.value(r, c) = f16_to_f32(h);
        }
      }
    }
    ++filled;
  }
  if (filled != entries.size()) {
    throw ArchiveError("archive: header declares " + std::to_string(entries.size()) +
                       " tensors, model needs " + std::to_string(filled));
  }
  return model;
}

}  // namespace sde

#pragma once

// Text checkpoint. Layout (docs/checkpoint.md):
//
//   cjpe-checkpoint 1
//   meta <key> <value>            (repeated)
//   tensor <name> <rows> <cols>   (then `rows` lines of `cols` values)
//   end
//
// Values are printed with %.17g so a save/load round trip is exact.

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "cjpe/embedder.hpp"
#include "cjpe/error.hpp"
#include "cjpe/segmenter.hpp"
#include "cjpe/sequence_head.hpp"

namespace cjpe {

inline constexpr const char* kCheckpointMagic = "cjpe-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a trained pipeline.
struct ModelBundle {
  std::size_t embed_dim = 256;
  std::uint64_t hash_seed = 13;
  std::uint64_t seed = 7;
  // "builtin" or "bridge"; a bridge-trained head needs the same bridge back.
  std::string embedder = "builtin";
  ChunkConfig chunk;
  SequenceHead head;
  std::optional<ChunkHead> chunk_head;

  HashingEmbedder make_embedder() const {
    HashingEmbedder e(embed_dim, hash_seed);
    if (chunk_head) e.set_chunk_head(*chunk_head);
    return e;
  }
};

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, std::size_t rows, std::size_t cols,
                         const double* values) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  char buf[40];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", values[r * cols + c]);
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

[[noreturn]] inline void bad_checkpoint(const std::string& what) { throw Error(ErrorCode::Checkpoint, what); }

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ModelBundle& m) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "meta embed_dim " << m.embed_dim << '\n';
  out << "meta hash_seed " << m.hash_seed << '\n';
  out << "meta seed " << m.seed << '\n';
  out << "meta embedder " << m.embedder << '\n';
  out << "meta chunk_size " << m.chunk.chunk_size << '\n';
  out << "meta overlap " << m.chunk.overlap << '\n';
  out << "meta hidden " << m.head.hidden() << '\n';
  out << "meta attention " << (m.head.use_attention() ? 1 : 0) << '\n';
  out << "meta chunk_head " << (m.chunk_head ? 1 : 0) << '\n';
  for (const auto& s : m.head.layout())
    detail::write_tensor(out, "head." + s.name, s.rows, s.cols, m.head.params().data() + s.offset);
  if (m.chunk_head) {
    detail::write_tensor(out, "chunk_head.W", 2, m.chunk_head->weights.cols, m.chunk_head->weights.data.data());
    detail::write_tensor(out, "chunk_head.b", 1, 2, m.chunk_head->bias.data());
  }
  out << "end\n";
}

inline ModelBundle load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) detail::bad_checkpoint("not a cjpe checkpoint");
  if (version != kCheckpointVersion) detail::bad_checkpoint("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, std::string> meta;
  std::map<std::string, std::pair<std::pair<std::size_t, std::size_t>, std::vector<double>>> tensors;
  std::string word;
  bool ended = false;
  while (in >> word) {
    if (word == "meta") {
      std::string k, v;
      if (!(in >> k >> v)) detail::bad_checkpoint("truncated meta line");
      meta[k] = v;
    } else if (word == "tensor") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      if (!(in >> name >> rows >> cols)) detail::bad_checkpoint("truncated tensor header");
      std::vector<double> values(rows * cols);
      for (double& v : values) {
        std::string tok;
        if (!(in >> tok)) detail::bad_checkpoint("truncated tensor " + name);
        try {
          v = std::stod(tok);
        } catch (const std::exception&) {
          detail::bad_checkpoint("bad value in tensor " + name);
        }
        if (!std::isfinite(v)) detail::bad_checkpoint("non-finite value in tensor " + name);
      }
      tensors[name] = {{rows, cols}, std::move(values)};
    } else if (word == "end") {
      ended = true;
      break;
    } else {
      detail::bad_checkpoint("unexpected token '" + word + "'");
    }
  }
  if (!ended) detail::bad_checkpoint("missing end marker");

  auto get = [&](const char* key) -> std::uint64_t {
    auto it = meta.find(key);
    if (it == meta.end()) detail::bad_checkpoint(std::string("missing meta ") + key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      detail::bad_checkpoint(std::string("bad meta ") + key);
    }
  };
  ModelBundle m;
  m.embed_dim = get("embed_dim");
  m.hash_seed = get("hash_seed");
  m.seed = get("seed");
  if (auto it = meta.find("embedder"); it != meta.end()) {
    if (it->second != "builtin" && it->second != "bridge") detail::bad_checkpoint("unknown embedder " + it->second);
    m.embedder = it->second;
  }
  m.chunk.chunk_size = get("chunk_size");
  m.chunk.overlap = get("overlap");
  try {
    m.chunk.validate();
    m.head = SequenceHead(m.embed_dim, get("hidden"), get("attention") != 0);
  } catch (const Error& e) {
    detail::bad_checkpoint(e.what());
  }
  for (const auto& s : m.head.layout()) {
    auto it = tensors.find("head." + s.name);
    if (it == tensors.end()) detail::bad_checkpoint("missing tensor head." + s.name);
    if (it->second.first != std::make_pair(s.rows, s.cols)) detail::bad_checkpoint("shape mismatch for head." + s.name);
    std::copy(it->second.second.begin(), it->second.second.end(), m.head.params().begin() + s.offset);
  }
  if (get("chunk_head")) {
    auto w = tensors.find("chunk_head.W");
    auto b = tensors.find("chunk_head.b");
    if (w == tensors.end() || b == tensors.end()) detail::bad_checkpoint("missing chunk head tensors");
    if (w->second.first != std::make_pair(std::size_t{2}, m.embed_dim) ||
        b->second.first != std::make_pair(std::size_t{1}, std::size_t{2}))
      detail::bad_checkpoint("chunk head shape mismatch");
    ChunkHead ch;
    ch.weights = Matrix(2, m.embed_dim);
    ch.weights.data = w->second.second;
    ch.bias = {b->second.second[0], b->second.second[1]};
    m.chunk_head = std::move(ch);
  }
  return m;
}

}  // namespace cjpe

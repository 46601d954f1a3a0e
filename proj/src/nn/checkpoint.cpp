#include "mash/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace mash::nn {
namespace {

constexpr std::array<char, 5> kMagic{'M', 'A', 'S', 'H', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFFu), static_cast<char>((v >> 8) & 0xFFu),
                              static_cast<char>((v >> 16) & 0xFFu), static_cast<char>((v >> 24) & 0xFFu)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) {
    throw StructuralError("checkpoint: truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) {
    throw StructuralError("checkpoint: truncated string");
  }
  return s;
}

}  // namespace

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) {
      return t;
    }
  }
  throw StructuralError("checkpoint: missing tensor '" + name + "'");
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) {
    throw StructuralError("checkpoint: missing metadata '" + key + "'");
  }
  return it->second;
}

std::string Checkpoint::section() const {
  auto it = metadata.find("section");
  return it == metadata.end() ? std::string{} : it->second;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    std::size_t expected = 1;
    for (auto d : t.dims) {
      expected *= d;
    }
    if (expected != t.values.size()) {
      throw StructuralError("checkpoint: tensor '" + t.name + "' dims do not match value count");
    }
    put_string(out, t.name);
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) {
      put_u32(out, d);
    }
    for (float v : t.values) {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  if (!out) {
    throw StructuralError("checkpoint: write failed");
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 5> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw StructuralError("checkpoint: bad magic");
  }
  const int version = in.get();
  if (version != kCheckpointVersion) {
    throw StructuralError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t count = get_u32(in);
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_string(in);
    const std::uint32_t rank = get_u32(in);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get_u32(in));
      n *= t.dims.back();
    }
    t.values.resize(n);
    for (auto& v : t.values) {
      v = std::bit_cast<float>(get_u32(in));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  // Containers written without a metadata block end here.
  if (in.peek() == std::char_traits<char>::eof()) {
    return ckpt;
  }
  const std::uint32_t n_meta = get_u32(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(in);
    ckpt.metadata[k] = get_string(in);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path.string());
  }
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint: " + path.string());
  }
  return read_checkpoint(in);
}

NamedTensor to_named(const Parameter<float>& p) {
  return {p.name, {static_cast<std::uint32_t>(p.values.rows), static_cast<std::uint32_t>(p.values.cols)},
          p.values.data};
}

void assign(Parameter<float>& p, const NamedTensor& t) {
  if (t.dims.size() != 2 || t.dims[0] != p.values.rows || t.dims[1] != p.values.cols) {
    throw StructuralError("checkpoint: shape mismatch for '" + p.name + "'");
  }
  p.values.data = t.values;
  p.grad = Matrix<float>(p.values.rows, p.values.cols);
}

}  // namespace mash::nn

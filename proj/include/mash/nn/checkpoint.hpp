#pragma once

// "MASH1" binary container.
//
//   magic "MASH1" | version u8 | count u32 | count x tensor | metadata
//   tensor   = name_len u32 | name bytes | rank u32 | dims u32[rank] | values f32[prod(dims)]
//   metadata = n u32 | n x (key_len u32 | key | value_len u32 | value)
//
// All integers and floats are little-endian. The metadata block carries the
// section tag ("section") and any architecture/vocabulary strings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mash/nn/tensor.hpp"

namespace mash::nn {

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> metadata;

  [[nodiscard]] const NamedTensor& tensor(const std::string& name) const;
  [[nodiscard]] const std::string& meta(const std::string& key) const;
  [[nodiscard]] std::string section() const;

  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

NamedTensor to_named(const Parameter<float>& p);
/// Copies values into p; shapes must agree.
void assign(Parameter<float>& p, const NamedTensor& t);

}  // namespace mash::nn

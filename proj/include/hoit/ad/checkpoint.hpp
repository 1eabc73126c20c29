#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hoit/ad/tensor.hpp"

namespace hoit::ad {

// Flat container of named arrays plus a free-form metadata string.
//
// Layout (all integers and doubles little-endian):
//   "HOITCKPT"  u32 version  u32 meta_len  meta bytes  u64 count
//   count x { u32 name_len  name  u32 rank  u64 dims[rank]  f64 data[prod(dims)] }
// Entries are written in lexicographic name order, so identical contents
// always produce identical bytes.
struct ParameterFile {
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    Shape shape;
    std::vector<double> values;
  };

  std::string metadata;
  std::map<std::string, Entry> entries;

  void put(const std::string& name, const Tensor& tensor);
  void put(const std::string& name, Shape shape, std::vector<double> values);
  const Entry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries.count(name) != 0; }
};

std::string serialize(const ParameterFile& file);
// Throws InputError on a bad magic, unsupported version or truncation.
ParameterFile deserialize(const std::string& bytes);

void save_parameter_file(const std::filesystem::path& path, const ParameterFile& file);
ParameterFile load_parameter_file(const std::filesystem::path& path);

}  // namespace hoit::ad

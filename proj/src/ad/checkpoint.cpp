#include "hoit/ad/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hoit/errors.hpp"

namespace hoit::ad {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'I', 'T', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(std::begin(raw), std::end(raw));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void ParameterFile::put(const std::string& name, const Tensor& tensor) {
  put(name, tensor.shape(), {tensor.values().begin(), tensor.values().end()});
}

void ParameterFile::put(const std::string& name, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("checkpoint entry " + name + ": shape " + to_string(shape) +
                     " vs " + std::to_string(values.size()) + " values");
  }
  entries[name] = Entry{std::move(shape), std::move(values)};
}

const ParameterFile::Entry& ParameterFile::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw InputError("checkpoint: missing entry " + name);
  return it->second;
}

std::string serialize(const ParameterFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, ParameterFile::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.metadata.size()));
  out += file.metadata;
  put_le<std::uint64_t>(out, file.entries.size());
  for (const auto& [name, entry] : file.entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entry.shape.size()));
    for (std::size_t d : entry.shape) put_le<std::uint64_t>(out, d);
    for (double v : entry.values) put_le<double>(out, v);
  }
  return out;
}

ParameterFile deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw InputError("checkpoint: bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != ParameterFile::kVersion) {
    throw InputError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ParameterFile file;
  file.metadata = in.get_string(in.get<std::uint32_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = in.get<double>();
    file.entries.emplace(std::move(name), ParameterFile::Entry{std::move(shape), std::move(values)});
  }
  if (!in.done()) throw InputError("checkpoint: trailing bytes");
  return file;
}

void save_parameter_file(const std::filesystem::path& path, const ParameterFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("checkpoint: write failed for " + path.string());
}

ParameterFile load_parameter_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace hoit::ad

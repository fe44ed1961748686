#include "bleg/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "bleg/error.hpp"

namespace bleg::numerics {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'L', 'E', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* bytes = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) put<std::uint64_t>(out, d);
    for (double v : t.value.data()) put<double>(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::span<const char> bytes) {
  Reader reader(bytes);
  if (reader.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const auto version = reader.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = reader.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = reader.get_string(reader.get<std::uint32_t>());
    const auto rank = reader.get<std::uint32_t>();
    Tensor::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(reader.get<std::uint64_t>());
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = reader.get<double>();
    t.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (!reader.done()) throw FormatError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> collect_parameters(std::span<const ParameterSet* const> sets) {
  std::vector<NamedTensor> out;
  for (const auto* set : sets) {
    for (const auto* p : set->all()) out.push_back({p->name, p->value});
  }
  return out;
}

void restore_parameters(std::span<ParameterSet* const> sets, std::span<const NamedTensor> tensors) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t.value);
  for (auto* set : sets) {
    for (auto* p : set->all()) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw StateError("checkpoint is missing parameter '" + p->name + "'");
      if (!it->second->same_shape(p->value)) {
        throw StateError("checkpoint shape mismatch for '" + p->name + "': " + it->second->shape_string() +
                         " vs " + p->value.shape_string());
      }
      p->value = *it->second;
    }
  }
}

}  // namespace bleg::numerics

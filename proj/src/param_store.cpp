#include "zsad/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace zsad {

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (params_.count(name)) throw Error("duplicate parameter: " + name);
  params_.emplace(name, Parameter{std::move(value), trainable});
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.value;
}

Tensor& ParamStore::mutable_value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.trainable;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  it->second.trainable = trainable;
}

std::size_t ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  std::size_t n = 0;
  for (auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) {
      p.trainable = trainable;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (p.trainable) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::value_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

bool ParamStore::identical(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.value.identical(b->second.value)) return false;
  }
  return true;
}

namespace {

constexpr char kMagic[8] = {'Z', 'S', 'A', 'D', 'C', 'K', 'P', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw Error("truncated checkpoint: " + path_.string());
    return to_little(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) throw Error("corrupt checkpoint string length: " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw Error("truncated checkpoint: " + path_.string());
    return s;
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const Metadata& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  Writer w(out);
  w.put(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put(static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [name, p] : params.entries()) {
    w.put_string(name);
    w.put(static_cast<std::uint8_t>(p.trainable ? 1 : 0));
    w.put(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put(static_cast<std::uint64_t>(d));
    for (double v : p.value.data()) w.put(v);
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a checkpoint file: " + path.string());
  }
  Reader r(in, path);
  Checkpoint ck;
  const auto meta_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    auto key = r.get_string();
    ck.metadata[key] = r.get_string();
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.get_string();
    const bool trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw Error("corrupt checkpoint rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.get<double>();
    ck.params.add(name, Tensor(std::move(shape), std::move(values)), trainable);
  }
  return ck;
}

}  // namespace zsad

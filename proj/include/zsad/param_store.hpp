#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "zsad/tensor.hpp"

namespace zsad {

struct Parameter {
  Tensor value;
  bool trainable = true;
};

/// Named model parameters plus the trainable mask.
///
/// Names are dotted paths ("proj.block0.up.weight"); iteration order is the
/// lexicographic name order so checkpoints and optimizer sweeps are stable.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor& value(const std::string& name) const;
  Tensor& mutable_value(const std::string& name);
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);
  /// Sets the flag on every parameter whose name starts with prefix; returns how many matched.
  std::size_t set_trainable_prefix(const std::string& prefix, bool trainable);

  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t value_count() const;

  /// True when both stores hold the same names with bit-identical values.
  bool identical(const ParamStore& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  ParamStore params;
  Metadata metadata;
};

// Binary checkpoint layout (all integers and doubles little-endian):
//   magic "ZSADCKP1"
//   u32 metadata_count, then per entry: u32 len, key bytes, u32 len, value bytes
//   u32 tensor_count, then per tensor (in name order):
//     u32 name_len, name bytes, u8 trainable, u32 rank, u64 dims[rank],
//     f64 values[product(dims)]
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const Metadata& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace zsad

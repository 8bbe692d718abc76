#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "path_engine/param_store.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

/// Named parameter values and batch-norm buffers of a (possibly multi-worker)
/// model, plus free-form JSON metadata.
struct Checkpoint {
  std::map<std::string, Tensor> params;
  std::map<std::string, ops::BatchNormState> batch_norms;
  std::string metadata = "{}";
};

/// Adds every entry of `store` not already present.
void merge_into(Checkpoint& ckpt, const ParamStore& store);
Checkpoint snapshot(const ParamStore& store);
/// Copies matching entries into `store`; entries absent from the checkpoint
/// are left untouched and returned.
std::vector<std::string> restore(ParamStore& store, const Checkpoint& ckpt);

/// Names whose values differ bitwise, or that exist on one side only.
std::vector<std::string> diff_names(const Checkpoint& a, const Checkpoint& b);

/// Binary layout (little-endian):
///   "PATHCKPT" u32 version
///   u64 metadata_bytes, metadata
///   u64 n_params, then per entry: u32 name_len, name, u32 ndim, i64 dims[ndim], f32 values[numel]
///   u64 n_batch_norms, then per entry: u32 name_len, name, i64 channels, f32 mean[c], f32 var[c],
///   f32 momentum, f32 eps
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace path_engine

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "path_engine/random.hpp"
#include "path_engine/task.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

enum class Split { Pretrain, InEval, OutEval };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct DataConfig {
  std::int64_t height = 32;
  std::int64_t width = 32;
  /// Identities (reid), keypoints (pose), classes incl. background (parsing),
  /// attributes, object classes (detection). Unused for counting.
  std::int64_t num_classes = 0;
  std::int64_t max_objects = 3;
  std::int64_t max_blobs = 6;

  void validate(TaskFamily family) const;
  bool operator==(const DataConfig&) const = default;
};

/// Label arity used when DataConfig::num_classes is 0.
std::int64_t default_num_classes(TaskFamily family);
/// Upper bound on num_classes for the procedural renderer.
std::int64_t max_num_classes(TaskFamily family);

struct Sample {
  Tensor image;  // [3, H, W]
  int id = -1;
  std::vector<Keypoint> keypoints;  // heatmap pixel coordinates
  Tensor heatmap;                   // [K, H/4, W/4]
  std::vector<int> pixel_labels;    // H*W row-major
  std::vector<real> attributes;
  std::vector<Box> boxes;
  std::vector<int> box_labels;
  Tensor density;  // [1, H/4, W/4]
  double count = 0.0;
};

struct SyntheticDataset {
  TaskFamily family = TaskFamily::ReID;
  std::uint64_t seed = 0;
  Split split = Split::Pretrain;
  DataConfig config;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  Batch collate(const std::vector<std::size_t>& indices) const;
};

/// Renders samples [first_index, first_index + n) of the stream (family, seed).
/// The seed also fixes a dataset style (background tint, noise level), so two
/// seeds of one family look like two related datasets.
SyntheticDataset generate(TaskFamily family, std::uint64_t seed, std::int64_t n, const DataConfig& config = {},
                          std::int64_t first_index = 0, Split split = Split::Pretrain);

/// Draws training batches; reid batches hold exactly `per_identity`
/// images of each sampled identity so every anchor has a positive.
class BatchSampler {
 public:
  BatchSampler(const SyntheticDataset& data, std::uint64_t seed, std::int64_t per_identity = 2);
  Batch next(std::int64_t batch_size);
  std::vector<std::size_t> next_indices(std::int64_t batch_size);

 private:
  const SyntheticDataset* data_;
  Rng rng_;
  std::int64_t per_identity_;
  std::map<int, std::vector<std::size_t>> by_id_;
  std::vector<int> ids_;
};

using HashCode = std::uint64_t;

/// Difference hash: grayscale, area-resize to 9 wide x 8 high, bit r*8+c set
/// iff pixel(r, c) < pixel(r, c + 1).
HashCode dhash(const Tensor& image);
int hamming(HashCode a, HashCode b);

struct DedupResult {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
};

/// Pretraining images whose code equals some evaluation code are removed.
DedupResult dedup(const std::vector<HashCode>& pretrain, const std::vector<HashCode>& eval);
DedupResult dedup(const SyntheticDataset& pretrain, const SyntheticDataset& eval);
/// Keeps only the samples listed in `kept`.
SyntheticDataset select(const SyntheticDataset& data, const std::vector<std::size_t>& kept);

/// First frame of every block of `stride` consecutive frames.
std::vector<std::size_t> temporal_subsample(std::size_t frames, std::size_t stride = 8);

/// Identities whose image count lies in [lo, hi].
std::set<std::string> identity_filter(const std::map<std::string, std::int64_t>& counts, std::int64_t lo = 15,
                                      std::int64_t hi = 200);

/// Layout written by export_dataset:
///   manifest.json            family, seed, split, count, image geometry, dtype, per-family label files
///   images/NNNNNN.f32        raw little-endian float32, CHW
///   labels.jsonl             one JSON object per sample, in index order
///   heatmaps/NNNNNN.f32      pose only, [K, H/4, W/4]
///   masks/NNNNNN.u8          parsing only, H*W class ids
///   density/NNNNNN.f32       counting only, [1, H/4, W/4]
void export_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace path_engine

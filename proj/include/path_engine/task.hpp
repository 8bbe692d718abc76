#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "path_engine/tensor.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

enum class TaskFamily { ReID, Pose, Parsing, Attribute, Detection, Counting };

std::string to_string(TaskFamily family);
TaskFamily parse_task_family(const std::string& text);
const std::vector<TaskFamily>& all_task_families();

/// Axis-aligned box in normalized image coordinates.
struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const;
  bool operator==(const Box&) const = default;
};

struct Keypoint {
  double x = 0.0, y = 0.0;
  bool operator==(const Keypoint&) const = default;
};

/// A collated mini-batch. Only the label fields of `family` are populated.
struct Batch {
  TaskFamily family = TaskFamily::ReID;
  Tensor images;  // [B, 3, H, W]

  std::vector<int> ids;                              // reid
  Tensor heatmaps;                                   // pose, [B, K, H/4, W/4]
  std::vector<std::vector<Keypoint>> keypoints;      // pose, heatmap pixel coordinates
  std::vector<int> pixel_labels;                     // parsing, B*H*W row-major
  Tensor attributes;                                 // attribute, [B, A] in {0, 1}
  std::vector<std::vector<Box>> boxes;               // detection
  std::vector<std::vector<int>> box_labels;          // detection
  Tensor density;                                    // counting, [B, 1, H/4, W/4]
  std::vector<double> counts;                        // counting

  std::int64_t size() const { return images.ndim() == 4 ? images.dim(0) : 0; }
};

}  // namespace path_engine

#include "path_engine/task.hpp"

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::string to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::ReID: return "reid";
    case TaskFamily::Pose: return "pose";
    case TaskFamily::Parsing: return "parsing";
    case TaskFamily::Attribute: return "attribute";
    case TaskFamily::Detection: return "detection";
    case TaskFamily::Counting: return "counting";
  }
  return "?";
}

TaskFamily parse_task_family(const std::string& text) {
  for (auto f : all_task_families())
    if (to_string(f) == text) return f;
  throw ConfigError("unknown task family '" + text + "'");
}

const std::vector<TaskFamily>& all_task_families() {
  static const std::vector<TaskFamily> families{TaskFamily::ReID,      TaskFamily::Pose,      TaskFamily::Parsing,
                                                TaskFamily::Attribute, TaskFamily::Detection, TaskFamily::Counting};
  return families;
}

bool Box::valid() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  return x_min <= x_max && y_min <= y_max && in01(x_min) && in01(y_min) && in01(x_max) && in01(y_max);
}

}  // namespace path_engine

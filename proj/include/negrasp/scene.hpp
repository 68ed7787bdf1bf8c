#pragma once

#include <map>
#include <string>
#include <vector>

#include "negrasp/vec.hpp"

namespace negrasp {

// Point cloud with per-point object labels. Label 0 is conventionally the
// support surface; every label must have a name entry.
struct SceneCloud {
  std::vector<Vec3> points;
  std::vector<int> object_labels;
  std::map<int, std::string> object_names;

  int size() const { return static_cast<int>(points.size()); }
  bool valid() const;
};

}  // namespace negrasp

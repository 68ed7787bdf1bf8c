#include "negrasp/scene.hpp"

namespace negrasp {

bool SceneCloud::valid() const {
  if (points.empty() || points.size() != object_labels.size()) return false;
  for (int label : object_labels) {
    if (object_names.find(label) == object_names.end()) return false;
  }
  for (const Vec3& p : points) {
    if (!p.allFinite()) return false;
  }
  return true;
}

}  // namespace negrasp

#include "objseg/scene.hpp"

#include "objseg/errors.hpp"

namespace objseg {

Scene Scene::make(std::string id, Image image, std::vector<BinaryMask> masks,
                  std::vector<int> class_ids) {
  Scene s;
  s.id = std::move(id);
  s.image = std::move(image);
  if (!class_ids.empty() && class_ids.size() != masks.size())
    throw InvalidInput("Scene::make: class id count differs from mask count");
  for (size_t i = 0; i < masks.size(); ++i) {
    auto& m = masks[i];
    if (m.height() != s.image.height || m.width() != s.image.width)
      throw InvalidInput("Scene::make: mask shape differs from image in " + s.id);
    if (!m.any()) continue;
    s.boxes.push_back(tight_box(m));
    s.instances.push_back(std::move(m));
    s.class_ids.push_back(class_ids.empty() ? 0 : class_ids[i]);
  }
  return s;
}

void Scene::validate() const {
  if (image.pixels.size() != size_t(image.channels) * image.height * image.width)
    throw InvalidInput("scene " + id + ": image buffer size mismatch");
  if (boxes.size() != instances.size() || class_ids.size() != instances.size())
    throw InvalidInput("scene " + id + ": per-instance arrays differ in length");
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& m = instances[i];
    if (m.height() != image.height || m.width() != image.width)
      throw InvalidInput("scene " + id + ": mask shape mismatch");
    if (!m.any()) throw InvalidInput("scene " + id + ": empty instance mask");
    if (!(tight_box(m) == boxes[i])) throw InvalidInput("scene " + id + ": stale box");
  }
}

}  // namespace objseg

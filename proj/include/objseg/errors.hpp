#pragma once

#include <stdexcept>
#include <string>

namespace objseg {

// Caller supplied something that violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Filesystem or codec failure. `path` names the offending file or directory.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { kMissingImage, kMissingMasks, kUnreadable, kShapeMismatch, kEmpty };

  DatasetError(Kind kind, std::string scene_id, const std::string& what)
      : std::runtime_error(what + " [scene " + scene_id + "]"),
        kind_(kind),
        scene_id_(std::move(scene_id)) {}

  Kind kind() const { return kind_; }
  const std::string& scene_id() const { return scene_id_; }

 private:
  Kind kind_;
  std::string scene_id_;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace objseg

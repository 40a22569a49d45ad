#pragma once

#include <cstdint>
#include <vector>

#include "objseg/geometry.hpp"

namespace objseg {

// Row-major run lengths, alternating background/foreground and starting
// with a (possibly zero) background run.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const BinaryMask& mask);
// Throws InvalidInput if the runs do not sum to height * width.
BinaryMask rle_decode(const Rle& rle);

}  // namespace objseg

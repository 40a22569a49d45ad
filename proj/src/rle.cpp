#include "objseg/rle.hpp"

#include <numeric>

#include "objseg/errors.hpp"

namespace objseg {

Rle rle_encode(const BinaryMask& mask) {
  Rle out{mask.height(), mask.width(), {}};
  uint8_t current = 0;
  uint32_t run = 0;
  for (uint8_t v : mask.data()) {
    if (v != current) {
      out.counts.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  out.counts.push_back(run);
  return out;
}

BinaryMask rle_decode(const Rle& rle) {
  if (rle.height < 0 || rle.width < 0) throw InvalidInput("rle_decode: negative shape");
  const uint64_t total = std::accumulate(rle.counts.begin(), rle.counts.end(), uint64_t{0});
  if (total != uint64_t(rle.height) * uint64_t(rle.width))
    throw InvalidInput("rle_decode: run lengths do not cover the mask");
  BinaryMask mask(rle.height, rle.width);
  auto data = mask.data();
  size_t pos = 0;
  uint8_t value = 0;
  for (uint32_t run : rle.counts) {
    std::fill_n(data.begin() + pos, run, value);
    pos += run;
    value ^= 1;
  }
  return mask;
}

}  // namespace objseg

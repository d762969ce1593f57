#include "cpsgd/bitstream.hpp"

#include <bit>
#include <stdexcept>

namespace cpsgd {

void BitWriter::put(std::uint64_t value, int width) {
  for (int i = 0; i < width; ++i) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if ((value >> i) & 1U) bytes_.back() |= static_cast<std::uint8_t>(1U << (bits_ % 8));
    ++bits_;
  }
}

void BitWriter::put_f32(float value) { put(std::bit_cast<std::uint32_t>(value), 32); }

std::uint64_t BitReader::get(int width) {
  if (pos_ + static_cast<std::size_t>(width) > limit_) throw std::out_of_range("bit stream exhausted");
  std::uint64_t value = 0;
  for (int i = 0; i < width; ++i, ++pos_) {
    if ((bytes_[pos_ / 8] >> (pos_ % 8)) & 1U) value |= std::uint64_t{1} << i;
  }
  return value;
}

float BitReader::get_f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(32))); }

int index_width(int d) {
  int width = 0;
  while ((1LL << width) < d) ++width;
  return width;
}

}  // namespace cpsgd

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cpsgd {

// LSB-first bit packer for compressed wire messages.
class BitWriter {
 public:
  void put(std::uint64_t value, int width);
  void put_f32(float value);

  std::size_t bit_count() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<std::uint8_t>& bytes, std::size_t bit_limit)
      : bytes_(bytes), limit_(bit_limit) {}

  std::uint64_t get(int width);
  float get_f32();
  std::size_t position() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

// ceil(log2(d)), 0 for d <= 1
int index_width(int d);

}  // namespace cpsgd

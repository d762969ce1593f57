#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpsgd/types.hpp"

namespace cpsgd {

enum class CompressorKind { identity, top_k, b_bits };

const char* to_string(CompressorKind kind);

// A compressor C with the relative-error contract
//   E ||C(x)/r - x||^2 <= (1 - phi) ||x||^2.
struct CompressorSpec {
  CompressorKind kind = CompressorKind::identity;
  int k = 0;  // top_k only
  int b = 0;  // b_bits only
  double r = 1.0;
  double phi = 1.0;

  static CompressorSpec identity();
  // Declares (r, phi) = (1, k/d).
  static CompressorSpec top_k(int k, int d);
  // phi is taken from calibrate_b_bits unless given.
  static CompressorSpec b_bits(int b, int d);
  static CompressorSpec b_bits(int b, double phi);

  // r0 = 2 r^2 (1 - phi) + 2 (1 - r)^2, so that E||C(x) - x||^2 <= r0 ||x||^2.
  double r0() const { return 2.0 * r * r * (1.0 - phi) + 2.0 * (1.0 - r) * (1.0 - r); }

  void validate(int d) const;
  std::string label() const;

  nlohmann::json to_json() const;
};

// What one agent puts on the wire in one round. `reconstructed` is the value the
// receivers decode; value fields travel as f32, so it is rounded accordingly.
struct CompressedMessage {
  CompressorKind kind = CompressorKind::identity;
  int dim = 0;
  int k = 0;
  int b = 0;
  std::vector<std::uint8_t> payload;
  std::uint64_t bits = 0;
  Vec reconstructed;
};

// k * (ceil(log2 d) + 32) bits.
CompressedMessage compress_top_k(const Vec& x, int k);

// b_bits quantizer with dither u ~ U[0,1]^d drawn from `rng`.
CompressedMessage compress_b_bits(const Vec& x, int b, std::mt19937_64& rng);
// Same quantizer with an explicit dither vector.
CompressedMessage compress_b_bits(const Vec& x, int b, std::span<const double> dither);

// Passthrough; payload keeps exact doubles, accounted at 32 bits per value.
CompressedMessage compress_identity(const Vec& x);

CompressedMessage compress(const CompressorSpec& spec, const Vec& x, std::mt19937_64& rng);

// Rebuilds the vector from `payload` alone.
Vec decode(const CompressedMessage& message);

// Nominal wire size for one message of dimension d.
std::uint64_t message_bits(const CompressorSpec& spec, int d);

// Scale factor xi = 1 + min(d / 4^(b-1), sqrt(d) / 2^(b-1)).
double b_bits_scale(int d, int b);

// Max over probe directions (equal-magnitude, e_1, then random unit vectors) of
// the Monte Carlo mean of ||C(x)/r - x||^2. Throws ContractViolation when that
// exceeds 1 - phi + 3/sqrt(trials).
double estimate_contraction(const CompressorSpec& spec, int d, int trials, std::mt19937_64& rng,
                            int directions = 20);

// Empirical phi for the b_bits quantizer on dimension d (fixed calibration seed).
double calibrate_b_bits(int b, int d);

}  // namespace cpsgd

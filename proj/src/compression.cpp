#include "cpsgd/compression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "cpsgd/bitstream.hpp"
#include "cpsgd/rng.hpp"

namespace cpsgd {

namespace {

constexpr int kMaxBits = 16;

double b_bits_value(double norm, double scale, bool negative, std::uint64_t level, int b) {
  const double magnitude = (norm / scale) * std::ldexp(static_cast<double>(level), -(b - 1));
  return negative ? -magnitude : magnitude;
}

int level_width(int b) {
  // Levels run 0..2^(b-1) inclusive.
  return index_width((1 << (b - 1)) + 1);
}

double raw_contraction(const CompressorSpec& spec, int d, int trials, std::mt19937_64& rng, int directions) {
  std::vector<Vec> probes;
  probes.push_back(Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))));
  probes.push_back(Vec::Unit(d, 0));
  std::normal_distribution<double> normal;
  while (static_cast<int>(probes.size()) < directions) {
    Vec v(d);
    for (auto& c : v) c = normal(rng);
    const double nv = v.norm();
    if (nv == 0.0) continue;
    probes.push_back(v / nv);
  }
  probes.resize(std::max(1, std::min<int>(directions, static_cast<int>(probes.size()))));

  const bool random = spec.kind == CompressorKind::b_bits;
  const int draws = random ? trials : 1;
  double worst = 0.0;
  for (const auto& x : probes) {
    double acc = 0.0;
    for (int t = 0; t < draws; ++t) {
      const Vec c = compress(spec, x, rng).reconstructed;
      acc += (c / spec.r - x).squaredNorm();
    }
    worst = std::max(worst, acc / draws);
  }
  return worst;
}

}  // namespace

const char* to_string(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::identity: return "identity";
    case CompressorKind::top_k: return "top_k";
    case CompressorKind::b_bits: return "b_bits";
  }
  return "?";
}

CompressorSpec CompressorSpec::identity() { return {}; }

CompressorSpec CompressorSpec::top_k(int k, int d) {
  if (k < 1 || k > d) throw Error(Errc::BadK, "k=" + std::to_string(k) + " outside [1," + std::to_string(d) + "]");
  CompressorSpec s;
  s.kind = CompressorKind::top_k;
  s.k = k;
  s.phi = static_cast<double>(k) / d;
  return s;
}

CompressorSpec CompressorSpec::b_bits(int b, int d) { return b_bits(b, calibrate_b_bits(b, d)); }

CompressorSpec CompressorSpec::b_bits(int b, double phi) {
  CompressorSpec s;
  s.kind = CompressorKind::b_bits;
  s.b = b;
  s.phi = phi;
  s.validate(1);
  return s;
}

void CompressorSpec::validate(int d) const {
  if (!(r > 0.0)) throw Error(Errc::InvalidCompressor, "r must be positive");
  if (!(phi > 0.0 && phi <= 1.0)) throw Error(Errc::InvalidCompressor, "phi must lie in (0,1]");
  switch (kind) {
    case CompressorKind::identity: break;
    case CompressorKind::top_k:
      if (k < 1 || k > d)
        throw Error(Errc::BadK, "k=" + std::to_string(k) + " outside [1," + std::to_string(d) + "]");
      break;
    case CompressorKind::b_bits:
      if (b < 1 || b > kMaxBits) throw Error(Errc::InvalidCompressor, "b must lie in [1,16]");
      break;
  }
}

std::string CompressorSpec::label() const {
  switch (kind) {
    case CompressorKind::identity: return "identity";
    case CompressorKind::top_k: return "top" + std::to_string(k);
    case CompressorKind::b_bits: return std::to_string(b) + "bit";
  }
  return "?";
}

nlohmann::json CompressorSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"r", r}, {"phi", phi}};
  if (kind == CompressorKind::top_k) j["k"] = k;
  if (kind == CompressorKind::b_bits) j["b"] = b;
  return j;
}

CompressedMessage compress_top_k(const Vec& x, int k) {
  const int d = static_cast<int>(x.size());
  if (k < 1 || k > d) throw Error(Errc::BadK, "k=" + std::to_string(k) + " outside [1," + std::to_string(d) + "]");

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  // Larger magnitude first; ties go to the lower index.
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    const double ma = std::abs(x[a]), mb = std::abs(x[b]);
    return ma > mb || (ma == mb && a < b);
  });
  std::sort(order.begin(), order.begin() + k);

  CompressedMessage msg;
  msg.kind = CompressorKind::top_k;
  msg.dim = d;
  msg.k = k;
  msg.reconstructed = Vec::Zero(d);
  BitWriter out;
  const int width = index_width(d);
  for (int s = 0; s < k; ++s) {
    const int i = order[s];
    const float value = static_cast<float>(x[i]);
    out.put(static_cast<std::uint64_t>(i), width);
    out.put_f32(value);
    msg.reconstructed[i] = value;
  }
  msg.bits = out.bit_count();
  msg.payload = out.take();
  return msg;
}

double b_bits_scale(int d, int b) {
  const double levels = std::ldexp(1.0, b - 1);
  return 1.0 + std::min(d / (levels * levels), std::sqrt(static_cast<double>(d)) / levels);
}

CompressedMessage compress_b_bits(const Vec& x, int b, std::span<const double> dither) {
  const int d = static_cast<int>(x.size());
  if (b < 1 || b > kMaxBits) throw Error(Errc::InvalidCompressor, "b must lie in [1,16]");
  if (static_cast<int>(dither.size()) != d) throw Error(Errc::DimensionMismatch, "dither length != d");

  CompressedMessage msg;
  msg.kind = CompressorKind::b_bits;
  msg.dim = d;
  msg.b = b;
  msg.reconstructed = Vec::Zero(d);

  BitWriter out;
  const double norm = x.norm();
  const float wire_norm = static_cast<float>(norm);
  out.put_f32(wire_norm);
  if (norm > 0.0) {
    const double levels = std::ldexp(1.0, b - 1);
    const double scale = b_bits_scale(d, b);
    const int width = level_width(b);
    for (int i = 0; i < d; ++i) {
      const auto level = static_cast<std::uint64_t>(std::floor(levels * std::abs(x[i]) / norm + dither[i]));
      const bool negative = x[i] < 0.0;
      out.put(negative ? 1 : 0, 1);
      out.put(level, width);
      msg.reconstructed[i] = b_bits_value(wire_norm, scale, negative, level, b);
    }
  }
  msg.bits = out.bit_count();
  msg.payload = out.take();
  return msg;
}

CompressedMessage compress_b_bits(const Vec& x, int b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> dither(static_cast<std::size_t>(x.size()));
  for (auto& u : dither) u = uniform(rng);
  return compress_b_bits(x, b, dither);
}

CompressedMessage compress_identity(const Vec& x) {
  CompressedMessage msg;
  msg.kind = CompressorKind::identity;
  msg.dim = static_cast<int>(x.size());
  BitWriter out;
  for (double v : x) out.put(std::bit_cast<std::uint64_t>(v), 64);
  msg.payload = out.take();
  msg.bits = 32ULL * static_cast<std::uint64_t>(x.size());
  msg.reconstructed = x;
  return msg;
}

CompressedMessage compress(const CompressorSpec& spec, const Vec& x, std::mt19937_64& rng) {
  switch (spec.kind) {
    case CompressorKind::identity: return compress_identity(x);
    case CompressorKind::top_k: return compress_top_k(x, spec.k);
    case CompressorKind::b_bits: return compress_b_bits(x, spec.b, rng);
  }
  throw Error(Errc::InvalidCompressor, "unknown compressor kind");
}

Vec decode(const CompressedMessage& msg) {
  const int d = msg.dim;
  Vec out = Vec::Zero(d);
  switch (msg.kind) {
    case CompressorKind::identity: {
      BitReader in(msg.payload, 64ULL * d);
      for (int i = 0; i < d; ++i) out[i] = std::bit_cast<double>(in.get(64));
      break;
    }
    case CompressorKind::top_k: {
      BitReader in(msg.payload, msg.bits);
      const int width = index_width(d);
      for (int s = 0; s < msg.k; ++s) {
        const auto i = static_cast<int>(in.get(width));
        out[i] = in.get_f32();
      }
      break;
    }
    case CompressorKind::b_bits: {
      BitReader in(msg.payload, msg.bits);
      const double norm = in.get_f32();
      if (norm == 0.0) break;
      const double scale = b_bits_scale(d, msg.b);
      const int width = level_width(msg.b);
      for (int i = 0; i < d; ++i) {
        const bool negative = in.get(1) != 0;
        const std::uint64_t level = in.get(width);
        out[i] = b_bits_value(norm, scale, negative, level, msg.b);
      }
      break;
    }
  }
  return out;
}

std::uint64_t message_bits(const CompressorSpec& spec, int d) {
  const auto dd = static_cast<std::uint64_t>(d);
  switch (spec.kind) {
    case CompressorKind::identity: return 32 * dd;
    case CompressorKind::top_k: return static_cast<std::uint64_t>(spec.k) * (32 + index_width(d));
    case CompressorKind::b_bits: return 32 + dd * static_cast<std::uint64_t>(1 + level_width(spec.b));
  }
  return 0;
}

double estimate_contraction(const CompressorSpec& spec, int d, int trials, std::mt19937_64& rng, int directions) {
  if (trials < 100) throw Error(Errc::InvalidCompressor, "estimate_contraction needs at least 100 trials");
  spec.validate(d);
  const double estimate = raw_contraction(spec, d, trials, rng, directions);
  const double bound = 1.0 - spec.phi + 3.0 / std::sqrt(static_cast<double>(trials));
  if (estimate > bound)
    throw Error(Errc::ContractViolation, spec.label() + ": estimate " + std::to_string(estimate) +
                                             " exceeds 1-phi+slack " + std::to_string(bound));
  return estimate;
}

double calibrate_b_bits(int b, int d) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, double> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find({b, d}); it != cache.end()) return it->second;

  CompressorSpec spec;
  spec.kind = CompressorKind::b_bits;
  spec.b = b;
  spec.validate(d);
  auto rng = make_engine(0, Stream::Calibration, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(d));
  const double estimate = raw_contraction(spec, d, 4000, rng, 64);
  if (!(estimate < 1.0))
    throw Error(Errc::InvalidCompressor, "b_bits quantizer is not contractive on d=" + std::to_string(d));
  const double phi = 1.0 - estimate;
  cache.emplace(std::pair{b, d}, phi);
  return phi;
}

}  // namespace cpsgd

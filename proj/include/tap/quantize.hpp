#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tap/core.hpp"

namespace tap::quantize {

/// W x H x D feature tensor; value(w, h, d) indexes row-major with the
/// channel fastest. The S = W*H spatial locations are the region features.
struct FeatureMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<double> values;  // width * height * channels

  double value(std::uint32_t w, std::uint32_t h, std::uint32_t d) const {
    return values[(static_cast<std::size_t>(w) * height + h) * channels + d];
  }
  std::span<const double> location(std::uint32_t s) const {
    return {values.data() + static_cast<std::size_t>(s) * channels, channels};
  }
  std::uint32_t locations() const { return width * height; }
};

void validate_feature_map(const FeatureMap& m);

/// Count-sketch maps: index map h: {0..D-1} -> {0..d-1} and sign map
/// s: {0..D-1} -> {-1,+1}, a pure function of (seed, D, d) drawn from
/// SplitMix64 (see rng.hpp for the constants).
struct SketchParams {
  std::uint32_t input_dim = 0;   // D
  std::uint32_t sketch_dim = 0;  // d
  std::vector<std::uint32_t> index_map;
  std::vector<std::int8_t> sign_map;
  std::uint64_t seed = 0;
};

SketchParams make_sketch_params(std::uint64_t seed, std::uint32_t input_dim,
                                std::uint32_t sketch_dim);

/// Arithmetic mean of a non-empty set of equal-dimension vectors.
std::vector<double> average_pool(std::span<const std::vector<double>> features);

/// out[k] = sum over j with h(j) = k of s(j) * x[j]; linear in x.
std::vector<double> count_sketch(std::span<const double> x,
                                 const SketchParams& params);

enum class ConvMethod {
  kAuto,    // FFT for power-of-two sizes, direct otherwise
  kDirect,  // O(d^2) definition, used as the oracle
  kFft,     // radix-2 FFT, requires power-of-two size
};

/// Circular convolution of two equal-length vectors.
std::vector<double> circular_convolve(std::span<const double> a,
                                      std::span<const double> b,
                                      ConvMethod method = ConvMethod::kAuto);

struct CbpOptions {
  bool normalize = true;  // signed square root then L2 normalization
  ConvMethod method = ConvMethod::kAuto;
};

/// Compact bilinear pooling: sums the self-convolved count sketch of every
/// spatial location. Inner products of two pooled outputs approximate the
/// summed squared linear kernel over all location pairs, the diagonal
/// included. Optional signed-sqrt + L2 post-processing.
std::vector<double> compact_bilinear_pool(const FeatureMap& map,
                                          const SketchParams& params,
                                          const CbpOptions& options = {});

}  // namespace tap::quantize

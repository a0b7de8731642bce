#include "tap/quantize.hpp"

#include <cmath>
#include <complex>

#include "tap/rng.hpp"

namespace tap::quantize {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. Size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle =
        (inverse ? 2.0 : -2.0) * 3.141592653589793238462643383279502884 /
        static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

std::vector<double> convolve_direct(std::span<const double> a,
                                    std::span<const double> b) {
  const std::size_t d = a.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t m = 0; m < d; ++m) {
      acc += a[m] * b[(k + d - m) % d];
    }
    out[k] = acc;
  }
  return out;
}

std::vector<double> convolve_fft(std::span<const double> a,
                                 std::span<const double> b) {
  const std::size_t d = a.size();
  std::vector<std::complex<double>> fa(a.begin(), a.end());
  std::vector<std::complex<double>> fb(b.begin(), b.end());
  fft_radix2(fa, false);
  fft_radix2(fb, false);
  for (std::size_t i = 0; i < d; ++i) fa[i] *= fb[i];
  fft_radix2(fa, true);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = fa[i].real();
  return out;
}

}  // namespace

void validate_feature_map(const FeatureMap& m) {
  if (m.width == 0 || m.height == 0 || m.channels == 0) {
    throw ValidationError("feature map dimensions must all be >= 1");
  }
  if (m.values.size() != static_cast<std::size_t>(m.width) * m.height *
                             m.channels) {
    throw ValidationError("feature map payload size does not match W*H*D");
  }
  for (double v : m.values) {
    if (!std::isfinite(v)) {
      throw ValidationError("feature map contains a non-finite value");
    }
  }
}

SketchParams make_sketch_params(std::uint64_t seed, std::uint32_t input_dim,
                                std::uint32_t sketch_dim) {
  if (input_dim == 0 || sketch_dim == 0) {
    throw ValidationError("sketch dimensions must be >= 1");
  }
  SketchParams p;
  p.input_dim = input_dim;
  p.sketch_dim = sketch_dim;
  p.seed = seed;
  p.index_map.reserve(input_dim);
  p.sign_map.reserve(input_dim);
  SplitMix64 rng(seed_mix(seed, input_dim, sketch_dim));
  for (std::uint32_t j = 0; j < input_dim; ++j) {
    p.index_map.push_back(static_cast<std::uint32_t>(rng.next_below(sketch_dim)));
    p.sign_map.push_back((rng.next() & 1u) ? 1 : -1);
  }
  return p;
}

std::vector<double> average_pool(std::span<const std::vector<double>> features) {
  if (features.empty()) {
    throw ValidationError("average_pool requires a non-empty feature set");
  }
  const std::size_t dim = features.front().size();
  std::vector<double> out(dim, 0.0);
  for (const auto& f : features) {
    if (f.size() != dim) {
      throw ValidationError("average_pool features differ in dimension");
    }
    for (std::size_t j = 0; j < dim; ++j) out[j] += f[j];
  }
  const double n = static_cast<double>(features.size());
  for (double& v : out) v /= n;
  return out;
}

std::vector<double> count_sketch(std::span<const double> x,
                                 const SketchParams& params) {
  if (x.size() != params.input_dim) {
    throw ValidationError("count_sketch input dimension does not match params");
  }
  std::vector<double> out(params.sketch_dim, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[params.index_map[j]] += static_cast<double>(params.sign_map[j]) * x[j];
  }
  return out;
}

std::vector<double> circular_convolve(std::span<const double> a,
                                      std::span<const double> b,
                                      ConvMethod method) {
  if (a.size() != b.size() || a.empty()) {
    throw ValidationError("circular convolution requires equal non-empty sizes");
  }
  switch (method) {
    case ConvMethod::kDirect:
      return convolve_direct(a, b);
    case ConvMethod::kFft:
      if (!is_power_of_two(a.size())) {
        throw ValidationError("FFT convolution requires a power-of-two size");
      }
      return convolve_fft(a, b);
    case ConvMethod::kAuto:
      return is_power_of_two(a.size()) && a.size() >= 32
                 ? convolve_fft(a, b)
                 : convolve_direct(a, b);
  }
  return convolve_direct(a, b);
}

std::vector<double> compact_bilinear_pool(const FeatureMap& map,
                                          const SketchParams& params,
                                          const CbpOptions& options) {
  validate_feature_map(map);
  if (map.channels != params.input_dim) {
    throw ValidationError("feature map channels do not match sketch params");
  }
  if (params.sketch_dim < 2) {
    throw ValidationError("compact bilinear pooling requires sketch dim >= 2");
  }
  std::vector<double> pooled(params.sketch_dim, 0.0);
  for (std::uint32_t s = 0; s < map.locations(); ++s) {
    const std::vector<double> sk = count_sketch(map.location(s), params);
    const std::vector<double> conv = circular_convolve(sk, sk, options.method);
    for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += conv[k];
  }
  if (options.normalize) {
    for (double& v : pooled) {
      v = v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v);
    }
    double norm = 0.0;
    for (double v : pooled) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : pooled) v /= norm;
    }
  }
  return pooled;
}

}  // namespace tap::quantize

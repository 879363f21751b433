#include "transface/fourier.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "transface/tensor.hpp"

namespace transface::fourier {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddles are evaluated directly rather than by recurrence to keep the
// transform within ~1e-15 of the definitional sum.
std::vector<Complex> twiddles(std::size_t n, double sign) {
  std::vector<Complex> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

// In-place 1D transform of `n` samples spaced `stride` apart.
void transform_1d(Complex* data, std::size_t n, std::size_t stride, const std::vector<Complex>& w,
                  std::vector<Complex>& scratch) {
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = data[i * stride];

  if (is_pow2(n)) {
    // Iterative radix-2 Cooley-Tukey on the scratch copy.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(scratch[i], scratch[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          const Complex t = w[k * step] * scratch[start + k + len / 2];
          const Complex u = scratch[start + k];
          scratch[start + k] = u + t;
          scratch[start + k + len / 2] = u - t;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
    return;
  }

  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) acc += scratch[i] * w[(i * k) % n];
    data[k * stride] = acc;
  }
}

void transform_2d(std::vector<Complex>& bins, std::size_t h, std::size_t w, double sign) {
  const auto wr = twiddles(w, sign);
  const auto wc = twiddles(h, sign);
  std::vector<Complex> scratch;
  for (std::size_t r = 0; r < h; ++r) transform_1d(bins.data() + r * w, w, 1, wr, scratch);
  for (std::size_t c = 0; c < w; ++c) transform_1d(bins.data() + c, h, w, wc, scratch);
}

}  // namespace

RealGrid::RealGrid(std::size_t h, std::size_t w, std::vector<double> v)
    : height(h), width(w), values(std::move(v)) {
  if (values.size() != h * w) {
    throw DimensionError("grid " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                         std::to_string(values.size()) + " values");
  }
}

Spectrum dft2(const RealGrid& patch) {
  if (patch.height == 0 || patch.width == 0) throw DimensionError("dft2 of an empty grid");
  if (patch.values.size() != patch.height * patch.width) {
    throw DimensionError("dft2: grid storage does not match its dimensions");
  }
  Spectrum s(patch.height, patch.width);
  for (std::size_t i = 0; i < patch.values.size(); ++i) s.bins[i] = {patch.values[i], 0.0};
  transform_2d(s.bins, s.height, s.width, -1.0);
  return s;
}

std::vector<Complex> idft2_complex(const Spectrum& spectrum) {
  if (spectrum.height == 0 || spectrum.width == 0) throw DimensionError("idft2 of an empty spectrum");
  if (spectrum.bins.size() != spectrum.height * spectrum.width) {
    throw DimensionError("idft2: spectrum storage does not match its dimensions");
  }
  std::vector<Complex> out = spectrum.bins;
  transform_2d(out, spectrum.height, spectrum.width, +1.0);
  const double norm = 1.0 / static_cast<double>(spectrum.height * spectrum.width);
  for (auto& z : out) z *= norm;
  return out;
}

RealGrid idft2(const Spectrum& spectrum) {
  const auto z = idft2_complex(spectrum);
  RealGrid out(spectrum.height, spectrum.width);
  double residue = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.values[i] = z[i].real();
    residue = std::max(residue, std::abs(z[i].imag()));
  }
  if (residue >= kImagResidueLimit) {
    throw ContractError("idft2: imaginary residue " + std::to_string(residue) +
                        " exceeds limit; spectrum is not conjugate-symmetric");
  }
  return out;
}

AmplitudePhase amplitude_phase(const Spectrum& spectrum) {
  AmplitudePhase ap;
  ap.height = spectrum.height;
  ap.width = spectrum.width;
  ap.amplitude.resize(spectrum.bins.size());
  ap.phase.resize(spectrum.bins.size());
  for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
    const double re = spectrum.bins[i].real(), im = spectrum.bins[i].imag();
    ap.amplitude[i] = std::hypot(re, im);
    if (ap.amplitude[i] == 0.0) {
      ap.phase[i] = 0.0;
      continue;
    }
    double p = std::atan2(im, re);
    // atan2 returns -π for (-0, negative); fold onto (-π, π].
    if (p == -std::numbers::pi) p = std::numbers::pi;
    ap.phase[i] = p;
  }
  return ap;
}

Spectrum reconstruct(const AmplitudePhase& ap) {
  if (ap.amplitude.size() != ap.height * ap.width || ap.phase.size() != ap.amplitude.size()) {
    throw DimensionError("reconstruct: amplitude/phase grids do not match their dimensions");
  }
  Spectrum s(ap.height, ap.width);
  for (std::size_t i = 0; i < ap.amplitude.size(); ++i) {
    if (ap.amplitude[i] < 0.0) throw ContractError("reconstruct: negative amplitude");
    s.bins[i] = std::polar(ap.amplitude[i], ap.phase[i]);
  }
  return s;
}

Spectrum hermitian_part(const Spectrum& spectrum) {
  Spectrum out(spectrum.height, spectrum.width);
  const std::size_t h = spectrum.height, w = spectrum.width;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const Complex& a = spectrum(u, v);
      const Complex& b = spectrum((h - u) % h, (w - v) % w);
      out(u, v) = Complex(0.5 * (a.real() + b.real()), 0.5 * (a.imag() - b.imag()));
    }
  return out;
}

}  // namespace transface::fourier

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace transface::fourier {

using Complex = std::complex<double>;

/// Real H×W grid, row-major.
struct RealGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  RealGrid() = default;
  RealGrid(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0.0) {}
  RealGrid(std::size_t h, std::size_t w, std::vector<double> v);

  double& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Complex frequency grid indexed by (u, v), row-major.
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> bins;

  Spectrum() = default;
  Spectrum(std::size_t h, std::size_t w) : height(h), width(w), bins(h * w) {}

  Complex& operator()(std::size_t u, std::size_t v) { return bins[u * width + v]; }
  const Complex& operator()(std::size_t u, std::size_t v) const { return bins[u * width + v]; }
};

/// Polar form of a Spectrum. Phase lies in (-π, π]; zero-amplitude bins have
/// phase 0.
struct AmplitudePhase {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

/// Unnormalized forward transform
///   S(u,v) = Σ_h Σ_w x(h,w) e^{-j2π(hu/H + wv/W)}.
/// Power-of-two axes use radix-2 FFT, others the direct sum.
Spectrum dft2(const RealGrid& patch);

/// Inverse transform with 1/(H·W) normalization. The imaginary residue must
/// stay below kImagResidueLimit (conjugate-symmetric input); it is dropped.
RealGrid idft2(const Spectrum& spectrum);

/// Complex-valued inverse, no residue check.
std::vector<Complex> idft2_complex(const Spectrum& spectrum);

inline constexpr double kImagResidueLimit = 1e-6;

AmplitudePhase amplitude_phase(const Spectrum& spectrum);

/// S(u,v) = A(u,v) e^{+jP(u,v)}. Negative amplitudes are rejected.
Spectrum reconstruct(const AmplitudePhase& ap);

/// Projects onto the conjugate-symmetric subspace:
/// (S(u,v) + conj(S(-u,-v))) / 2. Symmetry then holds bit-exactly, which keeps
/// phases exactly antisymmetric even at bins holding only rounding noise.
Spectrum hermitian_part(const Spectrum& spectrum);

}  // namespace transface::fourier

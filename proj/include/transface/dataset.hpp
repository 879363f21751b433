#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "transface/image.hpp"

namespace transface {

/// Binary PPM (P6, maxval 255). Pixels are quantized to 8 bits on write and
/// scaled to [0, 1] on read.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Rounds every pixel to the nearest of the 256 PPM levels.
void quantize_8bit(Image& img);

struct ManifestRow {
  std::string path;  // relative to the manifest root
  int label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRow> rows;
  std::string split = "train";
};

struct VerificationPair {
  std::string path_a;
  std::string path_b;
  bool same = false;
};

/// `path,label` CSV with a header line.
DatasetManifest read_manifest(const std::filesystem::path& csv);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv);

/// `pathA,pathB,same` CSV with a header line; same ∈ {0,1}.
std::vector<VerificationPair> read_pairs(const std::filesystem::path& csv);
void write_pairs(const std::vector<VerificationPair>& pairs, const std::filesystem::path& csv);

/// Decodes every manifest row, checking size and label range.
std::vector<ImageSample> load_samples(const DatasetManifest& manifest, std::size_t channels,
                                      std::size_t side, std::size_t classes);

// ----------------------------------------------------------- synthetic faces

/// Per-identity appearance: a smooth colour field plus a fixed layout of
/// blob features.
struct IdentityStyle {
  struct Wave {
    double fx, fy, phase, amp;
  };
  struct Blob {
    double cx, cy, sigma_x, sigma_y;
    double color[3];
  };
  double base[3];
  std::vector<Wave> waves[3];
  std::vector<Blob> blobs;
};

/// Per-image nuisance: shift, photometric jitter, blur and noise.
struct Variation {
  double dx = 0.0, dy = 0.0;
  double brightness = 0.0;
  double contrast = 1.0;
  double blur_sigma = 0.0;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

IdentityStyle make_identity(std::uint64_t seed);
Variation make_variation(std::uint64_t seed);
Image render_face(const IdentityStyle& style, const Variation& var, std::size_t side);

struct ToyDatasetOptions {
  std::size_t classes = 8;
  std::size_t per_id = 20;
  std::size_t side = 32;
  /// Held-out images per identity for verification pairs; 0 writes none.
  std::size_t eval_per_id = 0;
  std::uint64_t seed = 0;
};

struct ToyCorpus {
  std::vector<ImageSample> train;
  std::vector<ImageSample> eval;
  /// Indices into `eval`.
  struct Pair {
    std::size_t a, b;
    bool same;
  };
  std::vector<Pair> pairs;
};

/// In-memory corpus, pixel-identical to what generate_toy_dataset writes.
ToyCorpus generate_toy_corpus(const ToyDatasetOptions& opts);

/// Writes images under `out_dir/images`, `train.csv` and (when eval_per_id > 0)
/// `eval/` images plus `pairs.csv`. Refuses a non-empty directory unless
/// `force` is set.
DatasetManifest generate_toy_dataset(const ToyDatasetOptions& opts,
                                     const std::filesystem::path& out_dir, bool force);

}  // namespace transface

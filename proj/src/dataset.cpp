#include "transface/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "transface/errors.hpp"
#include "transface/rng.hpp"

namespace fs = std::filesystem;

namespace transface {

// ------------------------------------------------------------------- PPM

void write_ppm(const fs::path& path, const Image& img) {
  if (img.channels != 3) throw DataError("PPM output needs 3 channels: " + path.string());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        buf[(y * img.width + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Image read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image " + path.string());
  if (ppm_token(f) != "P6") throw DataError("not a binary PPM (P6): " + path.string());
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(f));
    h = std::stoul(ppm_token(f));
    maxval = std::stoul(ppm_token(f));
  } catch (const std::exception&) {
    throw DataError("malformed PPM header: " + path.string());
  }
  if (w == 0 || h == 0 || maxval != 255) throw DataError("unsupported PPM geometry/maxval: " + path.string());
  std::vector<unsigned char> buf(w * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DataError("truncated PPM pixel data: " + path.string());
  }
  Image img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
  return img;
}

void quantize_8bit(Image& img) {
  for (auto& v : img.pixels) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
}

// ------------------------------------------------------------- CSV files

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& csv, std::size_t columns) {
  std::ifstream f(csv);
  if (!f) throw DataError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty CSV " + csv.string());
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw DataError(csv.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(columns) + " fields");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

int parse_int(const std::string& s, const fs::path& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where.string() + ": bad integer '" + s + "'");
  }
}

}  // namespace

DatasetManifest read_manifest(const fs::path& csv) {
  DatasetManifest m;
  m.root = csv.parent_path();
  for (auto& cells : read_csv(csv, 2)) m.rows.push_back({cells[0], parse_int(cells[1], csv)});
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& csv) {
  std::ofstream f(csv, std::ios::trunc);
  if (!f) throw DataError("cannot write " + csv.string());
  f << "path,label\n";
  for (const auto& r : manifest.rows) f << r.path << ',' << r.label << '\n';
}

std::vector<VerificationPair> read_pairs(const fs::path& csv) {
  std::vector<VerificationPair> out;
  for (auto& cells : read_csv(csv, 3)) {
    const int same = parse_int(cells[2], csv);
    if (same != 0 && same != 1) throw DataError(csv.string() + ": 'same' must be 0 or 1");
    out.push_back({cells[0], cells[1], same == 1});
  }
  return out;
}

void write_pairs(const std::vector<VerificationPair>& pairs, const fs::path& csv) {
  std::ofstream f(csv, std::ios::trunc);
  if (!f) throw DataError("cannot write " + csv.string());
  f << "pathA,pathB,same\n";
  for (const auto& p : pairs) f << p.path_a << ',' << p.path_b << ',' << (p.same ? 1 : 0) << '\n';
}

std::vector<ImageSample> load_samples(const DatasetManifest& manifest, std::size_t channels,
                                      std::size_t side, std::size_t classes) {
  std::vector<ImageSample> out;
  out.reserve(manifest.rows.size());
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    if (row.label < 0 || static_cast<std::size_t>(row.label) >= classes) {
      throw DataError("label " + std::to_string(row.label) + " of " + row.path + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    Image img = read_ppm(manifest.root / row.path);
    if (img.channels != channels || img.height != side || img.width != side) {
      throw DataError(row.path + " is " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + ", expected " + std::to_string(side));
    }
    out.push_back({std::move(img), row.label, mix_seed(0x5A17ULL, i)});
  }
  return out;
}

// ------------------------------------------------------- synthetic faces

IdentityStyle make_identity(std::uint64_t seed) {
  Rng rng(seed);
  IdentityStyle s;
  for (int c = 0; c < 3; ++c) {
    s.base[c] = rng.uniform(0.3, 0.7);
    for (int k = 0; k < 3; ++k) {
      s.waves[c].push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                            rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.03, 0.1)});
    }
  }
  // Eyes, nose, mouth at jittered canonical spots, plus two free features.
  const double layout[4][2] = {{0.32, 0.38}, {0.68, 0.38}, {0.5, 0.55}, {0.5, 0.75}};
  auto blob = [&](double cx, double cy) {
    IdentityStyle::Blob b{};
    b.cx = cx;
    b.cy = cy;
    b.sigma_x = rng.uniform(0.04, 0.12);
    b.sigma_y = rng.uniform(0.04, 0.12);
    for (double& col : b.color) col = rng.uniform(-0.35, 0.35);
    return b;
  };
  for (const auto& p : layout) {
    const double cx = p[0] + rng.uniform(-0.08, 0.08);
    const double cy = p[1] + rng.uniform(-0.08, 0.08);
    s.blobs.push_back(blob(cx, cy));
  }
  for (int k = 0; k < 2; ++k) {
    const double cx = rng.uniform(0.15, 0.85), cy = rng.uniform(0.15, 0.85);
    s.blobs.push_back(blob(cx, cy));
  }
  return s;
}

Variation make_variation(std::uint64_t seed) {
  Rng rng(seed);
  Variation v;
  v.dx = rng.uniform(-1.5, 1.5);
  v.dy = rng.uniform(-1.5, 1.5);
  v.brightness = rng.uniform(-0.06, 0.06);
  v.contrast = rng.uniform(0.85, 1.15);
  const bool hard = rng.uniform() < 0.25;
  if (hard) {
    v.blur_sigma = rng.uniform(1.0, 2.0);
    v.contrast *= 0.6;
    v.noise_std = rng.uniform(0.02, 0.06);
  } else {
    v.blur_sigma = rng.uniform(0.0, 0.6);
    v.noise_std = rng.uniform(0.0, 0.03);
  }
  v.noise_seed = rng.bits();
  return v;
}

namespace {

void gaussian_blur(Image& img, double sigma) {
  if (sigma < 0.05) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  std::vector<double> tmp(img.pixels.size());
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        tmp[(c * h + y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp[(c * h + std::clamp(y + i, 0, h - 1)) * w + x];
        img.at(c, y, x) = acc;
      }
  }
}

}  // namespace

Image render_face(const IdentityStyle& style, const Variation& var, std::size_t side) {
  Image img(3, side, side);
  const double inv = 1.0 / static_cast<double>(side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - var.dx) * inv;
      const double v = (static_cast<double>(y) + 0.5 - var.dy) * inv;
      for (int c = 0; c < 3; ++c) {
        double val = style.base[c];
        for (const auto& w : style.waves[c])
          val += w.amp * std::cos(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
        for (const auto& b : style.blobs) {
          const double ex = (u - b.cx) / b.sigma_x, ey = (v - b.cy) / b.sigma_y;
          val += b.color[c] * std::exp(-0.5 * (ex * ex + ey * ey));
        }
        img.at(c, y, x) = (val - 0.5) * var.contrast + 0.5 + var.brightness;
      }
    }
  gaussian_blur(img, var.blur_sigma);
  if (var.noise_std > 0.0) {
    Rng rng(var.noise_seed);
    for (auto& p : img.pixels) p += var.noise_std * rng.normal();
  }
  quantize_8bit(img);
  return img;
}

namespace {

std::string image_name(const char* dir, std::size_t id, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/id%03zu_%03zu.ppm", dir, id, k);
  return buf;
}

}  // namespace

ToyCorpus generate_toy_corpus(const ToyDatasetOptions& opts) {
  if (opts.classes < 2) throw ContractError("need at least 2 identities");
  if (opts.per_id < 2) throw ContractError("need at least 2 images per identity");
  ToyCorpus corpus;
  for (std::size_t id = 0; id < opts.classes; ++id) {
    const auto style = make_identity(mix_seed(opts.seed, 1'000'000 + id));
    const std::uint64_t id_seed = mix_seed(opts.seed, id);
    for (std::size_t k = 0; k < opts.per_id + opts.eval_per_id; ++k) {
      ImageSample s;
      s.image = render_face(style, make_variation(mix_seed(id_seed, k)), opts.side);
      s.label = static_cast<int>(id);
      auto& dst = k < opts.per_id ? corpus.train : corpus.eval;
      s.seed = mix_seed(0x5A17ULL, dst.size());
      dst.push_back(std::move(s));
    }
  }
  if (opts.eval_per_id >= 2) {
    for (std::size_t i = 0; i < corpus.eval.size(); ++i)
      for (std::size_t j = i + 1; j < corpus.eval.size(); ++j)
        if (corpus.eval[i].label == corpus.eval[j].label) corpus.pairs.push_back({i, j, true});
    const std::size_t genuine = corpus.pairs.size();
    Rng rng(mix_seed(opts.seed, 0xFA125ULL));
    for (std::size_t made = 0; made < genuine;) {
      const std::size_t a = rng.index(corpus.eval.size()), b = rng.index(corpus.eval.size());
      if (corpus.eval[a].label == corpus.eval[b].label) continue;
      corpus.pairs.push_back({a, b, false});
      ++made;
    }
  }
  return corpus;
}

DatasetManifest generate_toy_dataset(const ToyDatasetOptions& opts, const fs::path& out_dir,
                                     bool force) {
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw DataError("output directory " + out_dir.string() + " is not empty (use --force)");
    fs::remove_all(out_dir);
  }
  const auto corpus = generate_toy_corpus(opts);
  fs::create_directories(out_dir / "images");
  DatasetManifest m;
  m.root = out_dir;
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    const auto& s = corpus.train[i];
    const auto name = image_name("images", static_cast<std::size_t>(s.label), i % opts.per_id);
    write_ppm(out_dir / name, s.image);
    m.rows.push_back({name, s.label});
  }
  write_manifest(m, out_dir / "train.csv");
  if (!corpus.eval.empty()) {
    fs::create_directories(out_dir / "eval");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < corpus.eval.size(); ++i) {
      const auto& s = corpus.eval[i];
      names.push_back(image_name("eval", static_cast<std::size_t>(s.label), i % opts.eval_per_id));
      write_ppm(out_dir / names.back(), s.image);
    }
    std::vector<VerificationPair> pairs;
    for (const auto& p : corpus.pairs) pairs.push_back({names[p.a], names[p.b], p.same});
    write_pairs(pairs, out_dir / "pairs.csv");
  }
  return m;
}

}  // namespace transface

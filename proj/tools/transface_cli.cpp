// Command-line front end: data generation, training, evaluation and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "transface/ablation.hpp"
#include "transface/backbone.hpp"
#include "transface/config.hpp"
#include "transface/dataset.hpp"
#include "transface/dpap.hpp"
#include "transface/ehsm.hpp"
#include "transface/errors.hpp"
#include "transface/evaluation.hpp"
#include "transface/metrics.hpp"
#include "transface/trainer.hpp"

namespace fs = std::filesystem;
using namespace transface;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
    const TrainConfig defaults;
    for (const auto& key : config_keys()) {
      options[key] = app->add_option("--" + key, values[key], "Config key '" + key + "'")
                         ->default_str(get_config_value(defaults, key));
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) set_config_value(cfg, key, values.at(key));
    }
    return cfg;
  }
};

std::vector<ImageSample> load_manifest_samples(const fs::path& csv, const ModelConfig& mc) {
  const DatasetManifest m = read_manifest(csv);
  return load_samples(m, mc.channels, mc.image_side, mc.classes);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

// ------------------------------------------------------------------ gen-data

struct GenDataArgs {
  fs::path out;
  ToyDatasetOptions opts;
  bool force = false;
};

int run_gen_data(const GenDataArgs& a) {
  const DatasetManifest m = generate_toy_dataset(a.opts, a.out, a.force);
  std::printf("wrote %zu training images to %s\n", m.rows.size(), a.out.string().c_str());
  if (a.opts.eval_per_id > 0) std::printf("wrote pairs to %s\n", (a.out / "pairs.csv").string().c_str());
  return kOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  ConfigFlags config;
  fs::path manifest;
  fs::path checkpoint = "model.tfck";
  fs::path log = "train_log.csv";
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = a.config.resolve();
  cfg.validate();
  const auto samples = load_manifest_samples(a.manifest, cfg.model);
  TrainHooks hooks;
  if (!a.quiet) {
    hooks.on_epoch = [](const TrainRecord& r) {
      std::printf("epoch %4zu  loss %.4f  eta %.4f  entropy %.4f  acc %.3f  %.1fs\n", r.epoch,
                  r.arc_loss, r.mean_eta, r.token_entropy, r.train_accuracy, r.seconds);
      std::fflush(stdout);
      return true;
    };
  }
  const TrainResult result = train(cfg, samples, hooks);
  save_checkpoint(result.model, a.checkpoint);
  std::ofstream log(a.log);
  if (!log) throw DataError("cannot write " + a.log.string());
  write_records_csv(log, result.records);
  std::printf("final train accuracy %.4f, token entropy %.4f\n", result.final_accuracy,
              result.final_entropy);
  std::printf("checkpoint %s, log %s\n", a.checkpoint.string().c_str(), a.log.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------- eval-pairs

struct EvalArgs {
  fs::path checkpoint;
  fs::path pairs;
  fs::path root;
  std::vector<double> fars{1e-1, 1e-2, 1e-3};
  fs::path scores;
};

int run_eval(const EvalArgs& a) {
  const TransFaceModel model = load_checkpoint(a.checkpoint);
  const auto pairs = read_pairs(a.pairs);
  const fs::path root = a.root.empty() ? a.pairs.parent_path() : a.root;
  const PairEvaluation ev = evaluate_pairs(model, pairs, root);
  std::printf("pairs %zu (genuine %zu, impostor %zu)\n", ev.scores.size(), ev.genuine.size(),
              ev.impostor.size());
  std::printf("accuracy %.4f at threshold %.6f\n", ev.accuracy, ev.threshold);
  if (!ev.genuine.empty() && !ev.impostor.empty()) {
    for (double far : a.fars) {
      const TarAtFar t = tar_at_far(ev.genuine, ev.impostor, far);
      std::printf("TAR@FAR=%g %.4f%s\n", far, t.tar, t.saturated ? " (saturated)" : "");
    }
  }
  if (!a.scores.empty()) {
    std::ofstream f(a.scores);
    if (!f) throw DataError("cannot write " + a.scores.string());
    f << "pathA,pathB,same,score\n";
    f.precision(17);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      f << pairs[i].path_a << ',' << pairs[i].path_b << ',' << (pairs[i].same ? 1 : 0) << ','
        << ev.scores[i] << '\n';
    }
  }
  return kOk;
}

// -------------------------------------------------------------------- ablate

struct AblateArgs {
  ConfigFlags config;
  fs::path manifest;
  fs::path pairs;
  std::vector<std::string> modes{"baseline", "+SE", "+DPAP", "full"};
  fs::path out;
};

int run_ablate(const AblateArgs& a) {
  std::vector<AblationMode> modes;
  for (const auto& name : a.modes) modes.push_back(ablation_mode_from_string(name));
  const TrainConfig cfg = a.config.resolve();
  const auto samples = load_manifest_samples(a.manifest, cfg.model);

  std::vector<ImageSample> eval_images;
  PairSet eval;
  if (!a.pairs.empty()) {
    const auto pairs = read_pairs(a.pairs);
    std::map<std::string, std::size_t> index;
    auto lookup = [&](const std::string& rel) {
      auto it = index.find(rel);
      if (it != index.end()) return it->second;
      const fs::path p = a.pairs.parent_path() / rel;
      Image img;
      try {
        img = read_ppm(p);
      } catch (const std::exception& e) {
        throw DataError("cannot decode " + p.string() + ": " + e.what());
      }
      eval_images.push_back({std::move(img), 0, 0});
      return index.emplace(rel, eval_images.size() - 1).first->second;
    };
    for (const auto& pr : pairs) {
      eval.pairs.emplace_back(lookup(pr.path_a), lookup(pr.path_b));
      eval.same.push_back(pr.same);
    }
    eval.images = eval_images;
  }

  const auto rows = run_ablation(cfg, modes, samples, a.pairs.empty() ? nullptr : &eval);
  if (a.out.empty()) {
    write_ablation_csv(std::cout, rows);
  } else {
    std::ofstream f(a.out);
    if (!f) throw DataError("cannot write " + a.out.string());
    write_ablation_csv(f, rows);
    std::printf("wrote %zu rows to %s\n", rows.size(), a.out.string().c_str());
  }
  return kOk;
}

// ------------------------------------------------------------------ dump-aug

struct DumpArgs {
  ConfigFlags config;
  fs::path manifest;
  fs::path checkpoint;
  fs::path out = "aug";
  std::size_t count = 8;
  std::size_t epoch = 0;
};

int run_dump(const DumpArgs& a) {
  TrainConfig cfg = a.config.resolve();
  const TransFaceModel model =
      a.checkpoint.empty() ? TransFaceModel(cfg.model, model_seed(cfg.seed)) : load_checkpoint(a.checkpoint);
  cfg.model = model.config();
  if (!cfg.model.use_se) throw ContractError("dump-aug needs a model with the SE module");
  cfg.validate();
  const DatasetManifest m = read_manifest(a.manifest);
  const auto samples = load_samples(m, cfg.model.channels, cfg.model.image_side, cfg.model.classes);
  fs::create_directories(a.out);
  const PatchGrid grid = model.patch_grid();

  std::ofstream trace_csv(a.out / "trace.csv");
  if (!trace_csv) throw DataError("cannot write " + (a.out / "trace.csv").string());
  trace_csv << "index,source,dominant,lambdas,donor_patches,clamped\n";
  const std::size_t n = std::min(a.count, samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const ImageSample& s = samples[i];
    const ImageSample& donor = samples[(i + 1) % samples.size()];
    std::vector<double> kappa;
    {
      NoGradGuard guard;
      const Tensor k = model.forward(s.image).tokens.kappa;
      kappa.assign(k.data().begin(), k.data().end());
    }
    dpap::AugmentTrace trace;
    const Image aug =
        dpap::augment(s.image, grid, kappa, augmentation_for(cfg, a.epoch, s.seed), donor.image, &trace);
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    write_ppm(a.out / (std::string(name) + "_orig.ppm"), s.image);
    write_ppm(a.out / (std::string(name) + "_aug.ppm"), aug);

    auto join = [](const auto& xs) {
      std::string r;
      for (std::size_t j = 0; j < xs.size(); ++j) r += (j ? " " : "") + std::to_string(xs[j]);
      return r;
    };
    trace_csv << i << ',' << m.rows[i].path << ',' << join(trace.dominant) << ','
              << join(trace.lambdas) << ',' << join(trace.donor_patches) << ','
              << trace.clamped_pixels << '\n';
  }
  std::printf("wrote %zu image pairs to %s\n", n, a.out.string().c_str());
  return kOk;
}

// ------------------------------------------------------------ entropy-report

struct EntropyArgs {
  ConfigFlags config;
  fs::path checkpoint;
  fs::path manifest;
  fs::path out;
};

int run_entropy(const EntropyArgs& a) {
  const TrainConfig cfg = a.config.resolve();
  const TransFaceModel model = load_checkpoint(a.checkpoint);
  const ModelConfig& mc = model.config();
  const DatasetManifest m = read_manifest(a.manifest);
  const auto samples = load_samples(m, mc.channels, mc.image_side, mc.classes);

  std::ostringstream csv;
  csv.precision(10);
  csv << "path,label,token_entropy,information,eta\n";
  std::vector<Tensor> gated;
  double eta_sum = 0.0;
  NoGradGuard guard;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ForwardResult fr = model.forward(samples[i].image);
    gated.push_back(fr.tokens.gated);
    const double entropy = ehsm::mean_token_information(std::span(&fr.tokens.gated, 1),
                                                        ehsm::InfoMode::gaussian_entropy);
    double info = 0.0, eta = 1.0;
    if (cfg.ehsm != EhsmMode::off) {
      const Tensor source = cfg.ehsm == EhsmMode::global ? fr.tokens.global : fr.tokens.gated;
      const auto mode = cfg.ehsm == EhsmMode::entropy ? ehsm::InfoMode::gaussian_entropy
                                                      : ehsm::InfoMode::variance;
      const Tensor e = ehsm::token_information(source, mode);
      info = sum(e).item();
      eta = ehsm::sample_weight(e, cfg.gamma).item();
    }
    eta_sum += eta;
    csv << m.rows[i].path << ',' << samples[i].label << ',' << entropy << ',' << info << ',' << eta
        << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  std::fprintf(a.out.empty() ? stderr : stdout,
               "samples %zu  mean token entropy %.6f  mean eta %.6f (mode %s, gamma %g)\n",
               samples.size(),
               ehsm::mean_token_information(gated, ehsm::InfoMode::gaussian_entropy),
               eta_sum / static_cast<double>(samples.size()), to_string(cfg.ehsm).c_str(), cfg.gamma);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TransFace toy trainer: DPAP augmentation and entropy-weighted hard sample mining"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic face corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--classes", gen.opts.classes, "Identities")->capture_default_str();
  gen_cmd->add_option("--per-id", gen.opts.per_id, "Training images per identity")->capture_default_str();
  gen_cmd->add_option("--side", gen.opts.side, "Image side in pixels")->capture_default_str();
  gen_cmd->add_option("--eval-per-id", gen.opts.eval_per_id,
                      "Held-out images per identity for pairs.csv")->capture_default_str();
  gen_cmd->add_option("--seed", gen.opts.seed, "Corpus seed")->capture_default_str();
  gen_cmd->add_flag("--force", gen.force, "Replace a non-empty output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest");
  train_cmd->add_option("--manifest", tr.manifest, "Training manifest CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint", tr.checkpoint, "Checkpoint output")->capture_default_str();
  train_cmd->add_option("--log", tr.log, "Per-epoch CSV output")->capture_default_str();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch output");
  tr.config.attach(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval-pairs", "Verification accuracy and TAR@FAR on pairs");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--pairs", ev.pairs, "Pairs CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--root", ev.root, "Image root (default: directory of the pairs file)");
  eval_cmd->add_option("--far", ev.fars, "False accept rates for TAR@FAR")->capture_default_str();
  eval_cmd->add_option("--scores", ev.scores, "Per-pair score CSV output");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train each ablation variant and tabulate");
  ablate_cmd->add_option("--manifest", ab.manifest, "Training manifest CSV")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--pairs", ab.pairs, "Optional pairs CSV for verification accuracy")
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--modes", ab.modes, "baseline, +SE, +DPAP, full, EHSM-global")
      ->capture_default_str();
  ablate_cmd->add_option("--out", ab.out, "CSV output (default: stdout)");
  ab.config.attach(ablate_cmd);

  DumpArgs du;
  auto* dump_cmd = app.add_subcommand("dump-aug", "Write original and augmented image pairs");
  dump_cmd->add_option("--manifest", du.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--checkpoint", du.checkpoint, "Model whose SE factors pick the patches")
      ->check(CLI::ExistingFile);
  dump_cmd->add_option("--out", du.out, "Output directory")->capture_default_str();
  dump_cmd->add_option("--count", du.count, "Number of images")->capture_default_str();
  dump_cmd->add_option("--epoch", du.epoch, "Epoch index used for the augmentation seed")
      ->capture_default_str();
  du.config.attach(dump_cmd);

  EntropyArgs en;
  auto* entropy_cmd = app.add_subcommand("entropy-report", "Per-image token entropy and sample weight");
  entropy_cmd->add_option("--checkpoint", en.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  entropy_cmd->add_option("--manifest", en.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  entropy_cmd->add_option("--out", en.out, "CSV output (default: stdout)");
  en.config.attach(entropy_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*ablate_cmd) return run_ablate(ab);
    if (*dump_cmd) return run_dump(du);
    if (*entropy_cmd) return run_entropy(en);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kNumerical;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}

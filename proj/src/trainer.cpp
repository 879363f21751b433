#include "transface/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "transface/ehsm.hpp"
#include "transface/errors.hpp"
#include "transface/optimizer.hpp"
#include "transface/rng.hpp"

namespace transface {

namespace {

constexpr std::uint64_t kModelTag = 0x4D4F44454CULL;
constexpr std::uint64_t kOrderTag = 0x4F52444552ULL;
constexpr std::uint64_t kAugTag = 0x4450415000ULL;

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void write_records_csv(std::ostream& os, std::span<const TrainRecord> records) {
  os << "epoch,arc_loss,mean_eta,token_entropy,train_accuracy,seconds\n";
  const auto prec = os.precision(10);
  for (const auto& r : records) {
    os << r.epoch << ',' << r.arc_loss << ',' << r.mean_eta << ',' << r.token_entropy << ','
       << r.train_accuracy << ',' << r.seconds << '\n';
  }
  os.precision(prec);
}

std::uint64_t model_seed(std::uint64_t train_seed) { return mix_seed(train_seed, kModelTag); }

dpap::AugmentationConfig augmentation_for(const TrainConfig& cfg, std::size_t epoch,
                                          std::uint64_t sample_seed) {
  dpap::AugmentationConfig a;
  a.top_k = cfg.effective_top_k();
  a.alpha = cfg.alpha;
  a.seed = mix_seed(mix_seed(cfg.seed ^ kAugTag, epoch), sample_seed);
  return a;
}

std::vector<std::size_t> epoch_order(std::uint64_t train_seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(train_seed ^ kOrderTag, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

Tensor sample_loss(const TransFaceModel& model, const TrainConfig& cfg, const Image& input,
                   std::size_t label, double* eta_out, double* arc_out) {
  const auto& mc = model.config();
  const ForwardResult fr = model.forward(input);
  const Tensor arc = arcface_from_cosines(fr.cosines, label, mc.scale, mc.margin);
  if (arc_out) *arc_out = arc.item();
  if (cfg.ehsm == EhsmMode::off) {
    if (eta_out) *eta_out = 1.0;
    return arc;
  }
  Tensor info;
  switch (cfg.ehsm) {
    case EhsmMode::variance:
      info = ehsm::token_information(fr.tokens.gated, ehsm::InfoMode::variance);
      break;
    case EhsmMode::entropy:
      info = ehsm::token_information(fr.tokens.gated, ehsm::InfoMode::gaussian_entropy);
      break;
    case EhsmMode::global:
      info = ehsm::token_information(fr.tokens.global, ehsm::InfoMode::variance);
      break;
    case EhsmMode::off:
      break;
  }
  const Tensor eta = ehsm::sample_weight(info, cfg.gamma);
  if (eta_out) *eta_out = eta.item();
  return ehsm::reweighted_loss(eta, arc);
}

void check_finite(std::span<const std::pair<std::string, Tensor>> named, bool check_grads) {
  for (const auto& [name, t] : named) {
    if (!all_finite(t.data())) throw NumericalError("non-finite values in " + name);
    if (check_grads && t.has_grad() && !all_finite(t.grad())) {
      throw NumericalError("non-finite gradient in " + name);
    }
  }
}

CleanStats evaluate_clean(const TransFaceModel& model, std::span<const ImageSample> samples) {
  NoGradGuard guard;
  CleanStats s;
  if (samples.empty()) return s;
  std::size_t correct = 0;
  std::vector<Tensor> gated;
  gated.reserve(samples.size());
  for (const auto& smp : samples) {
    const ForwardResult fr = model.forward(smp.image);
    correct += predict(fr.cosines) == static_cast<std::size_t>(smp.label);
    gated.push_back(fr.tokens.gated);
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  s.token_entropy = ehsm::mean_token_information(gated, ehsm::InfoMode::gaussian_entropy);
  return s;
}

TrainResult train(const TrainConfig& cfg, std::span<const ImageSample> samples,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (samples.empty()) throw DataError("train: empty training set");
  const auto& mc = cfg.model;
  for (const auto& s : samples) {
    if (s.image.channels != mc.channels || s.image.height != mc.image_side ||
        s.image.width != mc.image_side) {
      throw DataError("train: sample dimensions do not match the model configuration");
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= mc.classes) {
      throw DataError("train: label " + std::to_string(s.label) + " outside [0, classes)");
    }
  }

  TrainResult result{TransFaceModel(mc, model_seed(cfg.seed)), {}, 0.0, 0.0};
  TransFaceModel& model = result.model;
  const auto named = model.parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);
  AdamW opt(params, {cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, 1e-8});
  const PatchGrid grid = model.patch_grid();
  const std::size_t n = samples.size();
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, n);
    double arc_sum = 0.0, eta_sum = 0.0;
    std::size_t correct = 0;
    std::vector<Tensor> clean_gated;
    clean_gated.reserve(n);

    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t stop = std::min(n, start + cfg.batch);
      Tensor batch_loss;
      for (std::size_t pos = start; pos < stop; ++pos) {
        const ImageSample& smp = samples[order[pos]];
        const auto label = static_cast<std::size_t>(smp.label);

        // Pass 1: clean forward to harvest κ.
        std::vector<double> kappa;
        {
          NoGradGuard guard;
          const ForwardResult fr = model.forward(smp.image);
          correct += predict(fr.cosines) == label;
          clean_gated.push_back(fr.tokens.gated);
          kappa.assign(fr.tokens.kappa.data().begin(), fr.tokens.kappa.data().end());
        }

        // Pass 2: augmented forward with gradient.
        Image input = smp.image;
        if (cfg.dpap) {
          const ImageSample& donor = samples[order[(pos + 1) % n]];
          input = dpap::augment(smp.image, grid, kappa, augmentation_for(cfg, epoch, smp.seed),
                                donor.image);
        }
        double eta = 1.0, arc = 0.0;
        const Tensor loss = sample_loss(model, cfg, input, label, &eta, &arc);
        if (!std::isfinite(loss.item())) {
          check_finite(named, false);
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                               " (arc " + std::to_string(arc) + ", eta " + std::to_string(eta) +
                               ")");
        }
        arc_sum += arc;
        eta_sum += eta;
        batch_loss = batch_loss.numel() ? add(batch_loss, loss) : loss;
      }

      const Tensor mean_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      opt.zero_grad();
      backward(mean_loss);
      check_finite(named, true);
      opt.step();
      check_finite(named, false);
    }

    TrainRecord rec;
    rec.epoch = epoch + 1;
    rec.arc_loss = arc_sum / static_cast<double>(n);
    rec.mean_eta = eta_sum / static_cast<double>(n);
    rec.token_entropy =
        ehsm::mean_token_information(clean_gated, ehsm::InfoMode::gaussian_entropy);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
    if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
  }

  const CleanStats fin = evaluate_clean(model, samples);
  result.final_accuracy = fin.accuracy;
  result.final_entropy = fin.token_entropy;
  return result;
}

}  // namespace transface

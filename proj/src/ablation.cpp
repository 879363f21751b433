#include "transface/ablation.hpp"

#include <ostream>

#include "transface/dpap.hpp"
#include "transface/ehsm.hpp"
#include "transface/errors.hpp"
#include "transface/evaluation.hpp"
#include "transface/trainer.hpp"

namespace transface {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::baseline: return "baseline";
    case AblationMode::se: return "+SE";
    case AblationMode::dpap: return "+DPAP";
    case AblationMode::full: return "full";
    case AblationMode::ehsm_global: return "EHSM-global";
  }
  return "?";
}

AblationMode ablation_mode_from_string(const std::string& name) {
  for (AblationMode m : {AblationMode::baseline, AblationMode::se, AblationMode::dpap,
                         AblationMode::full, AblationMode::ehsm_global}) {
    if (name == to_string(m)) return m;
  }
  throw ContractError("unknown ablation mode '" + name +
                      "' (baseline, +SE, +DPAP, full, EHSM-global)");
}

const std::vector<AblationMode>& default_ablation_modes() {
  static const std::vector<AblationMode> modes = {AblationMode::baseline, AblationMode::se,
                                                  AblationMode::dpap, AblationMode::full};
  return modes;
}

TrainConfig ablation_config(const TrainConfig& base, AblationMode mode) {
  TrainConfig c = base;
  switch (mode) {
    case AblationMode::baseline:
      c.model.use_se = false;
      c.dpap = false;
      c.ehsm = EhsmMode::off;
      break;
    case AblationMode::se:
      c.model.use_se = true;
      c.dpap = false;
      c.ehsm = EhsmMode::off;
      break;
    case AblationMode::dpap:
      c.model.use_se = true;
      c.dpap = true;
      c.ehsm = EhsmMode::off;
      break;
    case AblationMode::full:
      c.model.use_se = true;
      c.dpap = true;
      if (c.ehsm == EhsmMode::off || c.ehsm == EhsmMode::global) c.ehsm = EhsmMode::variance;
      break;
    case AblationMode::ehsm_global:
      c.model.use_se = true;
      c.dpap = true;
      c.ehsm = EhsmMode::global;
      break;
  }
  return c;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, std::span<const AblationMode> modes,
                                      std::span<const ImageSample> train_set,
                                      const PairSet* eval) {
  std::vector<AblationRow> rows;
  for (const AblationMode mode : modes) {
    const TrainConfig cfg = ablation_config(base, mode);
    const auto dpap0 = dpap::invocation_count();
    const auto ehsm0 = ehsm::invocation_count();
    const TrainResult r = train(cfg, train_set);

    AblationRow row;
    row.mode = mode;
    row.dpap_calls = dpap::invocation_count() - dpap0;
    row.ehsm_calls = ehsm::invocation_count() - ehsm0;
    row.epochs_run = r.records.size();
    row.final_arc_loss = r.records.back().arc_loss;
    row.mean_eta = r.records.back().mean_eta;
    row.seconds = r.records.back().seconds;
    row.train_accuracy = r.final_accuracy;
    row.token_entropy = r.final_entropy;
    if (eval) {
      const auto scores = pair_scores(r.model, eval->images, eval->pairs);
      row.pair_accuracy = best_threshold_accuracy(scores, eval->same).accuracy;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "mode,epochs,arc_loss,train_accuracy,token_entropy,mean_eta,pair_accuracy,dpap_calls,"
        "ehsm_calls,seconds\n";
  const auto prec = os.precision(10);
  for (const auto& r : rows) {
    os << to_string(r.mode) << ',' << r.epochs_run << ',' << r.final_arc_loss << ','
       << r.train_accuracy << ',' << r.token_entropy << ',' << r.mean_eta << ',';
    if (r.pair_accuracy >= 0.0) os << r.pair_accuracy;
    os << ',' << r.dpap_calls << ',' << r.ehsm_calls << ',' << r.seconds << '\n';
  }
  os.precision(prec);
}

}  // namespace transface

#include "transface/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "transface/errors.hpp"

namespace transface {

std::string to_string(EhsmMode mode) {
  switch (mode) {
    case EhsmMode::off: return "off";
    case EhsmMode::variance: return "variance";
    case EhsmMode::entropy: return "entropy";
    case EhsmMode::global: return "global";
  }
  return "?";
}

EhsmMode ehsm_mode_from_string(const std::string& name) {
  if (name == "off") return EhsmMode::off;
  if (name == "variance") return EhsmMode::variance;
  if (name == "entropy") return EhsmMode::entropy;
  if (name == "global") return EhsmMode::global;
  throw ContractError("unknown ehsm-mode '" + name + "' (variance, entropy, global, off)");
}

std::size_t TrainConfig::effective_top_k() const {
  if (top_k) return top_k;
  const double scaled = 7.0 * static_cast<double>(model.num_patches()) / 144.0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scaled)));
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ContractError("epochs must be positive");
  if (batch == 0) throw ContractError("batch must be positive");
  if (lr < 0.0 || weight_decay < 0.0) throw ContractError("lr and weight-decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("betas must lie in [0, 1)");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
  if (effective_top_k() > model.num_patches()) {
    throw ContractError("top-k exceeds the patch count " + std::to_string(model.num_patches()));
  }
  if (!(gamma > 0.0)) throw ContractError("gamma must be positive");
  if (dpap && !model.use_se) throw ContractError("dpap needs the SE module (se = on)");
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used != v.size() || v.find('-') != std::string::npos) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ContractError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ContractError("'" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ContractError("'" + key + "' expects on/off, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_size(k, v);
          },
          [member](const TrainConfig& c) { return std::to_string(member(const_cast<TrainConfig&>(c))); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_double(k, v);
          },
          [member](const TrainConfig& c) { return fmt(member(const_cast<TrainConfig&>(c))); }};
}

template <typename Member>
Field switch_field(Member member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_switch(k, v);
          },
          [member](const TrainConfig& c) {
            return std::string(member(const_cast<TrainConfig&>(c)) ? "on" : "off");
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"image-side", size_field([](TrainConfig& c) -> std::size_t& { return c.model.image_side; })},
      {"channels", size_field([](TrainConfig& c) -> std::size_t& { return c.model.channels; })},
      {"patch", size_field([](TrainConfig& c) -> std::size_t& { return c.model.patch; })},
      {"dim", size_field([](TrainConfig& c) -> std::size_t& { return c.model.dim; })},
      {"depth", size_field([](TrainConfig& c) -> std::size_t& { return c.model.depth; })},
      {"heads", size_field([](TrainConfig& c) -> std::size_t& { return c.model.heads; })},
      {"mlp-ratio", size_field([](TrainConfig& c) -> std::size_t& { return c.model.mlp_ratio; })},
      {"se-hidden", size_field([](TrainConfig& c) -> std::size_t& { return c.model.se_hidden; })},
      {"emb", size_field([](TrainConfig& c) -> std::size_t& { return c.model.emb; })},
      {"classes", size_field([](TrainConfig& c) -> std::size_t& { return c.model.classes; })},
      {"scale", double_field([](TrainConfig& c) -> double& { return c.model.scale; })},
      {"margin", double_field([](TrainConfig& c) -> double& { return c.model.margin; })},
      {"se", switch_field([](TrainConfig& c) -> bool& { return c.model.use_se; })},
      {"epochs", size_field([](TrainConfig& c) -> std::size_t& { return c.epochs; })},
      {"batch", size_field([](TrainConfig& c) -> std::size_t& { return c.batch; })},
      {"lr", double_field([](TrainConfig& c) -> double& { return c.lr; })},
      {"weight-decay", double_field([](TrainConfig& c) -> double& { return c.weight_decay; })},
      {"beta1", double_field([](TrainConfig& c) -> double& { return c.beta1; })},
      {"beta2", double_field([](TrainConfig& c) -> double& { return c.beta2; })},
      {"dpap", switch_field([](TrainConfig& c) -> bool& { return c.dpap; })},
      {"alpha", double_field([](TrainConfig& c) -> double& { return c.alpha; })},
      {"top-k", size_field([](TrainConfig& c) -> std::size_t& { return c.top_k; })},
      {"gamma", double_field([](TrainConfig& c) -> double& { return c.gamma; })},
      {"ehsm-mode",
       {[](TrainConfig& c, const std::string&, const std::string& v) { c.ehsm = ehsm_mode_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.ehsm); }}},
      {"seed",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.seed = static_cast<std::uint64_t>(parse_size(k, v));
        },
        [](const TrainConfig& c) { return std::to_string(c.seed); }}},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ContractError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

std::string get_config_value(const TrainConfig& cfg, const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ContractError("unknown config key '" + key + "'");
  return it->second.get(cfg);
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ContractError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ContractError& e) {
      throw ContractError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& key : config_keys()) out += key + " = " + get_config_value(cfg, key) + "\n";
  return out;
}

}  // namespace transface

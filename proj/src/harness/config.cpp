// Copyright 2026 The DEIR Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "deir/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace deir::harness {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) parts.push_back(trim(item));
  return parts;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::array<int, 3> parse_channels(const std::string& key, const std::string& value) {
  const auto parts = split_list(value);
  if (parts.size() != 3) throw ConfigError("config: '" + key + "' expects three comma-separated widths");
  return {parse_number<int>(key, parts[0]), parse_number<int>(key, parts[1]), parse_number<int>(key, parts[2])};
}

std::string channels_text(const std::array<int, 3>& c) {
  return std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]);
}

nn::NormKind parse_norm(const std::string& key, const std::string& value) {
  if (value == "batch") return nn::NormKind::Batch;
  if (value == "layer") return nn::NormKind::Layer;
  if (value == "none") return nn::NormKind::None;
  throw ConfigError("config: '" + key + "' expects batch, layer or none");
}

std::string norm_text(nn::NormKind k) {
  switch (k) {
    case nn::NormKind::Batch:
      return "batch";
    case nn::NormKind::Layer:
      return "layer";
    case nn::NormKind::None:
      break;
  }
  return "none";
}

struct Entry {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DEIR_DOUBLE(KEY, FIELD)                                                                              \
  Entry {                                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_number<double>(KEY, v); },          \
        [](const ExperimentConfig& c) { return format_double(c.FIELD); }                                     \
  }
#define DEIR_INT(KEY, FIELD)                                                                                 \
  Entry {                                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_number<decltype(c.FIELD)>(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                                    \
  }
#define DEIR_BOOL(KEY, FIELD)                                                                                \
  Entry {                                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); },                    \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                    \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"env.task", [](ExperimentConfig& c, const std::string& v) {
              try {
                c.env.task = env::parse_task(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: env.task: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(env::task_name(c.env.task)); }},
      DEIR_INT("env.view", env.view_size),
      DEIR_DOUBLE("env.noise_mu", env.noise_mu),
      DEIR_DOUBLE("env.noise_sigma", env.noise_sigma),
      DEIR_BOOL("env.invisible_obstacles", env.invisible_obstacles),
      DEIR_INT("env.max_steps", env.max_steps),
      DEIR_INT("ppo.workers", n_workers),
      DEIR_INT("ppo.steps", n_steps),
      DEIR_DOUBLE("ppo.gamma", ppo.gamma),
      DEIR_DOUBLE("ppo.gae_lambda", ppo.gae_lambda),
      DEIR_DOUBLE("ppo.clip", ppo.clip_range),
      DEIR_DOUBLE("ppo.ent_coef", ppo.ent_coef),
      DEIR_DOUBLE("ppo.value_coef", ppo.value_coef),
      DEIR_DOUBLE("ppo.max_grad_norm", ppo.max_grad_norm),
      DEIR_INT("ppo.epochs", ppo.epochs),
      DEIR_INT("ppo.minibatch", ppo.minibatch),
      DEIR_INT("ppo.bptt_len", ppo.bptt_len),
      DEIR_DOUBLE("ppo.adv_momentum", ppo.adv_momentum),
      DEIR_DOUBLE("ppo.lr", ppo.adam.lr),
      DEIR_DOUBLE("ppo.adam_eps", ppo.adam.eps),
      DEIR_DOUBLE("ppo.coef_ext", ppo.coef_ext),
      Entry{"ppo.channels",
            [](ExperimentConfig& c, const std::string& v) { c.policy.encoder.channels = parse_channels("ppo.channels", v); },
            [](const ExperimentConfig& c) { return channels_text(c.policy.encoder.channels); }},
      DEIR_INT("ppo.features", policy.encoder.features),
      DEIR_INT("ppo.head_hidden", policy.head_hidden),
      Entry{"ppo.norm", [](ExperimentConfig& c, const std::string& v) { c.policy.encoder.norm = parse_norm("ppo.norm", v); },
            [](const ExperimentConfig& c) { return norm_text(c.policy.encoder.norm); }},
      Entry{"deir.method",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.novelty.method = novelty::parse_method(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: deir.method: ") + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(novelty::method_name(c.novelty.method)); }},
      DEIR_DOUBLE("deir.beta", ppo.beta),
      DEIR_DOUBLE("deir.epsilon", novelty.epsilon),
      DEIR_INT("deir.queue_size", novelty.queue_size),
      DEIR_DOUBLE("deir.queue_smoothing", novelty.queue_smoothing),
      DEIR_DOUBLE("deir.ir_momentum", novelty.ir_momentum),
      DEIR_INT("deir.epochs", novelty.epochs),
      DEIR_INT("deir.minibatch", novelty.minibatch),
      DEIR_DOUBLE("deir.lr", novelty.adam.lr),
      DEIR_DOUBLE("deir.adam_eps", novelty.adam.eps),
      DEIR_DOUBLE("deir.max_grad_norm", novelty.max_grad_norm),
      Entry{"deir.channels",
            [](ExperimentConfig& c, const std::string& v) {
              c.novelty.model.encoder.channels = parse_channels("deir.channels", v);
            },
            [](const ExperimentConfig& c) { return channels_text(c.novelty.model.encoder.channels); }},
      DEIR_INT("deir.features", novelty.model.encoder.features),
      DEIR_INT("deir.head_hidden", novelty.model.head_hidden),
      Entry{"deir.norm",
            [](ExperimentConfig& c, const std::string& v) { c.novelty.model.encoder.norm = parse_norm("deir.norm", v); },
            [](const ExperimentConfig& c) { return norm_text(c.novelty.model.encoder.norm); }},
      DEIR_INT("run.frames", total_frames),
      Entry{"run.seeds",
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds.clear();
              for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>("run.seeds", s));
            },
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
              return out;
            }},
      Entry{"run.out", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
            [](const ExperimentConfig& c) { return c.out_dir; }},
      DEIR_INT("run.checkpoint_every", checkpoint_every),
      DEIR_INT("run.return_window", return_window),
      DEIR_DOUBLE("run.stop_return", stop_return),
      DEIR_BOOL("run.trace_ir", trace_ir),
  };
  return table;
}

#undef DEIR_DOUBLE
#undef DEIR_INT
#undef DEIR_BOOL

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.policy.encoder.channels = {16, 32, 32};
  c.novelty.model.encoder.channels = {16, 32, 32};
  return c;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const Entry& e : entries())
    if (e.key == key) {
      e.set(cfg, trim(value));
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream text;
  text << in.rdbuf();
  return apply_settings(default_config(), parse_config_text(text.str()));
}

ExperimentConfig apply_settings(ExperimentConfig base, const std::map<std::string, std::string>& settings) {
  for (const auto& [key, value] : settings) apply_setting(base, key, value);
  validate(base);
  return base;
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  try {
    c.env.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require(c.n_workers >= 1, "ppo.workers must be positive");
  require(c.n_steps >= 1, "ppo.steps must be positive");
  require(c.ppo.gamma > 0.0 && c.ppo.gamma <= 1.0, "ppo.gamma must lie in (0, 1]");
  require(c.ppo.gae_lambda >= 0.0 && c.ppo.gae_lambda <= 1.0, "ppo.gae_lambda must lie in [0, 1]");
  require(c.ppo.clip_range > 0.0 && c.ppo.clip_range < 1.0, "ppo.clip must lie in (0, 1)");
  require(c.ppo.ent_coef >= 0.0 && c.ppo.value_coef >= 0.0, "loss coefficients must be non-negative");
  require(c.ppo.max_grad_norm > 0.0 && c.novelty.max_grad_norm > 0.0, "gradient clip norms must be positive");
  require(c.ppo.epochs >= 1 && c.novelty.epochs >= 0, "epoch counts out of range");
  require(c.ppo.minibatch >= 2 && c.novelty.minibatch >= 2, "minibatch sizes must be at least 2");
  require(c.ppo.bptt_len >= 1 && c.n_steps % std::min(c.ppo.bptt_len, c.n_steps) == 0,
          "ppo.bptt_len must divide ppo.steps");
  require(c.ppo.adv_momentum >= 0.0 && c.ppo.adv_momentum < 1.0, "ppo.adv_momentum must lie in [0, 1)");
  require(c.novelty.ir_momentum >= 0.0 && c.novelty.ir_momentum < 1.0, "deir.ir_momentum must lie in [0, 1)");
  require(c.novelty.queue_smoothing >= 0.0 && c.novelty.queue_smoothing <= 1.0,
          "deir.queue_smoothing must lie in [0, 1]");
  require(c.ppo.adam.lr >= 0.0 && c.novelty.adam.lr >= 0.0, "learning rates must be non-negative");
  require(c.ppo.adam.eps > 0.0 && c.novelty.adam.eps > 0.0, "Adam eps must be positive");
  require(c.ppo.beta >= 0.0 && c.ppo.coef_ext >= 0.0, "reward coefficients must be non-negative");
  require(c.novelty.epsilon > 0.0, "deir.epsilon must be positive");
  require(c.novelty.queue_size >= 1, "deir.queue_size must be positive");
  for (const auto* enc : {&c.policy.encoder, &c.novelty.model.encoder}) {
    for (int ch : enc->channels) require(ch >= 1, "channel widths must be positive");
    require(enc->features >= 1, "feature widths must be positive");
  }
  require(c.policy.head_hidden >= 1 && c.novelty.model.head_hidden >= 1, "head widths must be positive");
  require(c.total_frames >= 1, "run.frames must be positive");
  require(!c.seeds.empty(), "run.seeds must list at least one seed");
  require(c.checkpoint_every >= 0, "run.checkpoint_every must be non-negative");
  require(c.return_window >= 1, "run.return_window must be positive");
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace deir::harness

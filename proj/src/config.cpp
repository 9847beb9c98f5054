#include "gyre/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace gyre {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& v) {
  size_t used = 0;
  int out;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

uint64_t parse_u64(const std::string& v) {
  size_t used = 0;
  unsigned long long out;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  }
  if (used != v.size())
    throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  return static_cast<uint64_t>(out);
}

double parse_double(const std::string& v) {
  size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

struct KeyDef {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

KeyDef ikey(const std::string& k, std::function<int&(RunConfig&)> f) {
  return {k,
          [f](const RunConfig& c) { return std::to_string(f(const_cast<RunConfig&>(c))); },
          [f](RunConfig& c, const std::string& v) { f(c) = parse_int(v); }};
}

KeyDef dkey(const std::string& k, std::function<double&(RunConfig&)> f) {
  return {k,
          [f](const RunConfig& c) { return fmt_double(f(const_cast<RunConfig&>(c))); },
          [f](RunConfig& c, const std::string& v) { f(c) = parse_double(v); }};
}

KeyDef bkey(const std::string& k, std::function<bool&(RunConfig&)> f) {
  return {k,
          [f](const RunConfig& c) {
            return std::string(f(const_cast<RunConfig&>(c)) ? "true" : "false");
          },
          [f](RunConfig& c, const std::string& v) { f(c) = parse_bool(v); }};
}

KeyDef ukey(const std::string& k, std::function<uint64_t&(RunConfig&)> f) {
  return {k,
          [f](const RunConfig& c) { return std::to_string(f(const_cast<RunConfig&>(c))); },
          [f](RunConfig& c, const std::string& v) { f(c) = parse_u64(v); }};
}

KeyDef skey(const std::string& k, std::function<std::string&(RunConfig&)> f) {
  return {k, [f](const RunConfig& c) { return f(const_cast<RunConfig&>(c)); },
          [f](RunConfig& c, const std::string& v) { f(c) = v; }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    // `preset` replaces the whole base, so it must precede other keys in a
    // file; config_items lists it first so serialized configs obey that.
    t.push_back({"preset",
                 [](const RunConfig& c) { return c.preset; },
                 [](RunConfig& c, const std::string& v) { c = config_preset(v); }});
    t.push_back({"env.name",
                 [](const RunConfig& c) { return env_name_str(c.env); },
                 [](RunConfig& c, const std::string& v) { c.env = env_name_from(v); }});
    t.push_back(ikey("env.episode_len", [](RunConfig& c) -> int& { return c.episode_len; }));

    t.push_back(ikey("model.dim_q", [](RunConfig& c) -> int& { return c.model.dim_q; }));
    t.push_back(ikey("model.dim_p", [](RunConfig& c) -> int& { return c.model.dim_p; }));
    t.push_back(ikey("model.dim_c", [](RunConfig& c) -> int& { return c.model.dim_c; }));
    t.push_back(ikey("model.enc_width", [](RunConfig& c) -> int& { return c.model.enc_width; }));
    t.push_back(ikey("model.enc_depth", [](RunConfig& c) -> int& { return c.model.enc_depth; }));
    t.push_back(
        ikey("model.head_width", [](RunConfig& c) -> int& { return c.model.head_width; }));
    t.push_back(
        ikey("model.head_depth", [](RunConfig& c) -> int& { return c.model.head_depth; }));
    t.push_back(ikey("model.proj_dim", [](RunConfig& c) -> int& { return c.model.proj_dim; }));
    t.push_back(ikey("model.bin_count", [](RunConfig& c) -> int& { return c.model.bin_count; }));
    t.push_back(dkey("model.bin_lo", [](RunConfig& c) -> double& { return c.model.bin_lo; }));
    t.push_back(dkey("model.bin_hi", [](RunConfig& c) -> double& { return c.model.bin_hi; }));
    t.push_back(bkey("model.geometry", [](RunConfig& c) -> bool& { return c.model.geometry; }));
    t.push_back({"model.memory",
                 [](const RunConfig& c) { return memory_kind_str(c.model.memory_kind); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.memory_kind = memory_kind_from(v);
                 }});
    t.push_back({"model.memory_gate",
                 [](const RunConfig& c) { return gate_kind_str(c.model.memory_gate); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.memory_gate = gate_kind_from(v);
                 }});
    t.push_back(bkey("model.memory_shared_a",
                     [](RunConfig& c) -> bool& { return c.model.memory_shared_a; }));
    t.push_back(ikey("model.mem_dim", [](RunConfig& c) -> int& { return c.model.mem_dim; }));
    t.push_back(
        ikey("model.mem_state_dim", [](RunConfig& c) -> int& { return c.model.mem_state_dim; }));
    t.push_back(
        ikey("model.mem_layers", [](RunConfig& c) -> int& { return c.model.mem_layers; }));
    t.push_back(dkey("model.alpha_start",
                     [](RunConfig& c) -> double& { return c.model.alpha.alpha_start; }));
    t.push_back(dkey("model.alpha_end",
                     [](RunConfig& c) -> double& { return c.model.alpha.alpha_end; }));
    t.push_back(dkey("model.alpha_ramp_begin",
                     [](RunConfig& c) -> double& { return c.model.alpha.ramp_begin; }));
    t.push_back(dkey("model.alpha_ramp_end",
                     [](RunConfig& c) -> double& { return c.model.alpha.ramp_end; }));

    t.push_back(dkey("loss.repr", [](RunConfig& c) -> double& { return c.weights.repr; }));
    t.push_back(dkey("loss.dyn", [](RunConfig& c) -> double& { return c.weights.dyn; }));
    t.push_back(dkey("loss.roll", [](RunConfig& c) -> double& { return c.weights.roll; }));
    t.push_back(dkey("loss.reward", [](RunConfig& c) -> double& { return c.weights.reward; }));
    t.push_back(dkey("loss.value", [](RunConfig& c) -> double& { return c.weights.value; }));
    t.push_back(dkey("loss.policy", [](RunConfig& c) -> double& { return c.weights.policy; }));
    t.push_back(dkey("loss.sa", [](RunConfig& c) -> double& { return c.weights.sa; }));
    t.push_back(dkey("loss.energy", [](RunConfig& c) -> double& { return c.weights.energy; }));
    t.push_back(dkey("loss.ham", [](RunConfig& c) -> double& { return c.weights.ham; }));
    t.push_back(dkey("loss.temp", [](RunConfig& c) -> double& { return c.weights.temp; }));
    t.push_back(
        dkey("loss.decouple", [](RunConfig& c) -> double& { return c.weights.decouple; }));
    t.push_back(
        dkey("loss.c_sparse", [](RunConfig& c) -> double& { return c.weights.c_sparse; }));
    t.push_back(
        dkey("loss.beta_slow", [](RunConfig& c) -> double& { return c.weights.beta_slow; }));
    t.push_back(dkey("loss.warmup_begin",
                     [](RunConfig& c) -> double& { return c.weights.warmup_begin; }));
    t.push_back(
        dkey("loss.warmup_end", [](RunConfig& c) -> double& { return c.weights.warmup_end; }));
    t.push_back(
        dkey("loss.action_eps", [](RunConfig& c) -> double& { return c.loss.action_eps; }));
    t.push_back(dkey("loss.rho_temp", [](RunConfig& c) -> double& { return c.loss.rho_temp; }));
    t.push_back(ikey("loss.rollout_k", [](RunConfig& c) -> int& { return c.loss.rollout_k; }));
    t.push_back(dkey("loss.gamma", [](RunConfig& c) -> double& { return c.loss.gamma; }));
    t.push_back(dkey("loss.lambda", [](RunConfig& c) -> double& { return c.loss.lambda; }));

    t.push_back(ikey("planner.horizon", [](RunConfig& c) -> int& { return c.planner.horizon; }));
    t.push_back(
        ikey("planner.iterations", [](RunConfig& c) -> int& { return c.planner.iterations; }));
    t.push_back(
        ikey("planner.candidates", [](RunConfig& c) -> int& { return c.planner.candidates; }));
    t.push_back(ikey("planner.elites", [](RunConfig& c) -> int& { return c.planner.elites; }));
    t.push_back(dkey("planner.temperature",
                     [](RunConfig& c) -> double& { return c.planner.temperature; }));
    t.push_back(
        dkey("planner.init_std", [](RunConfig& c) -> double& { return c.planner.init_std; }));
    t.push_back(
        dkey("planner.min_std", [](RunConfig& c) -> double& { return c.planner.min_std; }));
    t.push_back(ikey("planner.policy_candidates",
                     [](RunConfig& c) -> int& { return c.planner.policy_candidates; }));
    t.push_back(dkey("planner.explore_std",
                     [](RunConfig& c) -> double& { return c.planner.explore_std; }));
    t.push_back(dkey("planner.gamma", [](RunConfig& c) -> double& { return c.planner.gamma; }));
    t.push_back(
        bkey("planner.warm_start", [](RunConfig& c) -> bool& { return c.planner.warm_start; }));

    t.push_back(
        ikey("trainer.total_steps", [](RunConfig& c) -> int& { return c.trainer.total_steps; }));
    t.push_back(
        ikey("trainer.seed_steps", [](RunConfig& c) -> int& { return c.trainer.seed_steps; }));
    t.push_back(
        ikey("trainer.train_every", [](RunConfig& c) -> int& { return c.trainer.train_every; }));
    t.push_back(
        ikey("trainer.grad_steps", [](RunConfig& c) -> int& { return c.trainer.grad_steps; }));
    t.push_back(
        ikey("trainer.batch_size", [](RunConfig& c) -> int& { return c.trainer.batch_size; }));
    t.push_back(ikey("trainer.seq_len", [](RunConfig& c) -> int& { return c.trainer.seq_len; }));
    t.push_back(ikey("trainer.buffer_capacity",
                     [](RunConfig& c) -> int& { return c.trainer.buffer_capacity; }));
    t.push_back(dkey("trainer.lr", [](RunConfig& c) -> double& { return c.trainer.lr; }));
    t.push_back(dkey("trainer.weight_decay",
                     [](RunConfig& c) -> double& { return c.trainer.weight_decay; }));
    t.push_back(
        dkey("trainer.grad_clip", [](RunConfig& c) -> double& { return c.trainer.grad_clip; }));
    t.push_back(dkey("trainer.tau", [](RunConfig& c) -> double& { return c.trainer.tau; }));
    t.push_back(
        ikey("trainer.eval_every", [](RunConfig& c) -> int& { return c.trainer.eval_every; }));
    t.push_back(ikey("trainer.eval_episodes",
                     [](RunConfig& c) -> int& { return c.trainer.eval_episodes; }));
    t.push_back(ukey("trainer.seed", [](RunConfig& c) -> uint64_t& { return c.trainer.seed; }));

    t.push_back(ikey("diag.episodes", [](RunConfig& c) -> int& { return c.diag.episodes; }));
    t.push_back(ikey("diag.steps", [](RunConfig& c) -> int& { return c.diag.steps; }));
    t.push_back(
        dkey("diag.kick_scale", [](RunConfig& c) -> double& { return c.diag.kick_scale; }));

    t.push_back(skey("run.out_root", [](RunConfig& c) -> std::string& { return c.out_root; }));
    return t;
  }();
  return table;
}

}  // namespace

void DiagSettings::validate() const {
  if (episodes < 1) throw std::invalid_argument("diag.episodes must be >= 1");
  if (steps < 1) throw std::invalid_argument("diag.steps must be >= 1");
  if (kick_scale < 0.0) throw std::invalid_argument("diag.kick_scale must be >= 0");
}

void RunConfig::validate() const {
  EnvSpec spec = config_env_spec(*this);  // validates env.name / episode_len
  ModelConfig mc = model;
  mc.obs_dim = spec.obs_dim;
  mc.act_dim = spec.act_dim;
  mc.validate();

  const double ws[] = {weights.repr,   weights.dyn,      weights.roll,     weights.reward,
                       weights.value,  weights.policy,   weights.sa,       weights.energy,
                       weights.ham,    weights.temp,     weights.decouple, weights.c_sparse,
                       weights.beta_slow};
  for (double w : ws)
    if (w < 0.0) throw std::invalid_argument("loss weights must be >= 0");
  if (!(weights.warmup_begin >= 0.0 && weights.warmup_begin < weights.warmup_end &&
        weights.warmup_end <= 1.0))
    throw std::invalid_argument("loss warmup window must satisfy 0 <= begin < end <= 1");
  if (loss.action_eps < 0.0) throw std::invalid_argument("loss.action_eps must be >= 0");
  if (loss.rho_temp <= 0.0) throw std::invalid_argument("loss.rho_temp must be > 0");
  if (loss.rollout_k < 1) throw std::invalid_argument("loss.rollout_k must be >= 1");
  if (!(loss.gamma > 0.0 && loss.gamma <= 1.0))
    throw std::invalid_argument("loss.gamma must be in (0,1]");
  if (!(loss.lambda >= 0.0 && loss.lambda <= 1.0))
    throw std::invalid_argument("loss.lambda must be in [0,1]");

  planner.validate();
  trainer.validate();
  diag.validate();
  if (out_root.empty()) throw std::invalid_argument("run.out_root must not be empty");
}

RunConfig config_preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    // struct defaults are the desk scale; the planner is trimmed so a full
    // training run fits a single core
    c.planner.horizon = 5;
    c.planner.iterations = 4;
    c.planner.candidates = 40;
    c.planner.elites = 8;
    c.planner.policy_candidates = 8;
  } else if (name == "paper") {
    c.model.dim_q = 8;
    c.model.dim_p = 8;
    c.model.dim_c = 32;
    c.model.enc_width = 128;
    c.model.head_width = 128;
    c.model.mem_dim = 128;
    c.model.mem_state_dim = 128;
    c.model.mem_layers = 2;
    c.trainer.total_steps = 100000;
    c.trainer.seed_steps = 5000;
    c.trainer.batch_size = 128;
    c.trainer.buffer_capacity = 100000;
    c.trainer.eval_every = 5000;
    // PlannerConfig defaults already carry the source-scale CEM settings
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  c.preset = name;
  return c;
}

void config_set(RunConfig& c, const std::string& key, const std::string& value) {
  for (const KeyDef& kd : key_table()) {
    if (kd.key != key) continue;
    try {
      kd.set(c, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(key + ": " + e.what());
    }
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

void config_set_line(RunConfig& c, const std::string& line) {
  std::string body = line.substr(0, line.find('#'));
  const size_t eq = body.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("expected key = value, got: " + trim(line));
  config_set(c, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
}

RunConfig config_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  RunConfig c = config_preset("desk");
  std::string line;
  bool saw_key = false;
  while (std::getline(in, line)) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const size_t eq = body.find('=');
    const std::string key = eq == std::string::npos ? body : trim(body.substr(0, eq));
    if (key == "preset" && saw_key)
      throw std::invalid_argument("preset must come before other keys: " + path);
    config_set_line(c, body);
    if (key != "preset") saw_key = true;
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyDef& kd : key_table()) out.emplace_back(kd.key, kd.get(c));
  return out;
}

std::string config_text(const RunConfig& c) {
  std::ostringstream out;
  for (const auto& [k, v] : config_items(c)) out << k << " = " << v << "\n";
  return out.str();
}

EnvSpec config_env_spec(const RunConfig& c) {
  EnvSpec spec = make_env_spec(c.env);
  if (c.episode_len < 0) throw std::invalid_argument("env.episode_len must be >= 0");
  if (c.episode_len > 0) spec.episode_len = c.episode_len;
  spec.validate();
  return spec;
}

WorldModel config_build_model(const RunConfig& c, Rng& rng) {
  const EnvSpec spec = config_env_spec(c);
  ModelConfig mc = c.model;
  mc.obs_dim = spec.obs_dim;
  mc.act_dim = spec.act_dim;
  return model_make(mc, rng);
}

}  // namespace gyre

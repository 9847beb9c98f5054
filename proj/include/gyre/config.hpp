#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gyre/diagnostics.hpp"

// Run configuration: one flat, dotted key=value namespace covering the
// environment, model, losses, planner, trainer, and diagnostics blocks.
// Presets fill every field; files and overrides then adjust individual keys.
// The same key table drives parsing and serialization, so a resolved config
// echoes back byte-for-byte parseable.

namespace gyre {

struct DiagSettings {
  int episodes = 10;
  int steps = 200;
  double kick_scale = 5.0;

  void validate() const;
};

struct RunConfig {
  std::string preset = "desk";  // name of the base the other fields started from
  EnvName env = EnvName::PendulumSwingup;
  int episode_len = 0;  // 0 keeps the environment default
  ModelConfig model;    // obs_dim/act_dim stay 0 here; the env fills them at build time
  LossWeights weights;
  LossConfig loss;
  PlannerConfig planner;
  TrainerConfig trainer;
  DiagSettings diag;
  std::string out_root = "runs";

  void validate() const;
};

// "desk" (default scale, runs on one core) or "paper" (source-scale dims and
// budgets). Throws for unknown names.
RunConfig config_preset(const std::string& name);

// Applies one `key=value` or (key, value) override; throws naming the key
// for unknown keys, bad values, or type mismatches.
void config_set(RunConfig& c, const std::string& key, const std::string& value);
void config_set_line(RunConfig& c, const std::string& line);

// Reads a flat key=value file ('#' comments, blank lines ignored). A
// `preset = name` line must come before any other key since it replaces the
// whole base. The result is validated.
RunConfig config_load(const std::string& path);

// Every key with its current value, in fixed order; doubles are printed
// with enough digits to round-trip exactly.
std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& c);
std::string config_text(const RunConfig& c);

// Environment spec for the configured task (episode_len override applied).
EnvSpec config_env_spec(const RunConfig& c);

// Builds the model with obs/act dims taken from the environment.
WorldModel config_build_model(const RunConfig& c, Rng& rng);

}  // namespace gyre

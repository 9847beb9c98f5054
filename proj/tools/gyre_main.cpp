#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gyre/diagnostics.hpp"
#include "gyre/io.hpp"

using namespace gyre;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig c;
  if (!o.config_file.empty())
    c = config_load(o.config_file);
  else
    c = config_preset(o.preset.empty() ? "desk" : o.preset);
  for (const std::string& s : o.sets) config_set_line(c, s);
  c.validate();
  return c;
}

std::string resolve_out_root(const CommonOpts& o, const RunConfig& c) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("GYRE_OUT_ROOT"); env && *env) return env;
  return c.out_root;
}

Tensor2 row_from(const std::vector<double>& v) {
  Tensor2 t(1, static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) t.at(0, static_cast<int>(i)) = v[i];
  return t;
}

std::vector<double> to_vector(const Tensor2& row) {
  std::vector<double> v(row.cols);
  for (int j = 0; j < row.cols; ++j) v[j] = row.at(0, j);
  return v;
}

void check_env_match(const WorldModel& m, const EnvSpec& spec) {
  if (m.cfg.obs_dim != spec.obs_dim || m.cfg.act_dim != spec.act_dim)
    throw std::invalid_argument(
        "checkpoint dimensions (" + std::to_string(m.cfg.obs_dim) + "," +
        std::to_string(m.cfg.act_dim) + ") do not match environment " + env_name_str(spec.name));
}

// One planner-driven episode, recorded step by step.
ReplayEpisode collect_policy_episode(const WorldModel& m, const Env& env,
                                     const PlannerConfig& pc, uint64_t seed) {
  auto [state, obs] = env.reset(seed);
  MemoryState mem = mem_init(m.memory, 1);
  const double alpha = alpha_at(m.cfg.alpha, 1.0);
  ReplayEpisode ep;
  ep.obs.push_back(row_from(obs));
  for (int t = 0;; ++t) {
    Tensor2 z = encode(m, ep.obs.back());
    ModelDynamics dyn(m, z, mem, alpha);
    Tensor2 a = planner_act(dyn, pc, ActMode::Eval, derive_seed(seed, "eval-plan", t));
    mem = mem_step(m.memory, z, a, mem).next;
    StepOut so = env.step(state, to_vector(a));
    ep.act.push_back(a);
    ep.rew.push_back(so.reward);
    ep.obs.push_back(row_from(so.obs));
    state = so.state;
    if (so.done) break;
  }
  return ep;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / (v.size() - 1));
}

std::string fmt(double x) { return format_double(x); }

// ---- train ---------------------------------------------------------------

int cmd_train(const CommonOpts& com, const std::string& command) {
  RunConfig c = resolve_config(com);
  std::string dir = make_run_dir(resolve_out_root(com, c), "train", c.trainer.seed);
  std::cout << "run dir: " << dir << "\n";

  EnvSpec spec = config_env_spec(c);
  Env env(spec);
  Rng mrng(derive_seed(c.trainer.seed, "model-init"));
  WorldModel m = config_build_model(c, mrng);

  std::vector<std::string> outputs;
  auto hook = [&](int step, const WorldModel& mm) {
    std::string name = "ckpt-" + std::to_string(step) + ".bin";
    save_checkpoint(dir + "/" + name, mm);
    if (std::find(outputs.begin(), outputs.end(), name) == outputs.end())
      outputs.push_back(name);
    std::cout << "step " << step << "/" << c.trainer.total_steps << ": saved " << name
              << std::endl;
  };
  TrainResult res = train_run(m, env, c.trainer, c.weights, c.loss, c.planner, hook);

  save_checkpoint(dir + "/ckpt-final.bin", m);
  outputs.push_back("ckpt-final.bin");

  {
    CsvWriter w(dir + "/metrics.csv", metric_columns());
    size_t i = 0, j = 0;
    while (i < res.rows.size() || j < res.evals.size()) {
      if (j >= res.evals.size() ||
          (i < res.rows.size() && res.rows[i].env_step <= res.evals[j].env_step))
        w.row(metric_row(res.rows[i++]));
      else
        w.row(eval_metric_row(res.evals[j++]));
    }
    outputs.push_back("metrics.csv");
  }

  json summary;
  summary["episodes"] = res.episodes;
  summary["update_calls"] = res.update_calls;
  json evals = json::array();
  for (const EvalPoint& e : res.evals)
    evals.push_back(json{{"env_step", e.env_step}, {"mean_return", e.mean_return}});
  summary["evals"] = std::move(evals);
  if (!res.evals.empty()) summary["final_eval_return"] = res.evals.back().mean_return;
  write_text_file(dir + "/summary.json", summary.dump(2) + "\n");
  outputs.push_back("summary.json");

  write_manifest(dir, command, c, outputs);
  for (const EvalPoint& e : res.evals)
    std::cout << "eval @ " << e.env_step << ": " << e.mean_return << "\n";
  std::cout << "done: " << res.episodes << " episodes, " << res.update_calls
            << " gradient updates\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const CommonOpts& com, const std::string& command, const std::string& ckpt,
             int episodes) {
  RunConfig c = resolve_config(com);
  if (episodes <= 0) episodes = c.trainer.eval_episodes;
  WorldModel m = load_checkpoint(ckpt);
  EnvSpec spec = config_env_spec(c);
  check_env_match(m, spec);
  Env env(spec);

  std::string dir = make_run_dir(resolve_out_root(com, c), "eval", c.trainer.seed);
  std::cout << "run dir: " << dir << "\n";

  std::vector<double> returns;
  CsvWriter w(dir + "/eval.csv", {"episode", "seed", "return"});
  for (int e = 0; e < episodes; ++e) {
    uint64_t seed = derive_seed(c.trainer.seed, "cli-eval", e);
    double ret = eval_episode(m, env, c.planner, 1.0, seed);
    returns.push_back(ret);
    w.row_text({std::to_string(e), std::to_string(seed), fmt(ret)});
  }

  json summary;
  summary["checkpoint"] = ckpt;
  summary["episodes"] = episodes;
  summary["mean_return"] = mean_of(returns);
  summary["std_return"] = std_of(returns);
  summary["returns"] = returns;
  write_text_file(dir + "/summary.json", summary.dump(2) + "\n");

  write_manifest(dir, command, c, {"eval.csv", "summary.json"});
  std::cout << "mean return over " << episodes << " episodes: " << mean_of(returns) << " (std "
            << std_of(returns) << ")\n";
  return 0;
}

// ---- ood -------------------------------------------------------------------

int cmd_ood(const CommonOpts& com, const std::string& command,
            const std::vector<std::string>& ckpts, int episodes) {
  RunConfig c = resolve_config(com);
  if (episodes <= 0) episodes = c.trainer.eval_episodes;
  EnvSpec spec = config_env_spec(c);

  std::vector<WorldModel> models;
  models.reserve(ckpts.size());
  for (const std::string& p : ckpts) {
    models.push_back(load_checkpoint(p));
    check_env_match(models.back(), spec);
  }
  std::vector<const WorldModel*> views;
  for (const WorldModel& m : models) views.push_back(&m);

  std::vector<Perturbation> conditions = {
      {PerturbKind::MassScale, 1.0, 0.0, 0},    // identity control row
      {PerturbKind::MassScale, 0.7, 0.0, 0},    {PerturbKind::MassScale, 1.3, 0.0, 0},
      {PerturbKind::DampingScale, 0.5, 0.0, 0}, {PerturbKind::DampingScale, 2.0, 0.0, 0},
      {PerturbKind::ActionDelay, 2.0, 0.0, 0},  {PerturbKind::ObsMask, 1.0, 0.3, 0},
  };

  OodReport rep = ood_evaluate(views, spec, conditions, c.planner, episodes,
                               derive_seed(c.trainer.seed, "cli-ood"));

  std::string dir = make_run_dir(resolve_out_root(com, c), "ood", c.trainer.seed);
  std::cout << "run dir: " << dir << "\n";

  std::vector<std::string> cols = {"condition", "identity"};
  for (size_t i = 0; i < models.size(); ++i) cols.push_back("return_" + std::to_string(i));
  for (size_t i = 0; i < models.size(); ++i) cols.push_back("retention_" + std::to_string(i));
  cols.push_back("mean_return");
  cols.push_back("mean_retention");
  CsvWriter w(dir + "/ood.csv", cols);
  for (const OodRow& r : rep.rows) {
    std::vector<std::string> cells = {r.label, r.identity ? "1" : "0"};
    for (double x : r.seed_return) cells.push_back(fmt(x));
    for (double x : r.seed_retention) cells.push_back(fmt(x));
    cells.push_back(fmt(r.mean_return));
    cells.push_back(fmt(r.mean_retention));
    w.row_text(cells);
    std::cout << r.label << ": return " << r.mean_return << ", retention " << r.mean_retention
              << "%\n";
  }

  json j;
  j["checkpoints"] = ckpts;
  j["episodes"] = rep.episodes;
  j["id_return"] = rep.id_return;
  json rows = json::array();
  for (const OodRow& r : rep.rows)
    rows.push_back(json{{"label", r.label},
                        {"identity", r.identity},
                        {"seed_return", r.seed_return},
                        {"seed_retention", r.seed_retention},
                        {"mean_return", r.mean_return},
                        {"mean_retention", r.mean_retention}});
  j["rows"] = std::move(rows);
  write_text_file(dir + "/ood.json", j.dump(2) + "\n");

  write_manifest(dir, command, c, {"ood.csv", "ood.json"});
  return 0;
}

// ---- diagnose ----------------------------------------------------------------

int cmd_diagnose(const CommonOpts& com, const std::string& command, const std::string& ckpt) {
  RunConfig c = resolve_config(com);
  WorldModel m = load_checkpoint(ckpt);
  EnvSpec spec = config_env_spec(c);
  check_env_match(m, spec);
  Env env(spec);
  const int steps = std::min(c.diag.steps, spec.episode_len);
  const uint64_t seed = c.trainer.seed;

  std::string dir = make_run_dir(resolve_out_root(com, c), "diagnose", seed);
  std::cout << "run dir: " << dir << "\n";
  std::vector<std::string> outputs;

  // Same trace seed for both free-run regimes: identical kick states, so the
  // drift comparison is paired.
  EnergyTraceSet quiet = energy_trace(m, env, Regime::NoAction, c.diag.episodes, steps,
                                      c.diag.kick_scale, derive_seed(seed, "diag-trace"));
  EnergyTraceSet noisy = energy_trace(m, env, Regime::RandomAction, c.diag.episodes, steps,
                                      c.diag.kick_scale, derive_seed(seed, "diag-trace"));
  EnergyTraceSet policy = energy_trace(m, env, Regime::PolicyRollout, c.diag.episodes, steps,
                                       c.diag.kick_scale, derive_seed(seed, "diag-trace"), 1.0,
                                       &c.planner);
  for (const EnergyTraceSet* ts : {&quiet, &noisy, &policy}) {
    std::string name = "energy_" + regime_str(ts->regime) + ".csv";
    CsvWriter w(dir + "/" + name, {"episode", "t", "h"});
    for (size_t e = 0; e < ts->episodes.size(); ++e)
      for (size_t t = 0; t < ts->episodes[e].h.size(); ++t)
        w.row({static_cast<double>(e), static_cast<double>(t), ts->episodes[e].h[t]});
    outputs.push_back(name);
  }

  std::vector<ReplayEpisode> eps;
  for (int e = 0; e < c.diag.episodes; ++e)
    eps.push_back(collect_policy_episode(m, env, c.planner, derive_seed(seed, "diag-ep", e)));

  std::vector<PushRecord> recs = push_records(m, eps);
  {
    CsvWriter w(dir + "/push.csv", {"episode", "t", "push", "dh"});
    size_t i = 0;
    for (size_t e = 0; e < eps.size(); ++e)
      for (int t = 0; t < eps[e].steps(); ++t, ++i)
        w.row({static_cast<double>(e), static_cast<double>(t), recs[i].push, recs[i].dh});
    outputs.push_back("push.csv");
  }
  PushMetrics pm = push_metrics(recs);

  double max_adh = 0.0;
  for (const PushRecord& r : recs) max_adh = std::max(max_adh, std::abs(r.dh));
  CrossingCurve curve;
  bool have_curve = max_adh > 0.0;
  if (have_curve) {
    std::vector<double> thresholds;
    for (int i = 1; i <= 19; ++i) thresholds.push_back(max_adh * i / 20.0);
    curve = crossing_rate_curve(recs, thresholds);
    CsvWriter w(dir + "/crossing.csv", {"threshold", "rate_high", "rate_low"});
    for (size_t i = 0; i < curve.thresholds.size(); ++i)
      w.row({curve.thresholds[i], curve.rate_high[i], curve.rate_low[i]});
    outputs.push_back("crossing.csv");
  }

  RolloutMse mse = rollout_mse(m, eps, {1, 2, 3, 4, 5, 6, 7, 8});
  {
    CsvWriter w(dir + "/mse.csv", {"k", "mse"});
    for (size_t i = 0; i < mse.ks.size(); ++i)
      w.row({static_cast<double>(mse.ks[i]), mse.mse[i]});
    outputs.push_back("mse.csv");
  }

  DriftBoundParams dp = drift_bound_params(m, eps);

  json summary;
  summary["checkpoint"] = ckpt;
  summary["energy"] = json{{"no_action_median_drift", quiet.median_drift()},
                           {"random_action_median_drift", noisy.median_drift()},
                           {"policy_median_drift", policy.median_drift()},
                           {"episodes", c.diag.episodes},
                           {"steps", steps},
                           {"kick_scale", c.diag.kick_scale}};
  summary["push"] = json{{"corr_sign", pm.corr_sign},
                         {"corr_abs", pm.corr_abs},
                         {"sign_defined", pm.sign_defined},
                         {"abs_defined", pm.abs_defined},
                         {"steps", pm.steps}};
  if (have_curve)
    summary["crossing"] = json{{"lift_auc", curve.lift_auc},
                               {"median_abs_push", curve.median_abs_push},
                               {"high_count", curve.high_count},
                               {"low_count", curve.low_count}};
  summary["rollout_mse"] = json{{"ks", mse.ks},
                                {"mse", mse.mse},
                                {"starts", mse.starts},
                                {"episodes_used", mse.episodes_used},
                                {"episodes_skipped", mse.episodes_skipped}};
  summary["drift_bound"] = json{
      {"m_delta", dp.m_delta}, {"m_u", dp.m_u}, {"l_h", dp.l_h}, {"c_h", dp.c_h},
      {"steps", dp.steps}};
  // Orientation values observed in full-scale reference runs; descriptive
  // context only, never a pass/fail gate.
  summary["reference_context"] =
      json{{"note", "typical full-scale magnitudes for orientation; not thresholds"},
           {"corr_sign", 0.757},
           {"corr_abs", 0.745},
           {"lift_auc", 0.595},
           {"median_drift", 0.01}};
  write_text_file(dir + "/summary.json", summary.dump(2) + "\n");
  outputs.push_back("summary.json");

  write_manifest(dir, command, c, outputs);
  std::cout << "median drift: no-action " << quiet.median_drift() << ", random "
            << noisy.median_drift() << ", policy " << policy.median_drift() << "\n";
  std::cout << "push corr: sign " << pm.corr_sign << ", abs " << pm.corr_abs << " over "
            << pm.steps << " steps\n";
  if (have_curve) std::cout << "crossing lift AUC: " << curve.lift_auc << "\n";
  return 0;
}

// ---- bound-check -----------------------------------------------------------

int cmd_bound_check(const CommonOpts& com, const std::string& command) {
  RunConfig c = resolve_config(com);
  std::string dir = make_run_dir(resolve_out_root(com, c), "bound-check", c.trainer.seed);
  std::cout << "run dir: " << dir << "\n";

  struct Fixture {
    double lips;
    double step_err;
  };
  const std::vector<Fixture> fixtures = {{0.5, 0.1}, {1.0, 0.1}, {1.2, 0.05}};
  const int dim = 4, k_max = 7;

  CsvWriter w(dir + "/bound.csv",
              {"fixture", "k", "measured", "bound", "satisfied"});
  json jfix = json::array();
  bool all_ok = true;
  Rng rng(derive_seed(c.trainer.seed, "bound-starts"));
  for (const Fixture& f : fixtures) {
    // Linear contraction with a constant offset: the one-step error is
    // exactly step_err everywhere and every expansion ratio is exactly lips.
    auto true_map = [&f](const Tensor2& z) {
      Tensor2 out = z;
      for (double& x : out.data) x *= f.lips;
      return out;
    };
    auto learned_map = [&f](const Tensor2& z) {
      Tensor2 out = z;
      for (double& x : out.data) x *= f.lips;
      out.at(0, 0) += f.step_err;
      return out;
    };
    std::vector<Tensor2> starts;
    for (int s = 0; s < 5; ++s) starts.push_back(rng.gaussian_tensor(1, dim, 0.0, 1.0));

    BoundReport rep = bound_check(true_map, learned_map, starts, k_max);
    std::string label = "L" + fmt(f.lips) + "-eps" + fmt(f.step_err);
    for (const BoundRow& r : rep.rows)
      w.row_text({label, std::to_string(r.k), fmt(r.measured), fmt(r.bound),
                  r.satisfied ? "1" : "0"});
    json jf;
    jf["label"] = label;
    jf["lipschitz_nominal"] = f.lips;
    jf["step_error_nominal"] = f.step_err;
    jf["eps_measured"] = rep.eps;
    jf["L_measured"] = rep.L;
    jf["l_probe"] = rep.l_probe;
    jf["l_segment"] = rep.l_segment;
    json rows = json::array();
    for (const BoundRow& r : rep.rows)
      rows.push_back(json{
          {"k", r.k}, {"measured", r.measured}, {"bound", r.bound}, {"satisfied", r.satisfied}});
    jf["rows"] = std::move(rows);
    jf["all_satisfied"] = rep.all_satisfied;
    jfix.push_back(std::move(jf));
    all_ok = all_ok && rep.all_satisfied;
    std::cout << label << ": " << (rep.all_satisfied ? "satisfied" : "VIOLATED")
              << " (eps " << rep.eps << ", L " << rep.L << ")\n";
  }
  json j;
  j["fixtures"] = std::move(jfix);
  j["all_satisfied"] = all_ok;
  write_text_file(dir + "/bound.json", j.dump(2) + "\n");

  write_manifest(dir, command, c, {"bound.csv", "bound.json"});
  return all_ok ? 0 : 1;
}

// ---- export-latents ---------------------------------------------------------

int cmd_export_latents(const CommonOpts& com, const std::string& command,
                       const std::string& ckpt, int episodes) {
  RunConfig c = resolve_config(com);
  if (episodes <= 0) episodes = c.trainer.eval_episodes;
  WorldModel m = load_checkpoint(ckpt);
  EnvSpec spec = config_env_spec(c);
  check_env_match(m, spec);
  Env env(spec);

  std::string dir = make_run_dir(resolve_out_root(com, c), "export-latents", c.trainer.seed);
  std::cout << "run dir: " << dir << "\n";

  std::vector<std::string> cols = {"episode", "t"};
  for (int i = 0; i < m.cfg.dim_q; ++i) cols.push_back("q" + std::to_string(i));
  for (int i = 0; i < m.cfg.dim_p; ++i) cols.push_back("p" + std::to_string(i));
  for (int i = 0; i < m.cfg.dim_c; ++i) cols.push_back("c" + std::to_string(i));
  for (int i = 0; i < m.cfg.act_dim; ++i) cols.push_back("a" + std::to_string(i));
  cols.push_back("reward");
  CsvWriter w(dir + "/latents.csv", cols);

  for (int e = 0; e < episodes; ++e) {
    ReplayEpisode ep =
        collect_policy_episode(m, env, c.planner, derive_seed(c.trainer.seed, "latents-ep", e));
    for (int t = 0; t < ep.steps(); ++t) {
      Tensor2 z = encode(m, ep.obs[t]);
      std::vector<double> row = {static_cast<double>(e), static_cast<double>(t)};
      for (int j = 0; j < z.cols; ++j) row.push_back(z.at(0, j));
      for (int j = 0; j < ep.act[t].cols; ++j) row.push_back(ep.act[t].at(0, j));
      row.push_back(ep.rew[t]);
      w.row(row);
    }
  }

  write_manifest(dir, command, c, {"latents.csv"});
  std::cout << "wrote latent trajectories for " << episodes << " episodes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured world-model engine: train, evaluate, and analyze"};
  app.require_subcommand(1);

  CommonOpts com;
  std::string ckpt;
  std::vector<std::string> ckpts;
  int episodes = 0;

  auto add_common = [&com](CLI::App* sub) {
    auto* p = sub->add_option("-p,--preset", com.preset, "configuration preset (desk, paper)");
    auto* f = sub->add_option("-c,--config", com.config_file, "key=value configuration file");
    p->excludes(f);
    sub->add_option("-s,--set", com.sets, "override a key, e.g. -s trainer.lr=3e-4");
    sub->add_option("-o,--out", com.out, "output root (default $GYRE_OUT_ROOT, then run.out_root)");
  };

  CLI::App* train = app.add_subcommand("train", "train a model from scratch");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "run evaluation episodes from a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", ckpt, "model checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episode count (default trainer.eval_episodes)");

  CLI::App* ood = app.add_subcommand("ood", "zero-shot robustness sweep over a checkpoint set");
  add_common(ood);
  ood->add_option("--checkpoint", ckpts, "model checkpoint file (repeat for several)")
      ->required();
  ood->add_option("--episodes", episodes, "episodes per condition per checkpoint");

  CLI::App* diag = app.add_subcommand("diagnose", "mechanism analyses on a trained checkpoint");
  add_common(diag);
  diag->add_option("--checkpoint", ckpt, "model checkpoint file")->required();

  CLI::App* bound = app.add_subcommand("bound-check", "error-propagation bound on exact fixtures");
  add_common(bound);

  CLI::App* expl = app.add_subcommand("export-latents", "dump planner-episode latent trajectories");
  add_common(expl);
  expl->add_option("--checkpoint", ckpt, "model checkpoint file")->required();
  expl->add_option("--episodes", episodes, "episode count (default trainer.eval_episodes)");

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (int i = 0; i < argc; ++i) command += std::string(i ? " " : "") + argv[i];

  try {
    if (app.got_subcommand(train)) return cmd_train(com, command);
    if (app.got_subcommand(eval)) return cmd_eval(com, command, ckpt, episodes);
    if (app.got_subcommand(ood)) return cmd_ood(com, command, ckpts, episodes);
    if (app.got_subcommand(diag)) return cmd_diagnose(com, command, ckpt);
    if (app.got_subcommand(bound)) return cmd_bound_check(com, command);
    if (app.got_subcommand(expl)) return cmd_export_latents(com, command, ckpt, episodes);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

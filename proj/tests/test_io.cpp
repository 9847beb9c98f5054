#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "gyre/io.hpp"

using namespace gyre;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& stem) {
  static int counter = 0;
  return (fs::temp_directory_path() / (stem + "_" + std::to_string(counter++))).string();
}

WorldModel sample_model(ModelConfig cfg, uint64_t seed) {
  cfg.obs_dim = 3;
  cfg.act_dim = 1;
  Rng rng(seed);
  return model_make(cfg, rng);
}

void check_bit_identical(WorldModel& a, WorldModel& b) {
  auto ta = model_all_tensors(a);
  auto tb = model_all_tensors(b);
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) {
    CAPTURE(ta[i].first);
    CHECK(ta[i].first == tb[i].first);
    CHECK(bit_equal(*ta[i].second, *tb[i].second));
  }
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit exact") {
  ModelConfig cfg;
  cfg.dim_q = 3;
  cfg.dim_p = 3;
  cfg.dim_c = 4;
  cfg.enc_width = 16;
  cfg.head_width = 12;
  cfg.mem_dim = 8;
  cfg.mem_state_dim = 8;
  WorldModel m = sample_model(cfg, 42);

  std::string path = temp_path("gyre_ckpt");
  save_checkpoint(path, m);
  WorldModel back = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(back.cfg.obs_dim == m.cfg.obs_dim);
  CHECK(back.cfg.act_dim == m.cfg.act_dim);
  CHECK(back.cfg.dim_q == m.cfg.dim_q);
  CHECK(back.cfg.dim_c == m.cfg.dim_c);
  CHECK(back.cfg.geometry == m.cfg.geometry);
  CHECK(back.cfg.memory_kind == m.cfg.memory_kind);
  CHECK(back.cfg.alpha.alpha_start == m.cfg.alpha.alpha_start);
  CHECK(back.cfg.alpha.ramp_end == m.cfg.alpha.ramp_end);
  check_bit_identical(m, back);
}

TEST_CASE("checkpoint round-trip covers model variants") {
  ModelConfig plain;
  plain.geometry = false;
  SUBCASE("geometry off") {}
  SUBCASE("gru memory") { plain.memory_kind = MemoryKind::Gru; }
  SUBCASE("no memory") { plain.memory_kind = MemoryKind::None; }
  SUBCASE("silu gate, shared decay") {
    plain.memory_gate = GateKind::Silu;
    plain.memory_shared_a = true;
  }
  plain.dim_q = 2;
  plain.dim_p = 2;
  plain.dim_c = 3;
  WorldModel m = sample_model(plain, 99);

  std::string path = temp_path("gyre_ckpt_variant");
  save_checkpoint(path, m);
  WorldModel back = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(back.cfg.geometry == m.cfg.geometry);
  CHECK(back.cfg.memory_kind == m.cfg.memory_kind);
  CHECK(back.cfg.memory_gate == m.cfg.memory_gate);
  CHECK(back.cfg.memory_shared_a == m.cfg.memory_shared_a);
  check_bit_identical(m, back);
}

TEST_CASE("loading a trained-and-saved model preserves predictions") {
  ModelConfig cfg;
  cfg.dim_q = 2;
  cfg.dim_p = 2;
  cfg.dim_c = 2;
  WorldModel m = sample_model(cfg, 5);
  Tensor2 obs(1, 3);
  obs.at(0, 0) = 0.3;
  obs.at(0, 1) = -0.8;
  obs.at(0, 2) = 1.1;
  Tensor2 z = encode(m, obs);
  Tensor2 h = hamiltonian_energy(m, latent_qp(m.cfg, z));

  std::string path = temp_path("gyre_ckpt_pred");
  save_checkpoint(path, m);
  WorldModel back = load_checkpoint(path);
  std::remove(path.c_str());

  Tensor2 z2 = encode(back, obs);
  CHECK(bit_equal(z2, z));
  CHECK(bit_equal(hamiltonian_energy(back, latent_qp(back.cfg, z2)), h));
}

TEST_CASE("corrupt checkpoints are rejected") {
  ModelConfig cfg;
  cfg.dim_q = 2;
  cfg.dim_p = 2;
  cfg.dim_c = 2;
  WorldModel m = sample_model(cfg, 8);
  std::string path = temp_path("gyre_ckpt_bad");
  save_checkpoint(path, m);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(path + ".nope"), std::runtime_error);
  }
  SUBCASE("wrong magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not a model checkpoint"),
                         std::runtime_error);
  }
  SUBCASE("future version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    uint32_t v = 9;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 16);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("trailing garbage") {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.write("xx", 2);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("trailing"), std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv writer formats rows and hides missing values") {
  std::string path = temp_path("gyre_csv");
  {
    CsvWriter w(path, {"step", "loss", "note"});
    w.row({1.0, 0.5, 7.0});
    w.row({2.0, std::numeric_limits<double>::quiet_NaN(), -3.25});
    w.row_text({"3", "skipped", "free text"});
    CHECK_THROWS_AS(w.row({1.0}), std::invalid_argument);
  }
  std::string text = read_text_file(path);
  std::remove(path.c_str());
  CHECK(text ==
        "step,loss,note\n"
        "1,0.5,7\n"
        "2,,-3.25\n"
        "3,skipped,free text\n");
}

TEST_CASE("metric rows line up with the column header") {
  auto cols = metric_columns();
  REQUIRE(cols.size() == 18);
  CHECK(cols[0] == "env_step");
  CHECK(cols[1] == "episode_return");
  CHECK(cols[17] == "grad_norm");

  MetricRow r;
  r.env_step = 1400;
  r.report.repr_loss = 0.25;
  r.report.total = 1.5;
  r.grad_norm = 3.0;
  auto vals = metric_row(r);
  REQUIRE(vals.size() == cols.size());
  CHECK(vals[0] == 1400.0);
  CHECK(std::isnan(vals[1]));  // train rows leave the return column empty
  CHECK(vals[2] == 0.25);
  CHECK(vals[16] == 1.5);
  CHECK(vals[17] == 3.0);

  EvalPoint e;
  e.env_step = 2000;
  e.mean_return = 41.5;
  auto evals = eval_metric_row(e);
  REQUIRE(evals.size() == cols.size());
  CHECK(evals[0] == 2000.0);
  CHECK(evals[1] == 41.5);
  for (size_t i = 2; i < evals.size(); ++i) CHECK(std::isnan(evals[i]));
}

TEST_CASE("run directories never collide") {
  std::string root = temp_path("gyre_runs");
  std::string a = make_run_dir(root, "train", 7);
  std::string b = make_run_dir(root, "train", 7);
  CHECK(a != b);
  CHECK(fs::exists(a));
  CHECK(fs::exists(b));
  CHECK(a.find("train-") != std::string::npos);
  CHECK(a.find("seed7") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("manifest carries the command, env, and resolved config") {
  std::string root = temp_path("gyre_manifest");
  std::string dir = make_run_dir(root, "eval", 3);
  RunConfig cfg = config_preset("desk");
  config_set(cfg, "trainer.seed", "3");
  config_set(cfg, "planner.horizon", "4");
  write_manifest(dir, "gyre eval --set planner.horizon=4", cfg, {"eval.csv", "summary.json"});

  auto j = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  CHECK(j.at("command").get<std::string>() == "gyre eval --set planner.horizon=4");
  CHECK(j.at("seed").get<uint64_t>() == 3);
  CHECK(j.at("env").at("name").get<std::string>() == "pendulum_swingup");
  CHECK(j.at("env").at("obs_dim").get<int>() == 3);
  CHECK(j.at("config").at("planner.horizon").get<std::string>() == "4");
  CHECK(j.at("outputs").size() == 2);
  CHECK(j.contains("build_id"));

  // The sibling text file parses back to the same configuration.
  std::string cfg_path = dir + "/config.txt";
  RunConfig back = config_load(cfg_path);
  CHECK(back.planner.horizon == 4);
  CHECK(config_text(back) == read_text_file(cfg_path));
  fs::remove_all(root);
}

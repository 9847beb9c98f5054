#include "gyre/io.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian doubles");

namespace gyre {
namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"obs_dim", c.obs_dim},
              {"act_dim", c.act_dim},
              {"dim_q", c.dim_q},
              {"dim_p", c.dim_p},
              {"dim_c", c.dim_c},
              {"enc_width", c.enc_width},
              {"enc_depth", c.enc_depth},
              {"head_width", c.head_width},
              {"head_depth", c.head_depth},
              {"proj_dim", c.proj_dim},
              {"bin_count", c.bin_count},
              {"bin_lo", c.bin_lo},
              {"bin_hi", c.bin_hi},
              {"geometry", c.geometry},
              {"memory", memory_kind_str(c.memory_kind)},
              {"memory_gate", gate_kind_str(c.memory_gate)},
              {"memory_shared_a", c.memory_shared_a},
              {"mem_dim", c.mem_dim},
              {"mem_state_dim", c.mem_state_dim},
              {"mem_layers", c.mem_layers},
              {"alpha_start", c.alpha.alpha_start},
              {"alpha_end", c.alpha.alpha_end},
              {"alpha_ramp_begin", c.alpha.ramp_begin},
              {"alpha_ramp_end", c.alpha.ramp_end}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.obs_dim = j.at("obs_dim").get<int>();
  c.act_dim = j.at("act_dim").get<int>();
  c.dim_q = j.at("dim_q").get<int>();
  c.dim_p = j.at("dim_p").get<int>();
  c.dim_c = j.at("dim_c").get<int>();
  c.enc_width = j.at("enc_width").get<int>();
  c.enc_depth = j.at("enc_depth").get<int>();
  c.head_width = j.at("head_width").get<int>();
  c.head_depth = j.at("head_depth").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.bin_count = j.at("bin_count").get<int>();
  c.bin_lo = j.at("bin_lo").get<double>();
  c.bin_hi = j.at("bin_hi").get<double>();
  c.geometry = j.at("geometry").get<bool>();
  c.memory_kind = memory_kind_from(j.at("memory").get<std::string>());
  c.memory_gate = gate_kind_from(j.at("memory_gate").get<std::string>());
  c.memory_shared_a = j.at("memory_shared_a").get<bool>();
  c.mem_dim = j.at("mem_dim").get<int>();
  c.mem_state_dim = j.at("mem_state_dim").get<int>();
  c.mem_layers = j.at("mem_layers").get<int>();
  c.alpha.alpha_start = j.at("alpha_start").get<double>();
  c.alpha.alpha_end = j.at("alpha_end").get<double>();
  c.alpha.ramp_begin = j.at("alpha_ramp_begin").get<double>();
  c.alpha.ramp_end = j.at("alpha_ramp_end").get<double>();
  return c;
}

constexpr char kMagic[4] = {'G', 'Y', 'R', 'E'};
constexpr uint32_t kVersion = 1;

}  // namespace

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : path_(path), cols_(columns.size()), out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  if (columns.empty()) throw std::invalid_argument("CsvWriter: no columns");
  for (size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != cols_)
    throw std::invalid_argument("CsvWriter: row width mismatch in " + path_);
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ",";
    if (!std::isnan(values[i])) out_ << format_double(values[i]);
  }
  out_ << "\n";
  out_.flush();
}

void CsvWriter::row_text(const std::vector<std::string>& cells) {
  if (cells.size() != cols_)
    throw std::invalid_argument("CsvWriter: row width mismatch in " + path_);
  for (size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << "\n";
  out_.flush();
}

std::vector<std::string> metric_columns() {
  return {"env_step",       "episode_return",  "repr_loss",    "dyn_loss",
          "roll_loss",      "reward_loss",     "value_loss",   "value_ce_loss",
          "value_slow_loss", "policy_prior_loss", "sa_loss",    "energy_loss",
          "hamiltonian_loss", "temp_loss",     "decouple_loss", "c_sparse_loss",
          "total",          "grad_norm"};
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {
constexpr double kEmpty = std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> metric_row(const MetricRow& r) {
  const LossReport& p = r.report;
  return {static_cast<double>(r.env_step),
          kEmpty,
          p.repr_loss,
          p.dyn_loss,
          p.roll_loss,
          p.reward_loss,
          p.value_loss,
          p.value_ce_loss,
          p.value_slow_loss,
          p.policy_prior_loss,
          p.sa_loss,
          p.energy_loss,
          p.hamiltonian_loss,
          p.temp_loss,
          p.decouple_loss,
          p.c_sparse_loss,
          p.total,
          r.grad_norm};
}

std::vector<double> eval_metric_row(const EvalPoint& e) {
  std::vector<double> out(metric_columns().size(), kEmpty);
  out[0] = static_cast<double>(e.env_step);
  out[1] = e.mean_return;
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const WorldModel& m) {
  json header;
  header["config"] = config_to_json(m.cfg);
  json tensors = json::array();
  auto& mm = const_cast<WorldModel&>(m);  // enumeration needs mutable refs; values untouched
  for (const auto& [name, t] : model_all_tensors(mm))
    tensors.push_back(json{{"name", name}, {"rows", t->rows}, {"cols", t->cols}});
  header["tensors"] = std::move(tensors);
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof head_len);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : model_all_tensors(mm))
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

WorldModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a model checkpoint: " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof head_len);
  if (!in || head_len == 0 || head_len > (64u << 20))
    throw std::runtime_error("corrupt checkpoint header in " + path);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw std::runtime_error("corrupt checkpoint header in " + path);

  json header = json::parse(head);
  ModelConfig cfg = config_from_json(header.at("config"));
  Rng rng(0);  // weights are overwritten below
  WorldModel m = model_make(cfg, rng);

  auto named = model_all_tensors(m);
  const json& tensors = header.at("tensors");
  if (tensors.size() != named.size())
    throw std::runtime_error("checkpoint tensor list does not match the model: " + path);
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    const json& e = tensors.at(i);
    if (e.at("name").get<std::string>() != name || e.at("rows").get<int>() != t->rows ||
        e.at("cols").get<int>() != t->cols)
      throw std::runtime_error("checkpoint tensor " + e.at("name").get<std::string>() +
                               " does not match the model: " + path);
    in.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint payload truncated: " + path);
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("trailing bytes after checkpoint payload: " + path);
  return m;
}

std::string make_run_dir(const std::string& out_root, const std::string& verb, uint64_t seed) {
  namespace fs = std::filesystem;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);

  fs::create_directories(out_root);
  std::string base = out_root + "/" + verb + "-" + stamp + "-seed" + std::to_string(seed);
  std::string dir = base;
  for (int n = 2; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs) {
  json j;
  j["command"] = command;
  j["seed"] = cfg.trainer.seed;
#ifdef GYRE_BUILD_ID
  j["build_id"] = GYRE_BUILD_ID;
#else
  j["build_id"] = "unknown";
#endif
  const EnvSpec spec = config_env_spec(cfg);
  j["env"] = json{{"name", env_name_str(cfg.env)},
                  {"obs_dim", spec.obs_dim},
                  {"act_dim", spec.act_dim},
                  {"episode_len", spec.episode_len},
                  {"dt", spec.dt}};
  json conf = json::object();
  for (const auto& [k, v] : config_items(cfg)) conf[k] = v;
  j["config"] = std::move(conf);
  j["outputs"] = outputs;
  write_text_file(dir + "/manifest.json", j.dump(2) + "\n");
  write_text_file(dir + "/config.txt", config_text(cfg));
}

}  // namespace gyre

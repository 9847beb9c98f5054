#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "gyre/config.hpp"

// File plumbing shared by the command-line tools: CSV logs, JSON summaries,
// bit-exact model checkpoints, and run directories with manifests.
//
// Checkpoint format (version 1, little-endian):
//   bytes 0..3   magic "GYRE"
//   bytes 4..7   format version (uint32)
//   bytes 8..15  header length in bytes (uint64)
//   header       JSON: {"config": {model fields}, "tensors": [{name, rows, cols}...]}
//   payload      for each tensor in header order, rows*cols float64 values
// Tensors are enumerated by the model's own naming (every parameter group
// plus the averaged target heads), so save -> load reproduces the model
// bit-for-bit.

namespace gyre {

class CsvWriter {
 public:
  // Opens (truncates) path and writes the header row.
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);

  // One row; size must match the header. NaN renders as an empty cell.
  void row(const std::vector<double>& values);
  // Mixed row for tables with label columns; values are written verbatim.
  void row_text(const std::vector<std::string>& cells);

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  size_t cols_;
  std::ofstream out_;
};

// Columns of the training metric log: env_step, episode_return, every loss
// report field, then the raw gradient norm. Train rows leave episode_return
// empty; eval rows leave the loss fields empty.
std::vector<std::string> metric_columns();
std::vector<double> metric_row(const MetricRow& r);
std::vector<double> eval_metric_row(const EvalPoint& e);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

void save_checkpoint(const std::string& path, const WorldModel& m);
WorldModel load_checkpoint(const std::string& path);

// Creates <out_root>/<verb>-<UTC timestamp>-seed<seed>[-n] and returns it;
// a numeric suffix is added instead of ever reusing an existing directory.
std::string make_run_dir(const std::string& out_root, const std::string& verb, uint64_t seed);

// Writes <dir>/manifest.json (command, seed, build id, env spec, resolved
// config, output file names) and <dir>/config.txt (parseable key=value).
void write_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs);

}  // namespace gyre

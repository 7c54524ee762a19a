#pragma once

#include <string>
#include <vector>

#include "cagp/trainer.hpp"

namespace cagp {

// Model checkpoint: posterior state plus the standardization constants and
// run identity needed to evaluate it later. Little-endian binary container.
struct Checkpoint {
  Method method = Method::CagpOpt;
  LossKind loss_kind = LossKind::Elbo;
  std::uint64_t seed = 0;
  KernelSpec spec;
  Standardization stand;
  // Exact stores the dense posterior; the CaGP methods store the O(n i) one.
  bool is_exact = false;
  ExactPosterior exact;
  CagpState cagp;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// JSON-lines record stream; one object per record (schema in README).
void write_records_jsonl(const std::vector<TrainRecord>& records, const std::string& path);
std::vector<TrainRecord> read_records_jsonl(const std::string& path);

// Final evaluation JSON (schema in README).
struct FinalEval {
  EvalReport report;
  double coverage_error_alpha = 0.0;  // at the run's alpha
  double alpha = 0.95;
  std::string method, loss;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  bool diverged = false;
  int diverged_at = -1;
  double wallclock_s = 0.0;
};
void write_final_eval(const FinalEval& fe, const std::string& path);

// Flat key-value run configuration ("key = value" lines, '#' comments).
// parse_config_file reads one file; apply_config_entry is also used for
// CLI overrides. Unknown keys are ConfigError.
struct RunConfig {
  std::string dataset = "synth";  // "synth" or a CSV path
  std::string target_col = "target";
  double train_fraction = 0.9;
  Index synth_n = 512;
  Index synth_d = 1;
  double synth_outputscale = 1.0;
  std::vector<double> synth_lengthscales = {0.2};
  double synth_noise = 0.1;
  std::string kernel = "matern32";  // or "rbf"
  bool ard = true;
  TrainConfig train;
  double alpha = 0.95;
  std::string out_dir = "out";
};

RunConfig parse_config_file(const std::string& path);
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const RunConfig& cfg);

KernelSpec kernel_spec_of(const RunConfig& cfg);
Dataset dataset_of(const RunConfig& cfg);

std::string method_name(Method m);
std::string loss_name(LossKind k);

}  // namespace cagp

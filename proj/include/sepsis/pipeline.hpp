#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sepsis/config.hpp"
#include "sepsis/eval.hpp"
#include "sepsis/gbt.hpp"
#include "sepsis/io.hpp"
#include "sepsis/nn.hpp"
#include "sepsis/synth.hpp"

namespace sepsis::pipeline {

struct InvalidConfig : std::runtime_error {
  explicit InvalidConfig(const std::string& what) : std::runtime_error(what) {}
};
struct MissingInput : std::runtime_error {
  explicit MissingInput(const std::string& what) : std::runtime_error(what) {}
};

struct RunOptions {
  uint64_t seed = 1;
  int workers = 1;
  bool deterministic = false;

  int effective_workers() const { return deterministic ? 1 : workers; }
};

// Earliest prediction time on the sliding grid, minutes after admission.
constexpr int64_t kGridStartMin = 15;

void cmd_synth(const Config& cfg, const std::string& out_dir, const RunOptions& opts);

void cmd_prepare(const std::string& cohort_path, const Config& cfg, const std::string& out_dir,
                 const RunOptions& opts);

void cmd_train(const std::string& prepared_dir, const std::string& model_kind, const Config& cfg,
               const std::string& out_dir, const RunOptions& opts);

void cmd_evaluate(const std::string& prepared_dir, const std::string& model_path,
                  const std::vector<int64_t>& horizons_min, const Config& cfg,
                  const std::string& out_dir, const RunOptions& opts);

void cmd_seraip(const std::string& prepared_dir, const std::string& model_path, double tau,
                const Config& cfg, const std::string& out_dir, const RunOptions& opts);

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path);

// --- shared plumbing, also used by the test suites ---

struct PreparedData {
  std::vector<io::LabeledAdmission> cases;
  std::map<std::string, size_t> by_id;
  events::Vocabulary vocab;
  events::ContextSchema context_schema;
  features::VitalStats vital_stats;
  cohort::DatasetSplit split;
  int64_t train_offset_min = 180;
};

PreparedData load_prepared(const std::string& dir);

// A trained model of any family behind the (admission, prediction time) to
// risk contract.
class RiskScorer {
 public:
  static RiskScorer load(const std::string& model_path, const PreparedData& prep);

  double risk_at(const io::LabeledAdmission& c, int64_t prediction_time) const;
  // (time, risk) pairs over the sliding grid up to the label time
  std::vector<std::pair<int64_t, double>> risk_grid(const io::LabeledAdmission& c,
                                                    int64_t grid_step_min) const;
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
  gbt::GbtModel gbt_;
  nn::MlpModel mlp_;
  nn::CnnLstmModel cnn_;
  const PreparedData* prep_ = nullptr;
};

eval::ScoredCase scored_case(const io::LabeledAdmission& c, const RiskScorer& scorer,
                             int64_t grid_step_min);

std::vector<int64_t> parse_horizons(const std::string& text);

}  // namespace sepsis::pipeline

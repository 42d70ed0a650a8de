#include "sepsis/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "sepsis/csv.hpp"
#include "sepsis/svg.hpp"
#include "sepsis/train.hpp"
#include "sepsis/util.hpp"

namespace fs = std::filesystem;

namespace sepsis::pipeline {

namespace {

using io::LabeledAdmission;

class ManifestScope {
 public:
  ManifestScope(std::string command, std::string out_dir, const RunOptions& opts,
                nlohmann::json config)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_dir_);
    manifest_.command = std::move(command);
    manifest_.config = std::move(config);
    manifest_.seed = opts.seed;
    manifest_.deterministic = opts.deterministic;
    manifest_.workers = opts.effective_workers();
    manifest_.started = timestamp_utc();
  }

  void input(const std::string& path) {
    manifest_.inputs.emplace_back(path, io::file_hash_hex(path));
  }

  void finish() {
    // hash everything under the run directory except the manifest itself
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir_)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename() == "manifest.json") continue;
      files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      manifest_.outputs.emplace_back(fs::relative(f, out_dir_).string(), io::file_hash_hex(f));
    manifest_.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_manifest(out_dir_, manifest_);
  }

 private:
  std::string out_dir_;
  std::chrono::steady_clock::time_point start_;
  io::Manifest manifest_;
};

nlohmann::json config_snapshot(const Config& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [section, kv] : cfg.sections()) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [k, v] : kv) s[k] = v;
    j[section.empty() ? "(root)" : section] = std::move(s);
  }
  return j;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingInput("missing input: " + path);
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

void cmd_synth(const Config& cfg, const std::string& out_dir, const RunOptions& opts) {
  synth::CohortConfig ccfg = synth::CohortConfig::from_config(cfg);
  if (!cfg.has("synth", "seed")) ccfg.seed = opts.seed;
  ManifestScope scope("synth", out_dir, opts, config_snapshot(cfg));

  auto admissions = synth::generate_cohort(ccfg, opts.effective_workers());
  io::write_cohort_jsonl(out_dir + "/cohort.jsonl", admissions);

  auto report = synth::validate_cohort(admissions, ccfg);
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name},
                      {"target", c.target},
                      {"measured", c.measured},
                      {"tolerance", c.tolerance},
                      {"pass", c.pass}});
  nlohmann::json j{{"n_admissions", report.n_admissions},
                   {"n_inpatient", report.n_inpatient},
                   {"n_labeled_positive", report.n_labeled_positive},
                   {"all_pass", report.all_pass},
                   {"checks", std::move(checks)}};
  std::ofstream(out_dir + "/validation.json") << j.dump(2) << '\n';
  scope.finish();
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

namespace {

void write_flow_csv(const std::string& path, const std::vector<cohort::FlowStep>& flow) {
  std::ofstream out(path);
  CsvWriter csv(out);
  csv.row({"step", "removed", "remaining"});
  for (const auto& s : flow)
    csv.row({s.step, std::to_string(s.removed), std::to_string(s.remaining)});
}

void write_labels_csv(const std::string& path, const std::vector<LabeledAdmission>& cases) {
  std::ofstream out(path);
  CsvWriter csv(out);
  csv.row({"admission_id", "department", "label", "label_time_min", "crit_hr", "crit_temp",
           "crit_resp", "crit_wbc", "in_vital_subset"});
  for (const auto& c : cases) {
    const auto& f = c.label.onset_criteria;
    csv.row({c.admission.id, c.admission.department,
             c.label.positive() ? "positive" : "negative", std::to_string(c.label.label_time),
             f.heart_rate ? "1" : "0", f.temperature ? "1" : "0", f.respiration ? "1" : "0",
             f.white_cells ? "1" : "0", c.in_vital_subset ? "1" : "0"});
  }
}

nlohmann::json split_to_json(const cohort::DatasetSplit& split) {
  return nlohmann::json{{"seed", split.manifest.seed},
                        {"fractions",
                         {split.manifest.fractions[0], split.manifest.fractions[1],
                          split.manifest.fractions[2]}},
                        {"oversample", split.manifest.oversample},
                        {"neg_ratio", split.manifest.neg_ratio},
                        {"train_pos", split.train_pos},
                        {"train_neg", split.train_neg},
                        {"val", split.val_ids},
                        {"test", split.test_ids},
                        {"train_instances", split.train_instances}};
}

cohort::DatasetSplit split_from_json(const nlohmann::json& j) {
  cohort::DatasetSplit split;
  split.manifest.seed = j.at("seed").get<uint64_t>();
  for (int i = 0; i < 3; ++i) split.manifest.fractions[i] = j.at("fractions")[i].get<double>();
  split.manifest.oversample = j.at("oversample").get<int>();
  split.manifest.neg_ratio = j.at("neg_ratio").get<int>();
  split.train_pos = j.at("train_pos").get<std::vector<std::string>>();
  split.train_neg = j.at("train_neg").get<std::vector<std::string>>();
  split.val_ids = j.at("val").get<std::vector<std::string>>();
  split.test_ids = j.at("test").get<std::vector<std::string>>();
  split.train_instances = j.at("train_instances").get<std::vector<std::string>>();
  return split;
}

struct FeatureWriters {
  const PreparedData& prep;
  const cohort::VitalSpec vitals = cohort::VitalSpec::defaults();

  void write_gb(const std::string& path, const std::vector<std::string>& ids) const {
    std::ofstream out(path);
    CsvWriter csv(out);
    std::vector<std::string> header = {"admission_id", "label"};
    for (const auto& n : features::GbVitalFeatures::names(vitals)) header.push_back(n);
    csv.row(header);
    for (const auto& id : ids) {
      const auto& c = prep.cases[prep.by_id.at(id)];
      const int64_t p = c.label.label_time - prep.train_offset_min;
      if (p < kGridStartMin) continue;
      auto f = features::gb_vital_features(c.admission.sequence, p, vitals, prep.vital_stats);
      std::vector<std::string> row = {id, c.label.positive() ? "1" : "0"};
      for (double v : f.flat()) row.push_back(fmt(v));
      csv.row(row);
    }
  }

  void write_mlp(const std::string& path, const std::vector<std::string>& ids) const {
    std::ofstream out(path);
    const int width = static_cast<int>(features::kMlpWindowHours.size()) *
                          prep.vocab.aggregated_width() +
                      prep.context_schema.size();
    out << nlohmann::json{{"schema_version", "sepsis.features.mlp/1"}, {"width", width}}.dump()
        << '\n';
    for (const auto& id : ids) {
      const auto& c = prep.cases[prep.by_id.at(id)];
      const int64_t p = c.label.label_time - prep.train_offset_min;
      if (p < kGridStartMin) continue;
      auto ctx = events::vectorize_context(c.admission.context, prep.context_schema);
      auto x = features::mlp_features(c.admission.sequence, ctx, p, prep.vocab);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& [i, v] : x.items) items.push_back({i, v});
      out << nlohmann::json{{"id", id},
                            {"label", c.label.positive() ? 1 : 0},
                            {"x", std::move(items)}}
                 .dump()
          << '\n';
    }
  }
};

}  // namespace

void cmd_prepare(const std::string& cohort_path, const Config& cfg, const std::string& out_dir,
                 const RunOptions& opts) {
  require_file(cohort_path);
  ManifestScope scope("prepare", out_dir, opts, config_snapshot(cfg));

  auto admissions = io::read_cohort_jsonl(cohort_path);

  cohort::InclusionConfig icfg;
  icfg.min_duration_h = cfg.get_double("prepare", "min_duration_h", 3.0);
  icfg.min_dept_prevalence = cfg.get_double("prepare", "min_dept_prevalence", 0.02);
  icfg.label.sirs_window_h = cfg.get_double("prepare", "sirs_window_h", 6.0);
  icfg.label.suspicion_lookaround_h = cfg.get_double("prepare", "suspicion_lookaround_h", 24.0);
  auto inc = cohort::apply_inclusion(admissions, icfg);

  const int max_days = static_cast<int>(cfg.get_int("prepare", "clip_max_days", 5));

  // negatives draw a pseudo-random label time; too-short stays drop here
  std::vector<cohort::Admission> clipped;
  std::map<std::string, cohort::LabelRecord> labels;
  int64_t dropped_short = 0;
  for (size_t idx : inc.kept) {
    const cohort::Admission& adm = admissions[idx];
    cohort::LabelRecord rec = inc.labels.at(adm.id);
    if (!rec.positive()) {
      if (adm.duration_min() <= 6 * kMinutesPerHour) {
        ++dropped_short;
        continue;
      }
      Rng rng(mix_seed(opts.seed, fnv1a64_str(adm.id)));
      rec.label_time = cohort::choose_label_time(adm, rec, rng);
    }
    cohort::Admission copy = adm;
    copy.sequence = cohort::clip_window(adm.sequence, rec.label_time, max_days);
    labels[copy.id] = rec;
    clipped.push_back(std::move(copy));
  }
  {
    auto flow = inc.flow;
    flow.push_back({"negatives_without_label_window_removed", dropped_short,
                    static_cast<int64_t>(clipped.size())});
    write_flow_csv(out_dir + "/flow_report.csv", flow);
  }

  std::set<size_t> subset(
      [&] {
        auto v = cohort::vital_sign_subset(clipped, labels);
        return std::set<size_t>(v.begin(), v.end());
      }());

  const bool vital_subset_only = cfg.get_bool("prepare", "vital_subset_only", false);
  std::vector<LabeledAdmission> cases;
  for (size_t i = 0; i < clipped.size(); ++i) {
    if (vital_subset_only && !subset.count(i)) continue;
    LabeledAdmission row;
    row.label = labels.at(clipped[i].id);
    row.in_vital_subset = subset.count(i) > 0;
    row.admission = std::move(clipped[i]);
    cases.push_back(std::move(row));
  }

  std::vector<std::string> pos_ids, neg_ids;
  for (const auto& c : cases)
    (c.label.positive() ? pos_ids : neg_ids).push_back(c.admission.id);

  cohort::SplitConfig scfg;
  scfg.seed = static_cast<uint64_t>(cfg.get_int("prepare", "split_seed",
                                                static_cast<int64_t>(opts.seed)));
  scfg.oversample = static_cast<int>(cfg.get_int("prepare", "oversample", 10));
  scfg.neg_ratio = static_cast<int>(cfg.get_int("prepare", "neg_ratio", 5));
  auto split = cohort::make_splits(pos_ids, neg_ids, scfg);

  PreparedData prep;
  prep.cases = std::move(cases);
  for (size_t i = 0; i < prep.cases.size(); ++i) prep.by_id[prep.cases[i].admission.id] = i;
  prep.split = split;
  prep.train_offset_min = cfg.get_int("prepare", "train_offset_min", 180);

  // vocabulary over training sequences only
  {
    std::vector<events::EventSequence> train_seqs;
    for (const auto& id : split.train_pos)
      train_seqs.push_back(prep.cases[prep.by_id.at(id)].admission.sequence);
    for (const auto& id : split.train_neg)
      train_seqs.push_back(prep.cases[prep.by_id.at(id)].admission.sequence);
    std::vector<std::string> hier = cfg.get_list("prepare", "hierarchical_categories");
    if (hier.empty()) hier = {"diag_icd10"};
    auto catalog = events::infer_catalog(train_seqs, hier);
    const int64_t min_support = cfg.get_int("prepare", "vocab_min_support", 100);
    prep.vocab = events::build_vocabulary(train_seqs, catalog, min_support);
  }

  // context schema with the age normalizer fitted on training admissions
  {
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (const auto& id : split.train_pos) {
      const auto& c = prep.cases[prep.by_id.at(id)];
      if (c.admission.context.age_years) {
        sum += *c.admission.context.age_years;
        ++n;
      }
    }
    for (const auto& id : split.train_neg) {
      const auto& c = prep.cases[prep.by_id.at(id)];
      if (c.admission.context.age_years) {
        sum += *c.admission.context.age_years;
        ++n;
      }
    }
    if (n > 1) {
      const double mean = sum / static_cast<double>(n);
      for (const auto& id : split.train_pos) {
        const auto& c = prep.cases[prep.by_id.at(id)];
        if (c.admission.context.age_years) sq += std::pow(*c.admission.context.age_years - mean, 2);
      }
      for (const auto& id : split.train_neg) {
        const auto& c = prep.cases[prep.by_id.at(id)];
        if (c.admission.context.age_years) sq += std::pow(*c.admission.context.age_years - mean, 2);
      }
      prep.context_schema.age_mean = mean;
      prep.context_schema.age_std = std::sqrt(sq / static_cast<double>(n));
    }
  }

  // population vital means for the feature fallback
  {
    const auto vitals = cohort::VitalSpec::defaults();
    prep.vital_stats.mean.assign(static_cast<size_t>(vitals.count()), 0.0);
    std::vector<int64_t> counts(static_cast<size_t>(vitals.count()), 0);
    auto accumulate = [&](const std::string& id) {
      const auto& c = prep.cases[prep.by_id.at(id)];
      for (const auto& ev : c.admission.sequence.events) {
        for (int ch = 0; ch < vitals.count(); ++ch) {
          const auto& spec = vitals.channels[static_cast<size_t>(ch)];
          if (ev.category == spec.category &&
              static_cast<int>(ev.values.size()) > spec.slot) {
            prep.vital_stats.mean[static_cast<size_t>(ch)] +=
                ev.values[static_cast<size_t>(spec.slot)];
            ++counts[static_cast<size_t>(ch)];
          }
        }
      }
    };
    for (const auto& id : split.train_pos) accumulate(id);
    for (const auto& id : split.train_neg) accumulate(id);
    const auto defaults = features::VitalStats::physiological_defaults();
    for (size_t ch = 0; ch < prep.vital_stats.mean.size(); ++ch) {
      if (counts[ch] > 0) prep.vital_stats.mean[ch] /= static_cast<double>(counts[ch]);
      else prep.vital_stats.mean[ch] = defaults.mean[ch];
    }
  }

  // persist the prepared directory
  io::write_labeled_jsonl(out_dir + "/cohort_included.jsonl", prep.cases);
  write_labels_csv(out_dir + "/labels.csv", prep.cases);
  std::ofstream(out_dir + "/splits.json") << split_to_json(split).dump(2) << '\n';
  io::write_vocab_json(out_dir + "/vocab.json", prep.vocab);
  {
    nlohmann::json j{{"schema_version", "sepsis.context/1"},
                     {"age_mean", prep.context_schema.age_mean},
                     {"age_std", prep.context_schema.age_std},
                     {"sexes", prep.context_schema.sexes},
                     {"marital_statuses", prep.context_schema.marital_statuses},
                     {"comorbidity_codes", prep.context_schema.comorbidity_codes}};
    std::ofstream(out_dir + "/context_schema.json") << j.dump(2) << '\n';
  }
  {
    nlohmann::json j{{"schema_version", "sepsis.vitalstats/1"},
                     {"mean", prep.vital_stats.mean},
                     {"train_offset_min", prep.train_offset_min}};
    std::ofstream(out_dir + "/vital_stats.json") << j.dump(2) << '\n';
  }

  fs::create_directories(out_dir + "/features");
  FeatureWriters writers{prep};
  writers.write_gb(out_dir + "/features/gb_train.csv", split.train_instances);
  writers.write_gb(out_dir + "/features/gb_val.csv", split.val_ids);
  writers.write_gb(out_dir + "/features/gb_test.csv", split.test_ids);
  writers.write_mlp(out_dir + "/features/mlp_train.jsonl", split.train_instances);
  writers.write_mlp(out_dir + "/features/mlp_val.jsonl", split.val_ids);
  writers.write_mlp(out_dir + "/features/mlp_test.jsonl", split.test_ids);

  // full-observation sequence matrices, one per admission
  fs::create_directories(out_dir + "/seq");
  std::vector<const LabeledAdmission*> case_ptrs;
  for (const auto& c : prep.cases) case_ptrs.push_back(&c);
  parallel_for(case_ptrs.size(), opts.effective_workers(), [&](size_t i) {
    const auto& c = *case_ptrs[i];
    auto ctx = events::vectorize_context(c.admission.context, prep.context_schema);
    auto m = features::sequence_matrix(c.admission.sequence, ctx, prep.vocab,
                                       c.label.label_time);
    io::write_seqmat_bin(out_dir + "/seq/" + c.admission.id + ".bin", m);
  });

  scope.input(cohort_path);
  scope.finish();
}

// ---------------------------------------------------------------------------
// prepared-data loading
// ---------------------------------------------------------------------------

PreparedData load_prepared(const std::string& dir) {
  for (const char* f : {"/cohort_included.jsonl", "/splits.json", "/vocab.json",
                        "/context_schema.json", "/vital_stats.json"})
    require_file(dir + f);

  PreparedData prep;
  prep.cases = io::read_labeled_jsonl(dir + "/cohort_included.jsonl");
  for (size_t i = 0; i < prep.cases.size(); ++i) prep.by_id[prep.cases[i].admission.id] = i;
  prep.split = split_from_json(nlohmann::json::parse(std::ifstream(dir + "/splits.json")));
  prep.vocab = io::read_vocab_json(dir + "/vocab.json");
  {
    nlohmann::json j = nlohmann::json::parse(std::ifstream(dir + "/context_schema.json"));
    prep.context_schema.age_mean = j.at("age_mean").get<double>();
    prep.context_schema.age_std = j.at("age_std").get<double>();
    prep.context_schema.sexes = j.at("sexes").get<std::vector<std::string>>();
    prep.context_schema.marital_statuses =
        j.at("marital_statuses").get<std::vector<std::string>>();
    prep.context_schema.comorbidity_codes =
        j.at("comorbidity_codes").get<std::vector<std::string>>();
  }
  {
    nlohmann::json j = nlohmann::json::parse(std::ifstream(dir + "/vital_stats.json"));
    prep.vital_stats.mean = j.at("mean").get<std::vector<double>>();
    prep.train_offset_min = j.at("train_offset_min").get<int64_t>();
  }
  return prep;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

// Training sets are rebalanced by oversampling; mapping risks back to the
// natural prevalence subtracts the log of the sampling odds ratio from the
// output logit. Rankings are untouched, thresholds become meaningful.
double prior_correction_logit(const PreparedData& prep) {
  double nat_pos = 0.0;
  for (const auto& c : prep.cases) nat_pos += c.label.positive() ? 1.0 : 0.0;
  const double nat = nat_pos / std::max<size_t>(1, prep.cases.size());
  double train_pos = 0.0;
  for (const auto& id : prep.split.train_instances)
    train_pos += prep.cases[prep.by_id.at(id)].label.positive() ? 1.0 : 0.0;
  const double mix = train_pos / std::max<size_t>(1, prep.split.train_instances.size());
  if (nat <= 0.0 || nat >= 1.0 || mix <= 0.0 || mix >= 1.0) return 0.0;
  return std::log(mix / (1.0 - mix)) - std::log(nat / (1.0 - nat));
}

struct SparseStore {
  int width = 0;
  std::vector<events::SparseVector> x;
  std::vector<int> y;
};

SparseStore read_mlp_store(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty feature store: " + path);
  SparseStore store;
  store.width = nlohmann::json::parse(line).at("width").get<int>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    events::SparseVector v;
    v.size = store.width;
    for (const auto& item : j.at("x"))
      v.items.emplace_back(item.at(0).get<int>(), item.at(1).get<double>());
    store.x.push_back(std::move(v));
    store.y.push_back(j.at("label").get<int>());
  }
  return store;
}

struct DenseStore {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

DenseStore read_gb_store(const std::string& path) {
  require_file(path);
  auto rows = read_csv(path);
  if (rows.empty()) throw std::runtime_error("empty feature store: " + path);
  DenseStore store;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    store.y.push_back(std::stoi(row.at(1)));
    std::vector<double> x;
    for (size_t c = 2; c < row.size(); ++c) x.push_back(std::stod(row[c]));
    store.x.push_back(std::move(x));
  }
  return store;
}

double safe_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  try {
    return eval::auroc(scores, labels);
  } catch (const std::exception&) {
    return 0.5;  // single-class validation fold
  }
}

void write_history_csv(const std::string& path, const std::vector<nn::EpochStats>& history) {
  std::ofstream out(path);
  CsvWriter csv(out);
  csv.row({"epoch", "train_loss", "val_loss", "val_auroc"});
  for (const auto& h : history)
    csv.row({std::to_string(h.epoch), fmt(h.train_loss), fmt(h.val_loss), fmt(h.val_auroc)});
}

nn::TrainConfig train_config_from(const Config& cfg, const std::string& section,
                                  const RunOptions& opts) {
  nn::TrainConfig tc;
  tc.batch_size = static_cast<int>(cfg.get_int(section, "batch_size", 50));
  tc.lr = cfg.get_double(section, "lr", 1e-4);
  tc.epochs = static_cast<int>(cfg.get_int(section, "epochs", 10));
  tc.early_stop_patience = static_cast<int>(cfg.get_int(section, "patience", 5));
  tc.max_batches_per_epoch =
      static_cast<size_t>(cfg.get_int(section, "max_batches_per_epoch", 0));
  tc.seed = opts.seed;
  tc.workers = opts.effective_workers();
  return tc;
}

void train_gb(const std::string& prepared_dir, const Config& cfg, const std::string& out_dir,
              const RunOptions& opts) {
  DenseStore train = read_gb_store(prepared_dir + "/features/gb_train.csv");
  DenseStore val = read_gb_store(prepared_dir + "/features/gb_val.csv");

  gbt::GbtConfig gcfg;
  gcfg.max_splits = static_cast<int>(cfg.get_int("train.gb", "max_splits", 6));
  gcfg.n_trees = static_cast<int>(cfg.get_int("train.gb", "n_trees", 1000));
  gcfg.shrinkage = cfg.get_double("train.gb", "shrinkage", 0.1);
  gcfg.lambda = cfg.get_double("train.gb", "lambda", 1.0);
  gcfg.seed = opts.seed;

  gbt::GbtModel model = gbt::fit_gbt(train.x, train.y, gcfg);
  model.feature_names = features::GbVitalFeatures::names(cohort::VitalSpec::defaults());

  PreparedData prep = load_prepared(prepared_dir);
  const double prior_shift = prior_correction_logit(prep);
  model.base_score -= prior_shift;

  auto score_all = [&](const DenseStore& s) {
    std::vector<double> out;
    for (const auto& x : s.x) out.push_back(model.predict(x));
    return out;
  };
  const double train_auroc = safe_auroc(score_all(train), train.y);
  const double val_auroc = safe_auroc(score_all(val), val.y);

  {
    auto trace = gbt::boosting_loss_trace(train.x, train.y, gcfg);
    std::ofstream out(out_dir + "/history.csv");
    CsvWriter csv(out);
    csv.row({"round", "train_logloss"});
    for (size_t i = 0; i < trace.size(); ++i) csv.row({std::to_string(i), fmt(trace[i])});
  }
  nlohmann::json meta{{"seed", opts.seed},
                      {"prior_correction_logit", prior_shift},
                      {"metrics", {{"train_auroc", train_auroc}, {"val_auroc", val_auroc}}}};
  io::write_gbt_model(out_dir + "/model_gb.json", model, meta);
}

void train_mlp(const std::string& prepared_dir, const Config& cfg, const std::string& out_dir,
               const RunOptions& opts) {
  SparseStore train = read_mlp_store(prepared_dir + "/features/mlp_train.jsonl");
  SparseStore val = read_mlp_store(prepared_dir + "/features/mlp_val.jsonl");

  nn::MlpSpec spec;
  spec.input_width = train.width;
  spec.hidden1 = static_cast<int>(cfg.get_int("train.mlp", "hidden1", 200));
  spec.hidden2 = static_cast<int>(cfg.get_int("train.mlp", "hidden2", 200));
  spec.dropout = cfg.get_double("train.mlp", "dropout", 0.3);
  nn::MlpModel model = nn::MlpModel::create(spec, opts.seed);

  nn::TrainConfig tc = train_config_from(cfg, "train.mlp", opts);
  auto result = nn::train_loop(
      model.theta, train.x.size(), tc,
      [&](size_t i, std::span<double> grad, uint64_t sample_seed) {
        return nn::mlp_loss_grad(model, train.x[i], train.y[i], grad, true, sample_seed);
      },
      [&]() {
        double loss = 0.0;
        std::vector<double> scores;
        for (size_t i = 0; i < val.x.size(); ++i) {
          double risk = 0.0;
          loss += nn::mlp_loss_grad(model, val.x[i], val.y[i], {}, false, 0, &risk);
          scores.push_back(risk);
        }
        loss /= std::max<size_t>(1, val.x.size());
        return std::make_pair(loss, safe_auroc(scores, val.y));
      });
  model.theta = result.best_theta;
  PreparedData prep = load_prepared(prepared_dir);
  const double prior_shift = prior_correction_logit(prep);
  model.theta[model.layout.block("b3").offset + 1] -= prior_shift;

  write_history_csv(out_dir + "/history.csv", result.history);
  nlohmann::json meta{{"seed", opts.seed},
                      {"prior_correction_logit", prior_shift},
                      {"train_config",
                       {{"batch_size", tc.batch_size},
                        {"lr", tc.lr},
                        {"epochs", tc.epochs},
                        {"patience", tc.early_stop_patience}}},
                      {"metrics",
                       {{"best_val_auroc", result.best_val_auroc},
                        {"best_epoch", result.best_epoch}}}};
  io::write_mlp_model(out_dir + "/model_mlp.bin", model, meta);
}

std::vector<nn::ConvBlockSpec> parse_blocks(const std::string& text) {
  std::vector<nn::ConvBlockSpec> blocks;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    const size_t colon = cur.find(':');
    if (colon == std::string::npos)
      throw InvalidConfig("conv block must be ch1:ch2, got " + cur);
    blocks.push_back({std::stoi(cur.substr(0, colon)), std::stoi(cur.substr(colon + 1))});
    cur.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else if (!std::isspace(static_cast<unsigned char>(c))) cur += c;
  }
  flush();
  return blocks;
}

void train_cnn(const std::string& prepared_dir, const Config& cfg, const std::string& out_dir,
               const RunOptions& opts) {
  PreparedData prep = load_prepared(prepared_dir);
  const auto& split = prep.split;

  nn::CnnLstmSpec spec;
  spec.event_width = prep.vocab.aggregated_width();
  spec.context_width = prep.context_schema.size();
  spec.embed_dim = static_cast<int>(cfg.get_int("train.cnnlstm", "embed_dim", 1000));
  spec.lstm_units = static_cast<int>(cfg.get_int("train.cnnlstm", "lstm_units", 64));
  if (cfg.has("train.cnnlstm", "blocks"))
    spec.blocks = parse_blocks(cfg.get_str("train.cnnlstm", "blocks", ""));

  // matrices truncated at the training prediction time, one per unique id
  std::set<std::string> unique_train(split.train_instances.begin(),
                                     split.train_instances.end());
  std::map<std::string, features::SequenceMatrix> matrices;
  auto build_matrix = [&](const std::string& id) {
    const auto& c = prep.cases[prep.by_id.at(id)];
    auto ctx = events::vectorize_context(c.admission.context, prep.context_schema);
    const int64_t p = std::max<int64_t>(kGridStartMin,
                                        c.label.label_time - prep.train_offset_min);
    return features::sequence_matrix(c.admission.sequence, ctx, prep.vocab, p);
  };
  for (const auto& id : unique_train) matrices[id] = build_matrix(id);
  std::map<std::string, features::SequenceMatrix> val_matrices;
  for (const auto& id : split.val_ids) val_matrices[id] = build_matrix(id);

  std::vector<const features::SequenceMatrix*> train_x;
  std::vector<int> train_y;
  for (const auto& id : split.train_instances) {
    train_x.push_back(&matrices.at(id));
    train_y.push_back(prep.cases[prep.by_id.at(id)].label.positive() ? 1 : 0);
  }

  // sequence-level labels supervise every step; ramping the weights toward
  // the newest steps keeps the early, mostly uninformative prefix from
  // drowning the signal
  const std::string weighting = cfg.get_str("train.cnnlstm", "step_weighting", "linear");
  if (weighting != "linear" && weighting != "uniform")
    throw InvalidConfig("step_weighting must be linear or uniform");
  std::map<size_t, std::vector<double>> weight_cache;  // filled before the parallel loop
  std::vector<std::span<const double>> sample_weights(train_x.size());
  if (weighting == "linear") {
    for (size_t i = 0; i < train_x.size(); ++i) {
      const size_t steps = static_cast<size_t>(
          nn::pooled_length(train_x[i]->n_rows(), static_cast<int>(spec.blocks.size())));
      auto it = weight_cache.find(steps);
      if (it == weight_cache.end())
        it = weight_cache.emplace(steps, nn::linear_step_weights(steps)).first;
      sample_weights[i] = it->second;
    }
  }

  nn::CnnLstmModel model = nn::CnnLstmModel::create(spec, opts.seed);
  nn::TrainConfig tc = train_config_from(cfg, "train.cnnlstm", opts);

  auto result = nn::train_loop(
      model.theta, train_x.size(), tc,
      [&](size_t i, std::span<double> grad, uint64_t) {
        return nn::cnn_loss_grad(model, *train_x[i], train_y[i], grad, nullptr,
                                 sample_weights[i]);
      },
      [&]() {
        double loss = 0.0;
        std::vector<double> scores;
        std::vector<int> ys;
        for (const auto& id : split.val_ids) {
          const auto& c = prep.cases[prep.by_id.at(id)];
          std::vector<double> risks;
          loss += nn::cnn_loss_grad(model, val_matrices.at(id),
                                    c.label.positive() ? 1 : 0, {}, &risks);
          scores.push_back(risks.empty() ? 0.5 : risks.back());
          ys.push_back(c.label.positive() ? 1 : 0);
        }
        loss /= std::max<size_t>(1, split.val_ids.size());
        return std::make_pair(loss, safe_auroc(scores, ys));
      });
  model.theta = result.best_theta;
  const double prior_shift = prior_correction_logit(prep);
  model.theta[model.layout.block("out_b").offset + 1] -= prior_shift;

  write_history_csv(out_dir + "/history.csv", result.history);
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : spec.blocks) blocks.push_back({b.ch1, b.ch2});
  nlohmann::json meta{{"seed", opts.seed},
                      {"prior_correction_logit", prior_shift},
                      {"train_config",
                       {{"batch_size", tc.batch_size},
                        {"lr", tc.lr},
                        {"epochs", tc.epochs},
                        {"patience", tc.early_stop_patience},
                        {"max_batches_per_epoch", tc.max_batches_per_epoch}}},
                      {"metrics",
                       {{"best_val_auroc", result.best_val_auroc},
                        {"best_epoch", result.best_epoch}}}};
  io::write_cnn_model(out_dir + "/model_cnnlstm.bin", model, meta);
}

}  // namespace

void cmd_train(const std::string& prepared_dir, const std::string& model_kind, const Config& cfg,
               const std::string& out_dir, const RunOptions& opts) {
  require_file(prepared_dir + "/splits.json");
  ManifestScope scope("train", out_dir, opts, config_snapshot(cfg));
  if (model_kind == "gb") train_gb(prepared_dir, cfg, out_dir, opts);
  else if (model_kind == "mlp") train_mlp(prepared_dir, cfg, out_dir, opts);
  else if (model_kind == "cnnlstm") train_cnn(prepared_dir, cfg, out_dir, opts);
  else throw InvalidConfig("unknown model kind: " + model_kind + " (expected gb|mlp|cnnlstm)");
  scope.input(prepared_dir + "/splits.json");
  scope.finish();
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

RiskScorer RiskScorer::load(const std::string& model_path, const PreparedData& prep) {
  require_file(model_path);
  RiskScorer scorer;
  scorer.prep_ = &prep;
  scorer.kind_ = io::peek_model_kind(model_path);
  if (scorer.kind_ == "gbt" || scorer.kind_ == "gb") {
    std::ifstream in(model_path);
    scorer.gbt_ = gbt::GbtModel::from_json(nlohmann::json::parse(in));
    scorer.kind_ = "gb";
  } else {
    io::NnModelFile file = io::read_nn_model(model_path);
    if (file.kind == "mlp") scorer.mlp_ = std::move(file.mlp);
    else scorer.cnn_ = std::move(file.cnn);
    scorer.kind_ = file.kind;
  }
  return scorer;
}

double RiskScorer::risk_at(const LabeledAdmission& c, int64_t prediction_time) const {
  const PreparedData& prep = *prep_;
  if (kind_ == "gb") {
    auto f = features::gb_vital_features(c.admission.sequence, prediction_time,
                                         cohort::VitalSpec::defaults(), prep.vital_stats);
    return gbt_.predict(f.flat());
  }
  auto ctx = events::vectorize_context(c.admission.context, prep.context_schema);
  if (kind_ == "mlp") {
    auto x = features::mlp_features(c.admission.sequence, ctx, prediction_time, prep.vocab);
    return nn::mlp_risk(mlp_, x);
  }
  auto m = features::sequence_matrix(c.admission.sequence, ctx, prep.vocab, prediction_time);
  auto out = nn::cnn_lstm_forward(cnn_, m);
  return out.risks.empty() ? 0.5 : out.risks.back();
}

std::vector<std::pair<int64_t, double>> RiskScorer::risk_grid(const LabeledAdmission& c,
                                                              int64_t grid_step_min) const {
  std::vector<std::pair<int64_t, double>> out;
  const int64_t label_time = c.label.label_time;
  if (kind_ == "cnnlstm") {
    // one causal pass gives the whole sliding sequence at the conv stride
    const PreparedData& prep = *prep_;
    auto ctx = events::vectorize_context(c.admission.context, prep.context_schema);
    auto m = features::sequence_matrix(c.admission.sequence, ctx, prep.vocab, label_time);
    auto steps = nn::cnn_lstm_forward(cnn_, m);
    for (size_t j = 0; j < steps.risks.size(); ++j) {
      const int64_t t = std::min(label_time, m.row_end_time(steps.last_row[j]));
      out.emplace_back(t, steps.risks[j]);
    }
    return out;
  }
  for (int64_t t = kGridStartMin; t <= label_time; t += grid_step_min)
    out.emplace_back(t, risk_at(c, t));
  return out;
}

eval::ScoredCase scored_case(const LabeledAdmission& c, const RiskScorer& scorer,
                             int64_t grid_step_min) {
  eval::ScoredCase sc;
  sc.id = c.admission.id;
  sc.department = c.admission.department;
  sc.label = c.label.positive() ? 1 : 0;
  sc.label_time = c.label.label_time;
  sc.risks = scorer.risk_grid(c, grid_step_min);
  for (const auto& ev : c.admission.sequence.events) {
    if (ev.category == "med_iv" && cohort::ClinicalSources::anti_infective_code(ev.code))
      sc.iv_antibiotic_times.push_back(ev.time);
    else if (ev.category == "microbio_culture" && ev.code == "blood")
      sc.blood_culture_times.push_back(ev.time);
  }
  return sc;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

void write_curve_csv(const std::string& path, const eval::Curve& curve) {
  std::ofstream out(path);
  CsvWriter csv(out);
  csv.row({"x", "y", "threshold"});
  for (const auto& p : curve.points) csv.row({fmt(p.x), fmt(p.y), fmt(p.threshold)});
}

}  // namespace

std::vector<int64_t> parse_horizons(const std::string& text) {
  std::vector<int64_t> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    std::string t = cur;
    if (t.rfind("t-", 0) == 0) t = t.substr(2);
    int64_t scale = 1;
    if (!t.empty() && (t.back() == 'h' || t.back() == 'H')) {
      scale = 60;
      t.pop_back();
    } else if (t.size() > 2 && t.substr(t.size() - 3) == "min") {
      t = t.substr(0, t.size() - 3);
    }
    out.push_back(static_cast<int64_t>(std::llround(std::stod(t) * static_cast<double>(scale))));
    cur.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else if (!std::isspace(static_cast<unsigned char>(c))) cur += c;
  }
  flush();
  if (out.empty()) throw InvalidConfig("no horizons given");
  return out;
}

void cmd_evaluate(const std::string& prepared_dir, const std::string& model_path,
                  const std::vector<int64_t>& horizons_min, const Config& cfg,
                  const std::string& out_dir, const RunOptions& opts) {
  PreparedData prep = load_prepared(prepared_dir);
  ManifestScope scope("evaluate", out_dir, opts, config_snapshot(cfg));
  RiskScorer scorer = RiskScorer::load(model_path, prep);

  nlohmann::json summary{{"schema_version", "sepsis.eval/1"}, {"model_kind", scorer.kind()}};
  nlohmann::json by_horizon = nlohmann::json::object();

  for (int64_t h : horizons_min) {
    const std::string tag = eval::horizon_label(h);
    std::vector<double> scores;
    std::vector<int> labels;
    int64_t skipped = 0;
    std::vector<size_t> indices(prep.split.test_ids.size());
    std::vector<double> risks(prep.split.test_ids.size(), -1.0);
    for (size_t i = 0; i < prep.split.test_ids.size(); ++i)
      indices[i] = prep.by_id.at(prep.split.test_ids[i]);
    parallel_for(indices.size(), opts.effective_workers(), [&](size_t i) {
      const auto& c = prep.cases[indices[i]];
      const int64_t p = c.label.label_time - h;
      if (p < kGridStartMin) return;
      risks[i] = scorer.risk_at(c, p);
    });
    for (size_t i = 0; i < indices.size(); ++i) {
      if (risks[i] < 0.0) {
        ++skipped;
        continue;
      }
      scores.push_back(risks[i]);
      labels.push_back(prep.cases[indices[i]].label.positive() ? 1 : 0);
    }

    nlohmann::json entry{{"n", scores.size()}, {"skipped", skipped}};
    int n_pos = 0;
    for (int y : labels) n_pos += y;
    entry["n_pos"] = n_pos;
    entry["n_neg"] = static_cast<int>(labels.size()) - n_pos;
    if (n_pos > 0 && n_pos < static_cast<int>(labels.size())) {
      eval::Curve roc_curve = eval::roc(scores, labels);
      eval::Curve pr_curve = eval::pr(scores, labels);
      std::vector<double> taus;
      for (double t = 0.01; t < 0.96; t += 0.01) taus.push_back(t);
      eval::DecisionCurves dca = eval::decision_curve(scores, labels, taus);
      eval::Curve cal = eval::calibration_curve(scores, labels, 10);

      write_curve_csv(out_dir + "/roc_" + tag + ".csv", roc_curve);
      write_curve_csv(out_dir + "/pr_" + tag + ".csv", pr_curve);
      write_curve_csv(out_dir + "/calibration_" + tag + ".csv", cal);
      {
        std::ofstream out(out_dir + "/dca_" + tag + ".csv");
        CsvWriter csv(out);
        csv.row({"threshold", "nb_model", "nb_treat_all", "nb_treat_none"});
        for (size_t i = 0; i < taus.size(); ++i)
          csv.row({fmt(taus[i]), fmt(dca.model.points[i].y), fmt(dca.treat_all.points[i].y),
                   fmt(dca.treat_none.points[i].y)});
      }
      svg::write_line_plot(out_dir + "/roc_" + tag + ".svg", "ROC (" + tag + ")",
                           "false positive rate", "true positive rate",
                           {svg::from_curve(roc_curve, scorer.kind(), "#1f77b4")}, true);
      svg::write_line_plot(out_dir + "/pr_" + tag + ".svg", "Precision-recall (" + tag + ")",
                           "recall", "precision",
                           {svg::from_curve(pr_curve, scorer.kind(), "#1f77b4")});
      svg::write_line_plot(out_dir + "/dca_" + tag + ".svg", "Decision curve (" + tag + ")",
                           "threshold probability", "net benefit",
                           {svg::from_curve(dca.model, scorer.kind(), "#1f77b4"),
                            svg::from_curve(dca.treat_all, "treat all", "#d62728"),
                            svg::from_curve(dca.treat_none, "treat none", "#7f7f7f")});
      svg::write_line_plot(out_dir + "/calibration_" + tag + ".svg", "Calibration (" + tag + ")",
                           "predicted risk", "observed frequency",
                           {svg::from_curve(cal, scorer.kind(), "#ff7f0e")}, true);

      entry["auroc"] = roc_curve.summary;
      entry["map"] = pr_curve.summary;
    } else {
      entry["auroc"] = nullptr;
      entry["map"] = nullptr;
    }
    by_horizon[tag] = std::move(entry);
  }
  summary["horizons"] = std::move(by_horizon);
  std::ofstream(out_dir + "/summary.json") << summary.dump(2) << '\n';

  scope.input(model_path);
  scope.input(prepared_dir + "/cohort_included.jsonl");
  scope.finish();
}

// ---------------------------------------------------------------------------
// seraip
// ---------------------------------------------------------------------------

void cmd_seraip(const std::string& prepared_dir, const std::string& model_path, double tau,
                const Config& cfg, const std::string& out_dir, const RunOptions& opts) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidConfig("tau must lie strictly inside (0, 1)");
  PreparedData prep = load_prepared(prepared_dir);
  ManifestScope scope("seraip", out_dir, opts, config_snapshot(cfg));
  RiskScorer scorer = RiskScorer::load(model_path, prep);

  eval::SeraipConfig scfg;
  scfg.tau = tau;
  scfg.lookback_h = cfg.get_double("seraip", "lookback_h", 72.0);
  for (const auto& item : cfg.get_list("seraip", "tau_overrides")) {
    const size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw InvalidConfig("tau_overrides entries must be department:threshold, got " + item);
    const double t = std::stod(item.substr(colon + 1));
    if (!(t > 0.0 && t < 1.0)) throw InvalidConfig("override tau must lie inside (0, 1)");
    scfg.tau_by_department[item.substr(0, colon)] = t;
  }
  if (cfg.has("seraip", "horizons"))
    scfg.horizons_min = parse_horizons(cfg.get_str("seraip", "horizons", ""));
  const int64_t grid_step = cfg.get_int("seraip", "grid_step_min", 5);

  std::vector<eval::ScoredCase> cases(prep.split.test_ids.size());
  std::vector<size_t> indices(prep.split.test_ids.size());
  for (size_t i = 0; i < prep.split.test_ids.size(); ++i)
    indices[i] = prep.by_id.at(prep.split.test_ids[i]);
  parallel_for(indices.size(), opts.effective_workers(), [&](size_t i) {
    cases[i] = scored_case(prep.cases[indices[i]], scorer, grid_step);
  });

  auto rows = eval::seraip_report(cases, scfg);

  // aggregate rows across departments per horizon
  for (int64_t h : scfg.horizons_min) {
    eval::SeraipRow total;
    total.department = "ALL";
    total.horizon_min = h;
    for (const auto& r : rows) {
      if (r.horizon_min != h || r.department == "ALL") continue;
      total.tp += r.tp;
      total.tn += r.tn;
      total.fn += r.fn;
      total.fp += r.fp;
      total.tp_anti += r.tp_anti;
      total.tp_blood += r.tp_blood;
      total.tp_int += r.tp_int;
      total.skipped += r.skipped;
    }
    total.tp_no_int = total.tp - total.tp_int;
    rows.push_back(total);
  }

  {
    std::ofstream out(out_dir + "/seraip.csv");
    CsvWriter csv(out);
    csv.row({"department", "evaluated_up_until", "SEN", "SPE", "FP_per_TP", "TP", "TN", "FN",
             "FP", "TP_anti", "TP_blood", "TP_int", "TP_no_int", "skipped"});
    auto fmt2 = [](double v) {
      if (std::isnan(v)) return std::string("");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", v);
      return std::string(buf);
    };
    for (const auto& r : rows) {
      csv.row({r.department, eval::horizon_label(r.horizon_min), fmt2(r.sensitivity()),
               fmt2(r.specificity()), fmt2(r.fp_per_tp()), std::to_string(r.tp),
               std::to_string(r.tn), std::to_string(r.fn), std::to_string(r.fp),
               std::to_string(r.tp_anti), std::to_string(r.tp_blood), std::to_string(r.tp_int),
               std::to_string(r.tp_no_int), std::to_string(r.skipped)});
    }
  }
  nlohmann::json j{{"schema_version", "sepsis.seraip/1"},
                   {"tau", tau},
                   {"grid_step_min", grid_step},
                   {"model_kind", scorer.kind()},
                   {"n_cases", cases.size()}};
  std::ofstream(out_dir + "/seraip_meta.json") << j.dump(2) << '\n';

  scope.input(model_path);
  scope.input(prepared_dir + "/cohort_included.jsonl");
  scope.finish();
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  out << "# Run report\n\n";
  for (const auto& dir : run_dirs) {
    out << "## " << dir << "\n\n";
    try {
      nlohmann::json m = io::read_manifest(dir);
      out << "- command: `" << m.value("command", "?") << "`\n";
      out << "- seed: " << m.value("seed", 0) << ", deterministic: "
          << (m.value("deterministic", false) ? "yes" : "no") << "\n";
      out << "- duration: " << m.value("duration_s", 0.0) << " s\n\n";
    } catch (const std::exception& e) {
      out << "- no manifest (" << e.what() << ")\n\n";
      continue;
    }
    if (fs::exists(dir + "/summary.json")) {
      nlohmann::json s = nlohmann::json::parse(std::ifstream(dir + "/summary.json"));
      out << "| horizon | AUROC | mAP | n | skipped |\n|---|---|---|---|---|\n";
      for (const auto& [tag, e] : s.at("horizons").items()) {
        out << "| " << tag << " | ";
        if (e.at("auroc").is_null()) out << "-";
        else out << e.at("auroc").get<double>();
        out << " | ";
        if (e.at("map").is_null()) out << "-";
        else out << e.at("map").get<double>();
        out << " | " << e.at("n").get<int64_t>() << " | " << e.at("skipped").get<int64_t>()
            << " |\n";
      }
      out << "\n";
    }
    if (fs::exists(dir + "/seraip.csv")) {
      auto rows = read_csv(dir + "/seraip.csv");
      if (!rows.empty()) {
        out << "| ";
        for (const auto& cell : rows[0]) out << cell << " | ";
        out << "\n|";
        for (size_t i = 0; i < rows[0].size(); ++i) out << "---|";
        out << "\n";
        for (size_t r = 1; r < rows.size(); ++r) {
          out << "| ";
          for (const auto& cell : rows[r]) out << cell << " | ";
          out << "\n";
        }
        out << "\n";
      }
    }
  }
}

}  // namespace sepsis::pipeline

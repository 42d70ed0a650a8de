#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepsis/cohort.hpp"
#include "sepsis/events.hpp"
#include "sepsis/features.hpp"
#include "sepsis/gbt.hpp"
#include "sepsis/nn.hpp"

namespace sepsis::io {

// Schema tags carried by every persisted artifact; loaders reject mismatches.
constexpr const char* kCohortSchema = "sepsis.cohort/1";
constexpr const char* kVocabSchema = "sepsis.vocab/1";
constexpr const char* kSeqMatSchema = "sepsis.seqmat/1";
constexpr const char* kModelSchema = "sepsis.model/1";
constexpr const char* kManifestSchema = "sepsis.manifest/1";
constexpr const char* kToolVersion = "0.1.0";

struct SchemaMismatch : std::runtime_error {
  explicit SchemaMismatch(const std::string& what) : std::runtime_error(what) {}
};

// --- cohort JSON lines: one admission per line ---
nlohmann::json admission_to_json(const cohort::Admission& adm);
cohort::Admission admission_from_json(const nlohmann::json& j);
void write_cohort_jsonl(const std::string& path, std::span<const cohort::Admission> admissions);
std::vector<cohort::Admission> read_cohort_jsonl(const std::string& path);

// Labeled variant used by the prepared directory; label is attached per line.
struct LabeledAdmission {
  cohort::Admission admission;
  cohort::LabelRecord label;
  bool in_vital_subset = false;
};
void write_labeled_jsonl(const std::string& path, std::span<const LabeledAdmission> rows);
std::vector<LabeledAdmission> read_labeled_jsonl(const std::string& path);

// --- vocabulary ---
void write_vocab_json(const std::string& path, const events::Vocabulary& vocab);
events::Vocabulary read_vocab_json(const std::string& path);

// --- sequence matrices: coordinate list with the shared context vector in
// the header. Binary is canonical; a JSON-lines form exists for inspection.
void write_seqmat_bin(const std::string& path, const features::SequenceMatrix& m);
features::SequenceMatrix read_seqmat_bin(const std::string& path);
void write_seqmat_jsonl(const std::string& path, const features::SequenceMatrix& m);
features::SequenceMatrix read_seqmat_jsonl(const std::string& path);

// --- neural model files: JSON header plus raw little-endian parameters ---
struct NnModelFile {
  std::string kind;  // "mlp" | "cnnlstm"
  nlohmann::json header;
  nn::MlpModel mlp;
  nn::CnnLstmModel cnn;
};
void write_mlp_model(const std::string& path, const nn::MlpModel& m, const nlohmann::json& meta);
void write_cnn_model(const std::string& path, const nn::CnnLstmModel& m,
                     const nlohmann::json& meta);
void write_gbt_model(const std::string& path, const gbt::GbtModel& m, const nlohmann::json& meta);
NnModelFile read_nn_model(const std::string& path);
std::string peek_model_kind(const std::string& path);

// --- run manifests ---
struct Manifest {
  std::string command;
  nlohmann::json config;
  uint64_t seed = 0;
  bool deterministic = false;
  int workers = 1;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, content hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path, content hash
  std::string started;
  double duration_s = 0.0;
};
void write_manifest(const std::string& dir, const Manifest& m);
nlohmann::json read_manifest(const std::string& dir);

std::string file_hash_hex(const std::string& path);

}  // namespace sepsis::io

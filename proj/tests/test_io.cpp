#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "sepsis/csv.hpp"
#include "sepsis/config.hpp"
#include "sepsis/io.hpp"
#include "sepsis/synth.hpp"
#include "sepsis/util.hpp"

using namespace sepsis;

namespace {

const char* tmp(const char* name) {
  static std::string path;
  path = std::string("/tmp/sepsis_io_") + name;
  return path.c_str();
}

}  // namespace

TEST_CASE("cohort jsonl round trip") {
  synth::CohortConfig cfg = synth::CohortConfig::defaults();
  cfg.n_admissions = 40;
  cfg.seed = 3;
  auto admissions = synth::generate_cohort(cfg, 1);
  io::write_cohort_jsonl(tmp("cohort.jsonl"), admissions);
  auto back = io::read_cohort_jsonl(tmp("cohort.jsonl"));
  REQUIRE(back.size() == admissions.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == admissions[i].id);
    CHECK(back[i].department == admissions[i].department);
    CHECK(back[i].admit_min == admissions[i].admit_min);
    CHECK(back[i].discharge_min == admissions[i].discharge_min);
    CHECK((back[i].contact == admissions[i].contact));
    REQUIRE(back[i].sequence.size() == admissions[i].sequence.size());
    for (size_t e = 0; e < back[i].sequence.size(); ++e) {
      const auto& x = back[i].sequence.events[e];
      const auto& y = admissions[i].sequence.events[e];
      CHECK(x.time == y.time);
      CHECK(x.category == y.category);
      CHECK(x.values == y.values);
      CHECK(x.code == y.code);
    }
    CHECK(back[i].context.age_years == admissions[i].context.age_years);
    CHECK(back[i].context.comorbidities == admissions[i].context.comorbidities);
  }
}

TEST_CASE("vocabulary serialization preserves entries and rejects bad schemas") {
  synth::CohortConfig cfg = synth::CohortConfig::defaults();
  cfg.n_admissions = 60;
  cfg.seed = 5;
  auto admissions = synth::generate_cohort(cfg, 1);
  std::vector<events::EventSequence> seqs;
  for (const auto& a : admissions) seqs.push_back(a.sequence);
  auto vocab = events::build_vocabulary(seqs, synth::default_catalog(), 3);

  io::write_vocab_json(tmp("vocab.json"), vocab);
  auto back = io::read_vocab_json(tmp("vocab.json"));
  REQUIRE(back.size() == vocab.size());
  CHECK(back.aggregated_width() == vocab.aggregated_width());
  for (int i = 0; i < vocab.size(); ++i) {
    CHECK(back.entry(i)->category == vocab.entry(i)->category);
    CHECK(back.entry(i)->item == vocab.entry(i)->item);
    CHECK(back.entry(i)->mean == vocab.entry(i)->mean);
    CHECK(back.entry(i)->stddev == vocab.entry(i)->stddev);
  }

  // schema version is mandatory
  {
    std::ofstream out(tmp("vocab_bad.json"));
    out << "{\"schema_version\": \"sepsis.vocab/999\", \"entries\": []}";
  }
  CHECK_THROWS_AS(io::read_vocab_json(tmp("vocab_bad.json")), io::SchemaMismatch);
}

TEST_CASE("sequence matrix binary and jsonl readers agree") {
  Rng rng(9);
  features::SequenceMatrix m;
  m.event_width = 12;
  m.first_block = 77;
  for (int c = 0; c < 4; ++c) m.context.push_back(rng.uniform(-1, 1));
  m.rows.resize(25);
  for (auto& row : m.rows)
    for (int c = 0; c < 12; ++c)
      if (rng.bernoulli(0.3)) row.emplace_back(c, rng.uniform(-3, 3));

  io::write_seqmat_bin(tmp("m.bin"), m);
  io::write_seqmat_jsonl(tmp("m.jsonl"), m);
  auto from_bin = io::read_seqmat_bin(tmp("m.bin"));
  auto from_jsonl = io::read_seqmat_jsonl(tmp("m.jsonl"));

  for (const auto* back : {&from_bin, &from_jsonl}) {
    CHECK(back->event_width == m.event_width);
    CHECK(back->first_block == m.first_block);
    CHECK(back->context == m.context);
    REQUIRE(back->n_rows() == m.n_rows());
    for (int64_t r = 0; r < m.n_rows(); ++r) CHECK(back->dense_row(r) == m.dense_row(r));
  }

  // wrong magic rejected
  {
    std::ofstream out(tmp("not_a_matrix.bin"), std::ios::binary);
    out << "garbage";
  }
  CHECK_THROWS_AS(io::read_seqmat_bin(tmp("not_a_matrix.bin")), io::SchemaMismatch);
}

TEST_CASE("neural model files round trip") {
  nn::MlpSpec mspec;
  mspec.input_width = 9;
  mspec.hidden1 = 7;
  mspec.hidden2 = 5;
  nn::MlpModel mlp = nn::MlpModel::create(mspec, 31);
  io::write_mlp_model(tmp("mlp.bin"), mlp, {{"seed", 31}});
  auto file = io::read_nn_model(tmp("mlp.bin"));
  CHECK(file.kind == "mlp");
  CHECK(file.mlp.theta == mlp.theta);
  CHECK(file.mlp.spec.input_width == 9);
  CHECK(io::peek_model_kind(tmp("mlp.bin")) == "mlp");

  nn::CnnLstmSpec cspec;
  cspec.event_width = 6;
  cspec.context_width = 3;
  cspec.embed_dim = 5;
  cspec.blocks = {{4, 4}, {3, 3}};
  cspec.lstm_units = 4;
  nn::CnnLstmModel cnn = nn::CnnLstmModel::create(cspec, 37);
  io::write_cnn_model(tmp("cnn.bin"), cnn, {{"seed", 37}});
  auto cfile = io::read_nn_model(tmp("cnn.bin"));
  CHECK(cfile.kind == "cnnlstm");
  CHECK(cfile.cnn.theta == cnn.theta);
  REQUIRE(cfile.cnn.spec.blocks.size() == 2);
  CHECK(cfile.cnn.spec.blocks[1].ch2 == 3);
}

TEST_CASE("csv writer quotes per rfc and the reader inverts it") {
  {
    std::ofstream out(tmp("x.csv"));
    CsvWriter csv(out);
    csv.row({"a", "b,comma", "c\"quote", "d\nnewline"});
    csv.row({"plain", "", "0.5", "end"});
  }
  auto rows = read_csv(tmp("x.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == "b,comma");
  CHECK(rows[0][2] == "c\"quote");
  CHECK(rows[0][3] == "d\nnewline");
  CHECK(rows[1][1] == "");
  CHECK(rows[1][3] == "end");
}

TEST_CASE("config parser: sections, types, lists, errors") {
  Config cfg = Config::parse(
      "# comment\n[synth]\nn_admissions = 500\nprevalence = 0.08\nflag = true\n"
      "names = a, b , c\n\n[train.gb]\nn_trees = 25\n");
  CHECK(cfg.get_int("synth", "n_admissions", 0) == 500);
  CHECK(cfg.get_double("synth", "prevalence", 0) == doctest::Approx(0.08));
  CHECK(cfg.get_bool("synth", "flag", false));
  CHECK(cfg.get_list("synth", "names") == std::vector<std::string>{"a", "b", "c"});
  CHECK(cfg.get_int("train.gb", "n_trees", 0) == 25);
  CHECK(cfg.get_int("train.gb", "absent", 17) == 17);
  CHECK_THROWS_AS(Config::parse("key_without_value\n"), std::runtime_error);
  CHECK_THROWS_AS(Config::parse("[unterminated\n"), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_int("synth", "flag", 0), std::runtime_error);
}

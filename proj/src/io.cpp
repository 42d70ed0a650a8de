#include "sepsis/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "sepsis/util.hpp"

namespace sepsis::io {

namespace {

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("missing input file: " + path);
  return in;
}

void check_schema(const nlohmann::json& j, const char* expected, const std::string& path) {
  const std::string got = j.value("schema_version", std::string("<absent>"));
  if (got != expected)
    throw SchemaMismatch("schema mismatch in " + path + ": expected " + expected + ", got " +
                         got);
}

}  // namespace

nlohmann::json admission_to_json(const cohort::Admission& adm) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : adm.sequence.events) {
    nlohmann::json e{{"t_min", ev.time}, {"cat", ev.category}};
    if (!ev.values.empty()) {
      if (ev.values.size() == 1) e["val"] = ev.values[0];
      else e["val"] = ev.values;
    } else {
      e["val"] = ev.code;
    }
    events.push_back(std::move(e));
  }
  nlohmann::json ctx;
  if (adm.context.age_years) ctx["age"] = *adm.context.age_years;
  ctx["sex"] = adm.context.sex;
  ctx["marital"] = adm.context.marital;
  ctx["comorbidities"] = adm.context.comorbidities;
  return nlohmann::json{
      {"admission_id", adm.id},
      {"department", adm.department},
      {"admit_time", adm.admit_min},
      {"discharge_time", adm.discharge_min},
      {"contact_type",
       adm.contact == cohort::ContactType::Inpatient ? "inpatient" : "outpatient"},
      {"context", std::move(ctx)},
      {"events", std::move(events)}};
}

cohort::Admission admission_from_json(const nlohmann::json& j) {
  cohort::Admission adm;
  adm.id = j.at("admission_id").get<std::string>();
  adm.department = j.at("department").get<std::string>();
  adm.admit_min = j.at("admit_time").get<int64_t>();
  adm.discharge_min = j.at("discharge_time").get<int64_t>();
  adm.contact = j.value("contact_type", std::string("inpatient")) == "outpatient"
                    ? cohort::ContactType::Outpatient
                    : cohort::ContactType::Inpatient;
  const auto& ctx = j.at("context");
  if (ctx.contains("age")) adm.context.age_years = ctx.at("age").get<double>();
  adm.context.sex = ctx.value("sex", "");
  adm.context.marital = ctx.value("marital", "");
  adm.context.comorbidities = ctx.value("comorbidities", std::vector<std::string>{});
  for (const auto& e : j.at("events")) {
    events::Event ev;
    ev.time = e.at("t_min").get<int64_t>();
    ev.category = e.at("cat").get<std::string>();
    const auto& val = e.at("val");
    if (val.is_number()) ev.values = {val.get<double>()};
    else if (val.is_array()) ev.values = val.get<std::vector<double>>();
    else ev.code = val.get<std::string>();
    adm.sequence.events.push_back(std::move(ev));
  }
  adm.sequence.sort_by_time();
  return adm;
}

void write_cohort_jsonl(const std::string& path,
                        std::span<const cohort::Admission> admissions) {
  auto out = open_out(path);
  for (const auto& adm : admissions) out << admission_to_json(adm).dump() << '\n';
}

std::vector<cohort::Admission> read_cohort_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<cohort::Admission> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(admission_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

namespace {

nlohmann::json label_to_json(const cohort::LabelRecord& rec) {
  return nlohmann::json{{"label", rec.positive() ? "positive" : "negative"},
                        {"label_time", rec.label_time},
                        {"criteria",
                         {{"hr", rec.onset_criteria.heart_rate},
                          {"temp", rec.onset_criteria.temperature},
                          {"resp", rec.onset_criteria.respiration},
                          {"wbc", rec.onset_criteria.white_cells}}}};
}

cohort::LabelRecord label_from_json(const nlohmann::json& j) {
  cohort::LabelRecord rec;
  rec.label = j.at("label").get<std::string>() == "positive" ? cohort::Label::Positive
                                                             : cohort::Label::Negative;
  rec.label_time = j.at("label_time").get<int64_t>();
  const auto& c = j.at("criteria");
  rec.onset_criteria.heart_rate = c.at("hr").get<bool>();
  rec.onset_criteria.temperature = c.at("temp").get<bool>();
  rec.onset_criteria.respiration = c.at("resp").get<bool>();
  rec.onset_criteria.white_cells = c.at("wbc").get<bool>();
  return rec;
}

}  // namespace

void write_labeled_jsonl(const std::string& path, std::span<const LabeledAdmission> rows) {
  auto out = open_out(path);
  for (const auto& row : rows) {
    nlohmann::json j = admission_to_json(row.admission);
    j["label_record"] = label_to_json(row.label);
    j["in_vital_subset"] = row.in_vital_subset;
    out << j.dump() << '\n';
  }
}

std::vector<LabeledAdmission> read_labeled_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<LabeledAdmission> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    LabeledAdmission row;
    row.admission = admission_from_json(j);
    row.label = label_from_json(j.at("label_record"));
    row.in_vital_subset = j.value("in_vital_subset", false);
    out.push_back(std::move(row));
  }
  return out;
}

void write_vocab_json(const std::string& path, const events::Vocabulary& vocab) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& [id, cat] : vocab.catalog().all()) {
    cats.push_back(nlohmann::json{{"id", cat.id},
                                  {"kind", events::kind_name(cat.kind)},
                                  {"arity", cat.arity},
                                  {"hier_prefix_len", cat.hier_prefix_len}});
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : vocab.entries()) {
    entries.push_back(nlohmann::json{{"category", e.category},
                                     {"item", e.item},
                                     {"kind", events::kind_name(e.kind)},
                                     {"support", e.support},
                                     {"mean", e.mean},
                                     {"stddev", e.stddev}});
  }
  nlohmann::json j{{"schema_version", kVocabSchema},
                   {"min_support", vocab.min_support()},
                   {"catalog", std::move(cats)},
                   {"entries", std::move(entries)}};
  open_out(path) << j.dump(2) << '\n';
}

events::Vocabulary read_vocab_json(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(open_in(path));
  check_schema(j, kVocabSchema, path);
  events::CategoryCatalog catalog;
  for (const auto& c : j.at("catalog")) {
    events::EventCategory cat;
    cat.id = c.at("id").get<std::string>();
    cat.kind = events::kind_from_name(c.at("kind").get<std::string>());
    cat.arity = c.at("arity").get<int>();
    cat.hier_prefix_len = c.value("hier_prefix_len", std::vector<int>{});
    catalog.add(cat);
  }
  std::vector<events::VocabEntry> entries;
  for (const auto& e : j.at("entries")) {
    events::VocabEntry entry;
    entry.category = e.at("category").get<std::string>();
    entry.item = e.at("item").get<std::string>();
    entry.kind = events::kind_from_name(e.at("kind").get<std::string>());
    entry.support = e.at("support").get<int64_t>();
    entry.mean = e.at("mean").get<double>();
    entry.stddev = e.at("stddev").get<double>();
    entries.push_back(std::move(entry));
  }
  return events::Vocabulary(std::move(catalog), std::move(entries),
                            j.at("min_support").get<int64_t>());
}

namespace {

constexpr char kSeqMagic[8] = {'S', 'Q', 'M', 'A', 'T', '0', '0', '1'};

nlohmann::json seqmat_header(const features::SequenceMatrix& m, uint64_t nnz) {
  return nlohmann::json{{"schema_version", kSeqMatSchema},
                        {"n_rows", m.n_rows()},
                        {"event_width", m.event_width},
                        {"context_width", m.context_width()},
                        {"first_block", m.first_block},
                        {"context", m.context},
                        {"nnz", nnz}};
}

features::SequenceMatrix seqmat_from_header(const nlohmann::json& h, const std::string& path) {
  check_schema(h, kSeqMatSchema, path);
  features::SequenceMatrix m;
  m.event_width = h.at("event_width").get<int>();
  m.first_block = h.at("first_block").get<int64_t>();
  m.context = h.at("context").get<std::vector<double>>();
  m.rows.resize(h.at("n_rows").get<size_t>());
  return m;
}

}  // namespace

void write_seqmat_bin(const std::string& path, const features::SequenceMatrix& m) {
  uint64_t nnz = 0;
  for (const auto& row : m.rows) nnz += row.size();
  const std::string header = seqmat_header(m, nnz).dump();
  auto out = open_out(path, true);
  out.write(kSeqMagic, sizeof(kSeqMagic));
  const uint32_t hlen = static_cast<uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (size_t r = 0; r < m.rows.size(); ++r) {
    for (const auto& [c, v] : m.rows[r]) {
      const uint32_t row32 = static_cast<uint32_t>(r);
      const uint32_t col32 = static_cast<uint32_t>(c);
      out.write(reinterpret_cast<const char*>(&row32), sizeof(row32));
      out.write(reinterpret_cast<const char*>(&col32), sizeof(col32));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

features::SequenceMatrix read_seqmat_bin(const std::string& path) {
  auto in = open_in(path, true);
  char magic[sizeof(kSeqMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSeqMagic, sizeof(magic)) != 0)
    throw SchemaMismatch("not a sequence matrix file: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  nlohmann::json h = nlohmann::json::parse(header);
  features::SequenceMatrix m = seqmat_from_header(h, path);
  const uint64_t nnz = h.at("nnz").get<uint64_t>();
  for (uint64_t k = 0; k < nnz; ++k) {
    uint32_t row32 = 0, col32 = 0;
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&row32), sizeof(row32));
    in.read(reinterpret_cast<char*>(&col32), sizeof(col32));
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated sequence matrix file: " + path);
    m.rows.at(row32).emplace_back(static_cast<int>(col32), v);
  }
  return m;
}

void write_seqmat_jsonl(const std::string& path, const features::SequenceMatrix& m) {
  uint64_t nnz = 0;
  for (const auto& row : m.rows) nnz += row.size();
  auto out = open_out(path);
  out << seqmat_header(m, nnz).dump() << '\n';
  for (size_t r = 0; r < m.rows.size(); ++r)
    for (const auto& [c, v] : m.rows[r])
      out << nlohmann::json{{"r", r}, {"c", c}, {"v", v}}.dump() << '\n';
}

features::SequenceMatrix read_seqmat_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty sequence matrix file: " + path);
  features::SequenceMatrix m = seqmat_from_header(nlohmann::json::parse(line), path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    m.rows.at(j.at("r").get<size_t>())
        .emplace_back(j.at("c").get<int>(), j.at("v").get<double>());
  }
  return m;
}

// --- model files ---

namespace {

constexpr char kNnMagic[8] = {'S', 'P', 'N', 'N', '0', '0', '1', '\n'};

nlohmann::json layout_json(const nn::ParamLayout& layout) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : layout.blocks())
    blocks.push_back(nlohmann::json{{"name", b.name}, {"shape", b.shape}});
  return blocks;
}

void write_nn_file(const std::string& path, const std::string& kind, nlohmann::json header,
                   std::span<const double> theta) {
  header["schema_version"] = kModelSchema;
  header["kind"] = kind;
  header["n_params"] = theta.size();
  const std::string h = header.dump();
  auto out = open_out(path, true);
  out.write(kNnMagic, sizeof(kNnMagic));
  const uint32_t hlen = static_cast<uint32_t>(h.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
}

}  // namespace

void write_mlp_model(const std::string& path, const nn::MlpModel& m, const nlohmann::json& meta) {
  nlohmann::json header = meta;
  header["spec"] = {{"input_width", m.spec.input_width},
                    {"hidden1", m.spec.hidden1},
                    {"hidden2", m.spec.hidden2},
                    {"dropout", m.spec.dropout}};
  header["param_blocks"] = layout_json(m.layout);
  write_nn_file(path, "mlp", std::move(header), m.theta);
}

void write_cnn_model(const std::string& path, const nn::CnnLstmModel& m,
                     const nlohmann::json& meta) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : m.spec.blocks) blocks.push_back({b.ch1, b.ch2});
  nlohmann::json header = meta;
  header["spec"] = {{"event_width", m.spec.event_width},
                    {"context_width", m.spec.context_width},
                    {"embed_dim", m.spec.embed_dim},
                    {"blocks", blocks},
                    {"lstm_units", m.spec.lstm_units}};
  header["param_blocks"] = layout_json(m.layout);
  write_nn_file(path, "cnnlstm", std::move(header), m.theta);
}

void write_gbt_model(const std::string& path, const gbt::GbtModel& m,
                     const nlohmann::json& meta) {
  nlohmann::json j = m.to_json();
  j["schema_version"] = kModelSchema;
  j["meta"] = meta;
  open_out(path) << j.dump(2) << '\n';
}

std::string peek_model_kind(const std::string& path) {
  auto in = open_in(path, true);
  char magic[sizeof(kNnMagic)];
  in.read(magic, sizeof(magic));
  if (in && std::memcmp(magic, kNnMagic, sizeof(magic)) == 0) {
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    return nlohmann::json::parse(header).at("kind").get<std::string>();
  }
  in.clear();
  in.seekg(0);
  nlohmann::json j = nlohmann::json::parse(in);
  return j.at("kind").get<std::string>();
}

NnModelFile read_nn_model(const std::string& path) {
  auto in = open_in(path, true);
  char magic[sizeof(kNnMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kNnMagic, sizeof(magic)) != 0)
    throw SchemaMismatch("not a neural model file: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  nlohmann::json h = nlohmann::json::parse(header);
  check_schema(h, kModelSchema, path);

  NnModelFile file;
  file.kind = h.at("kind").get<std::string>();
  file.header = h;
  const size_t n_params = h.at("n_params").get<size_t>();
  std::vector<double> theta(n_params);
  in.read(reinterpret_cast<char*>(theta.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  if (!in) throw std::runtime_error("truncated model file: " + path);

  const auto& spec = h.at("spec");
  if (file.kind == "mlp") {
    nn::MlpSpec s;
    s.input_width = spec.at("input_width").get<int>();
    s.hidden1 = spec.at("hidden1").get<int>();
    s.hidden2 = spec.at("hidden2").get<int>();
    s.dropout = spec.at("dropout").get<double>();
    file.mlp = nn::MlpModel::create(s, 0);
    if (file.mlp.theta.size() != theta.size())
      throw std::runtime_error("model parameter count mismatch in " + path);
    file.mlp.theta = std::move(theta);
  } else if (file.kind == "cnnlstm") {
    nn::CnnLstmSpec s;
    s.event_width = spec.at("event_width").get<int>();
    s.context_width = spec.at("context_width").get<int>();
    s.embed_dim = spec.at("embed_dim").get<int>();
    s.blocks.clear();
    for (const auto& b : spec.at("blocks"))
      s.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    s.lstm_units = spec.at("lstm_units").get<int>();
    file.cnn = nn::CnnLstmModel::create(s, 0);
    if (file.cnn.theta.size() != theta.size())
      throw std::runtime_error("model parameter count mismatch in " + path);
    file.cnn.theta = std::move(theta);
  } else {
    throw std::runtime_error("unknown model kind in " + path + ": " + file.kind);
  }
  return file;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [p, h] : m.inputs) inputs.push_back({{"path", p}, {"hash", h}});
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& [p, h] : m.outputs) outputs.push_back({{"path", p}, {"hash", h}});
  nlohmann::json j{{"schema_version", kManifestSchema},
                   {"command", m.command},
                   {"config", m.config},
                   {"seed", m.seed},
                   {"deterministic", m.deterministic},
                   {"workers", m.workers},
                   {"tool_version", kToolVersion},
                   {"inputs", std::move(inputs)},
                   {"outputs", std::move(outputs)},
                   {"started", m.started},
                   {"duration_s", m.duration_s}};
  open_out(dir + "/manifest.json") << j.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::string& dir) {
  nlohmann::json j = nlohmann::json::parse(open_in(dir + "/manifest.json"));
  check_schema(j, kManifestSchema, dir + "/manifest.json");
  return j;
}

std::string file_hash_hex(const std::string& path) { return hex64(fnv1a64_file(path)); }

}  // namespace sepsis::io

#include "sepsis/csv.hpp"

#include <fstream>
#include <stdexcept>

namespace sepsis {

std::string CsvWriter::escape(const std::string& cell) {
  bool needs_quote = cell.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quote) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << escape(cells[i]);
  }
  out_ << '\n';
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open csv: " + path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> cur;
  std::string cell;
  bool in_quotes = false;
  bool row_has_data = false;
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cell += '"';
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        cur.push_back(cell);
        cell.clear();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !cell.empty() || !cur.empty()) {
          cur.push_back(cell);
          rows.push_back(cur);
        }
        cur.clear();
        cell.clear();
        row_has_data = false;
        break;
      default:
        cell += c;
        row_has_data = true;
    }
  }
  if (row_has_data || !cell.empty() || !cur.empty()) {
    cur.push_back(cell);
    rows.push_back(cur);
  }
  return rows;
}

}  // namespace sepsis

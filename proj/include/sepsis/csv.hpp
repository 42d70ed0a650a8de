#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sepsis {

// RFC 4180 style writer: fields containing comma, quote or newline are quoted
// and inner quotes doubled.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(const std::vector<std::string>& cells);

  static std::string escape(const std::string& cell);

 private:
  std::ostream& out_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace sepsis

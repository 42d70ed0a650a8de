#pragma once

#include <string>
#include <vector>

#include "sepsis/eval.hpp"

namespace sepsis::svg {

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

// Minimal static line plot with axes and a legend; fixed canvas size.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, bool include_diagonal = false);

Series from_curve(const eval::Curve& curve, const std::string& name, const std::string& color);

}  // namespace sepsis::svg

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "synthdet/evaluation.hpp"

namespace synthdet {

/// Parses the output of curve_csv; several kinds may be concatenated.
std::vector<RobustnessCurve> curves_from_csv(const std::string& text);

/// Accuracy-versus-parameter line chart, one panel per transform kind, written as PNG.
void plot_curves(const std::vector<RobustnessCurve>& curves, const std::filesystem::path& out);

/// Dispatches on the CSV content: robustness curves or a spectrum matrix.
void plot_csv(const std::filesystem::path& input, const std::filesystem::path& out);

}  // namespace synthdet

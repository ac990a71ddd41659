#include "synthdet/plot.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "synthdet/spectrum.hpp"

namespace synthdet {

std::vector<RobustnessCurve> curves_from_csv(const std::string& text) {
  std::vector<RobustnessCurve> curves;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("kind,", 0) == 0) continue;
    std::istringstream row(line);
    std::string kind, param, accuracy, identity;
    if (!std::getline(row, kind, ',') || !std::getline(row, param, ',') || !std::getline(row, accuracy, ','))
      throw std::invalid_argument("malformed curve row '" + line + "'");
    std::getline(row, identity, ',');
    const auto k = parse_transform_kind(kind);
    if (curves.empty() || curves.back().kind != k) curves.push_back({k, {}});
    try {
      curves.back().points.push_back({std::stod(param), std::stod(accuracy), identity == "1"});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed curve row '" + line + "'");
    }
  }
  if (curves.empty()) throw std::invalid_argument("no curve rows found");
  return curves;
}

void plot_curves(const std::vector<RobustnessCurve>& curves, const std::filesystem::path& out) {
  constexpr int kPanelW = 360, kPanelH = 260, kMargin = 40;
  const int cols = std::min<int>(4, static_cast<int>(curves.size()));
  const int rows = (static_cast<int>(curves.size()) + cols - 1) / cols;
  cv::Mat canvas(rows * kPanelH, cols * kPanelW, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar black(0, 0, 0), grey(200, 200, 200), blue(180, 80, 20);

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& curve = curves[i];
    const int ox = static_cast<int>(i) % cols * kPanelW, oy = static_cast<int>(i) / cols * kPanelH;
    const cv::Rect area(ox + kMargin, oy + kMargin / 2, kPanelW - kMargin - 15, kPanelH - kMargin - kMargin / 2 - 5);
    cv::rectangle(canvas, area, black, 1);
    for (int t = 1; t < 4; ++t) {
      const int y = area.y + area.height * t / 4;
      cv::line(canvas, {area.x, y}, {area.x + area.width, y}, grey, 1);
    }
    cv::putText(canvas, to_string(curve.kind), {ox + kMargin, oy + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
    cv::putText(canvas, "1.0", {ox + 8, area.y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.35, black, 1, cv::LINE_AA);
    cv::putText(canvas, "0.0", {ox + 8, area.y + area.height}, cv::FONT_HERSHEY_SIMPLEX, 0.35, black, 1, cv::LINE_AA);

    std::vector<CurvePoint> pts;
    for (const auto& p : curve.points)
      if (!p.identity) pts.push_back(p);
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.param < b.param; });
    const double lo = pts.front().param, hi = pts.back().param;
    auto to_px = [&](const CurvePoint& p) {
      const double fx = hi > lo ? (p.param - lo) / (hi - lo) : 0.5;
      return cv::Point(area.x + static_cast<int>(fx * area.width),
                       area.y + static_cast<int>((1.0 - std::clamp(p.accuracy, 0.0, 1.0)) * area.height));
    };
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) cv::line(canvas, to_px(pts[k]), to_px(pts[k + 1]), blue, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(canvas, to_px(p), 3, blue, cv::FILLED, cv::LINE_AA);
    std::ostringstream lo_text, hi_text;
    lo_text << std::setprecision(4) << lo;
    hi_text << std::setprecision(4) << hi;
    cv::putText(canvas, lo_text.str(), {area.x, area.y + area.height + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.35, black, 1, cv::LINE_AA);
    cv::putText(canvas, hi_text.str(), {area.x + area.width - 30, area.y + area.height + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                black, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(out.string(), canvas)) throw std::runtime_error("failed to write plot " + out.string());
}

void plot_csv(const std::filesystem::path& input, const std::filesystem::path& out) {
  std::ifstream f(input);
  if (!f) throw std::runtime_error("cannot open " + input.string());
  std::stringstream buffer;
  buffer << f.rdbuf();
  const auto text = buffer.str();
  if (text.rfind("kind,", 0) == 0) {
    plot_curves(curves_from_csv(text), out);
  } else {
    save_spectrum_png(spectrum_from_csv(text), out);
  }
}

}  // namespace synthdet

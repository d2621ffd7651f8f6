#include "bsq/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "bsq/error.hpp"
#include "bsq/morphology.hpp"

namespace bsq {

namespace {

void check_same(const BinaryMask& a, const BinaryMask& b, const char* who) {
  if (!a.same_shape(b)) throw ShapeError(std::string(who) + ": mask shapes differ");
}

double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double mask_iou(const BinaryMask& pred, const BinaryMask& gt) {
  check_same(pred, gt, "mask_iou");
  const std::size_t inter = intersection_count(pred, gt);
  return ratio_or_one(inter, pred.count() + gt.count() - inter);
}

double boundary_f_score(const BinaryMask& pred, const BinaryMask& gt, int tolerance_px) {
  check_same(pred, gt, "boundary_f_score");
  if (tolerance_px < 1) throw ConfigError("boundary_f_score: tolerance must be >= 1");
  const BinaryMask pc = boundary_target(pred);
  const BinaryMask gc = boundary_target(gt);
  const std::size_t np = pc.count(), ng = gc.count();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const KernelSize window(2 * tolerance_px + 1);
  const double precision =
      static_cast<double>(intersection_count(pc, dilate(gc, window))) / static_cast<double>(np);
  const double recall =
      static_cast<double>(intersection_count(gc, dilate(pc, window))) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

BinaryMask inner_band(const BinaryMask& m, int d) {
  if (d < 1) throw ConfigError("boundary band width must be >= 1");
  return mask_and_not(m, erode(m, KernelSize(2 * d + 1)));
}

double boundary_iou(const BinaryMask& pred, const BinaryMask& gt, int d) {
  check_same(pred, gt, "boundary_iou");
  return mask_iou(inner_band(pred, d), inner_band(gt, d));
}

void EvalConfig::validate() const {
  if (tolerances.empty()) throw ConfigError("eval.tolerances must not be empty");
  for (int t : tolerances)
    if (t < 1) throw ConfigError("eval.tolerances must be >= 1");
  if (band_width < 1) throw ConfigError("eval.band_width must be >= 1");
}

SampleMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, const EvalConfig& cfg,
                            std::size_t index) {
  SampleMetrics m;
  m.index = index;
  m.mask_iou = mask_iou(pred, gt);
  for (int t : cfg.tolerances) m.f_scores[t] = boundary_f_score(pred, gt, t);
  m.boundary_iou = boundary_iou(pred, gt, cfg.band_width);
  return m;
}

void EvalReport::finalize() {
  mean_mask_iou = 0.0;
  mean_boundary_iou = 0.0;
  mean_f_scores.clear();
  for (int t : config.tolerances) mean_f_scores[t] = 0.0;
  if (samples.empty()) return;
  for (const auto& s : samples) {
    mean_mask_iou += s.mask_iou;
    mean_boundary_iou += s.boundary_iou;
    for (const auto& [t, f] : s.f_scores) mean_f_scores[t] += f;
  }
  const auto n = static_cast<double>(samples.size());
  mean_mask_iou /= n;
  mean_boundary_iou /= n;
  for (auto& [t, f] : mean_f_scores) f /= n;
}

double EvalReport::mean_f(int tol) const {
  auto it = mean_f_scores.find(tol);
  if (it == mean_f_scores.end())
    throw ConfigError("no F-score recorded at tolerance " + std::to_string(tol));
  return it->second;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  auto fmap = [](const std::map<int, double>& m) {
    json j = json::object();
    for (const auto& [t, f] : m) j[std::to_string(t) + "px"] = f;
    return j;
  };
  json doc;
  doc["boundary_metric"] = "mask-level boundary IoU (inner band)";
  doc["band_width"] = config.band_width;
  doc["tolerances"] = config.tolerances;
  doc["count"] = samples.size();
  doc["mean"] = {{"mask_iou", mean_mask_iou},
                 {"boundary_iou", mean_boundary_iou},
                 {"f_score", fmap(mean_f_scores)}};
  doc["samples"] = json::array();
  for (const auto& s : samples)
    doc["samples"].push_back({{"index", s.index},
                              {"mask_iou", s.mask_iou},
                              {"boundary_iou", s.boundary_iou},
                              {"f_score", fmap(s.f_scores)}});
  return doc.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "index,mask_iou,boundary_iou";
  for (int t : config.tolerances) out << ",f" << t << "px";
  out << "\n";
  char buf[64];
  for (const auto& s : samples) {
    out << s.index;
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", s.mask_iou, s.boundary_iou);
    out << buf;
    for (int t : config.tolerances) {
      std::snprintf(buf, sizeof(buf), ",%.17g", s.f_scores.at(t));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string EvalReport::summary_table(const std::string& label) const {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-24s %8s %8s", "model", "mIoU", "bIoU");
  out << buf;
  for (auto it = config.tolerances.rbegin(); it != config.tolerances.rend(); ++it) {
    std::snprintf(buf, sizeof(buf), " %8s", ("F1(" + std::to_string(*it) + "px)").c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "%-24s %8.4f %8.4f", label.c_str(), mean_mask_iou, mean_boundary_iou);
  out << buf;
  for (auto it = config.tolerances.rbegin(); it != config.tolerances.rend(); ++it) {
    std::snprintf(buf, sizeof(buf), " %8.4f", mean_f(*it));
    out << buf;
  }
  out << "\n";
  return out.str();
}

}  // namespace bsq

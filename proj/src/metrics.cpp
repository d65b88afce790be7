#include "fedsim/metrics.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim::metrics {

double iou(const Box& a, const Box& b) noexcept {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             int class_id, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw InvalidInputError("match_detections: IoU threshold must lie in (0,1]");
  }
  std::vector<const Detection*> ordered;
  for (const auto& d : dets) {
    if (d.class_id == class_id) ordered.push_back(&d);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Detection* a, const Detection* b) { return a->confidence > b->confidence; });

  std::vector<const GroundTruth*> truth;
  for (const auto& g : gts) {
    if (g.class_id == class_id) truth.push_back(&g);
  }
  std::vector<bool> taken(truth.size(), false);

  MatchResult r;
  r.num_ground_truth = truth.size();
  for (const Detection* d : ordered) {
    double best = -1.0;
    std::size_t best_idx = truth.size();
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (taken[g] || truth[g]->image_id != d->image_id) continue;
      const double o = iou(d->box, truth[g]->box);
      if (o > best) {
        best = o;
        best_idx = g;
      }
    }
    r.confidences.push_back(d->confidence);
    if (best_idx < truth.size() && best >= iou_threshold) {
      taken[best_idx] = true;
      r.labels.push_back(MatchLabel::kTruePositive);
      ++r.true_positives;
    } else {
      r.labels.push_back(MatchLabel::kFalsePositive);
      ++r.false_positives;
    }
  }
  r.false_negatives = r.num_ground_truth - r.true_positives;
  return r;
}

std::pair<double, double> precision_recall(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {p, r};
}

PrCurve pr_curve(std::span<const MatchLabel> labels, std::size_t num_gt) {
  PrCurve curve;
  curve.labels.assign(labels.begin(), labels.end());
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (MatchLabel l : labels) {
    if (l == MatchLabel::kTruePositive) {
      if (++tp > num_gt) {
        throw InvalidInputError("pr_curve: more true positives than ground truth boxes");
      }
    } else {
      ++fp;
    }
    const std::size_t fn = num_gt > tp ? num_gt - tp : 0;
    const auto [p, r] = precision_recall(tp, fp, fn);
    curve.points.push_back({r, p});
  }
  return curve;
}

double average_precision(std::span<const MatchLabel> labels, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const auto curve = pr_curve(labels, num_gt);
  const auto& pts = curve.points;
  // Precision envelope: best precision at this point or any later one.
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t k = pts.size(); k-- > 0;) {
    running = std::max(running, pts[k].precision);
    envelope[k] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (pts[k].recall > prev_recall) {
      ap += (pts[k].recall - prev_recall) * envelope[k];
      prev_recall = pts[k].recall;
    }
  }
  return ap;
}

double mean_average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                              int num_classes, double iou_threshold) {
  if (num_classes < 1) throw InvalidInputError("mean_average_precision: num_classes must be >= 1");
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto m = match_detections(dets, gts, c, iou_threshold);
    if (m.num_ground_truth == 0) continue;
    sum += average_precision(m.labels, m.num_ground_truth);
    ++counted;
  }
  if (counted == 0) throw DegenerateInputError("mean_average_precision: no ground truth boxes");
  return sum / counted;
}

std::size_t argmax(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return best;
}

ClassificationScores classification_metrics(std::span<const std::vector<double>> probs,
                                            std::span<const std::size_t> labels) {
  if (probs.empty()) throw InvalidInputError("classification_metrics: empty evaluation set");
  if (probs.size() != labels.size()) {
    throw InvalidInputError("classification_metrics: prediction and label counts differ");
  }
  const std::size_t n_classes = probs.front().size();
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != n_classes || labels[i] >= n_classes) {
      throw InvalidInputError("classification_metrics: inconsistent class count");
    }
    const std::size_t pred = argmax(probs[i]);
    if (pred == labels[i]) {
      ++correct;
      ++tp[pred];
    } else {
      ++fp[pred];
      ++fn[labels[i]];
    }
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) f1_sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return {static_cast<double>(correct) / static_cast<double>(probs.size()),
          f1_sum / static_cast<double>(n_classes)};
}

std::optional<std::size_t> rounds_to_target(std::span<const std::pair<std::size_t, double>> curve,
                                            double target) {
  for (const auto& [round, metric] : curve) {
    if (metric >= target) return round;
  }
  return std::nullopt;
}

namespace {

template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    fn(fields, line_no);
  }
}

Box read_box(std::istringstream& fields, std::size_t line_no) {
  Box b;
  if (!(fields >> b.x_min >> b.y_min >> b.x_max >> b.y_max)) {
    throw InvalidInputError("line " + std::to_string(line_no) + ": expected four box coordinates");
  }
  if (!b.valid()) {
    throw InvalidInputError("line " + std::to_string(line_no) + ": box has min above max");
  }
  return b;
}

void expect_end(std::istringstream& fields, std::size_t line_no) {
  std::string extra;
  if (fields >> extra) {
    throw InvalidInputError("line " + std::to_string(line_no) + ": unexpected trailing field '" +
                            extra + "'");
  }
}

}  // namespace

std::vector<Detection> read_detections(std::istream& in) {
  std::vector<Detection> out;
  for_each_record(in, [&](std::istringstream& fields, std::size_t line_no) {
    Detection d;
    if (!(fields >> d.image_id >> d.class_id >> d.confidence)) {
      throw InvalidInputError("line " + std::to_string(line_no) +
                              ": expected image_id class_id confidence");
    }
    if (d.confidence < 0.0 || d.confidence > 1.0) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": confidence outside [0,1]");
    }
    d.box = read_box(fields, line_no);
    expect_end(fields, line_no);
    out.push_back(d);
  });
  return out;
}

std::vector<GroundTruth> read_ground_truth(std::istream& in) {
  std::vector<GroundTruth> out;
  for_each_record(in, [&](std::istringstream& fields, std::size_t line_no) {
    GroundTruth g;
    if (!(fields >> g.image_id >> g.class_id)) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": expected image_id class_id");
    }
    g.box = read_box(fields, line_no);
    expect_end(fields, line_no);
    out.push_back(g);
  });
  return out;
}

}  // namespace fedsim::metrics

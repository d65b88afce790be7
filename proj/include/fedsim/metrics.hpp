#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace fedsim::metrics {

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double area() const noexcept { return (x_max - x_min) * (y_max - y_min); }
  bool valid() const noexcept { return x_min <= x_max && y_min <= y_max; }
};

struct Detection {
  Box box;
  int class_id = 0;
  double confidence = 0.0;
  std::int64_t image_id = 0;
};

struct GroundTruth {
  Box box;
  int class_id = 0;
  std::int64_t image_id = 0;
};

enum class MatchLabel : std::uint8_t { kFalsePositive = 0, kTruePositive = 1 };

struct MatchResult {
  /// One label per detection of the class, in descending-confidence order.
  std::vector<MatchLabel> labels;
  std::vector<double> confidences;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t num_ground_truth = 0;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  std::vector<MatchLabel> labels;
};

inline constexpr double kDefaultIouThreshold = 0.5;

/// Intersection over union; 0 when the union has no area.
double iou(const Box& a, const Box& b) noexcept;

/// Greedy one-to-one matching in descending confidence. Each detection takes
/// the unmatched same-image ground truth of its class with the highest IoU,
/// provided that IoU reaches the threshold. Confidence ties keep input order.
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             int class_id, double iou_threshold = kDefaultIouThreshold);

/// P = TP/(TP+FP), R = TP/(TP+FN); each is 0 when its denominator is 0.
std::pair<double, double> precision_recall(std::size_t tp, std::size_t fp, std::size_t fn);

/// Cumulative (recall, precision) after each detection. Throws
/// InvalidInputError if the labels hold more true positives than num_gt.
PrCurve pr_curve(std::span<const MatchLabel> labels, std::size_t num_gt);

/// All-point interpolated AP: sum over recall steps of the step width times
/// the highest precision reached at that recall or beyond. 0 when num_gt = 0.
double average_precision(std::span<const MatchLabel> labels, std::size_t num_gt);

/// Mean of per-class AP over classes in [0, num_classes) that have ground
/// truth. Throws DegenerateInputError if there is none at all.
double mean_average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                              int num_classes, double iou_threshold = kDefaultIouThreshold);

struct ClassificationScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Argmax with ties going to the lowest class index.
std::size_t argmax(std::span<const double> probs);

ClassificationScores classification_metrics(std::span<const std::vector<double>> probs,
                                            std::span<const std::size_t> labels);

/// First round whose metric reaches `target`; nullopt when never reached.
std::optional<std::size_t> rounds_to_target(std::span<const std::pair<std::size_t, double>> curve,
                                            double target);

/// Line format `image_id class_id confidence x_min y_min x_max y_max`; blank
/// lines and lines starting with '#' are skipped.
std::vector<Detection> read_detections(std::istream& in);
/// Same format without the confidence column.
std::vector<GroundTruth> read_ground_truth(std::istream& in);

}  // namespace fedsim::metrics

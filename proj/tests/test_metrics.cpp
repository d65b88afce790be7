#include <doctest.h>

#include <random>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "oracles.hpp"

using namespace fedsim;
using namespace fedsim::metrics;

namespace {

constexpr auto TP = MatchLabel::kTruePositive;
constexpr auto FP = MatchLabel::kFalsePositive;

Detection det(Box b, int cls, double conf, std::int64_t img = 0) { return {b, cls, conf, img}; }
GroundTruth gt(Box b, int cls, std::int64_t img = 0) { return {b, cls, img}; }

const Box kUnit{0, 0, 1, 1};

}  // namespace

TEST_CASE("iou") {
  CHECK(iou(kUnit, kUnit) == 1.0);
  CHECK(iou(kUnit, Box{2, 2, 3, 3}) == 0.0);
  CHECK(iou(kUnit, Box{0.5, 0, 1.5, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou(Box{1, 1, 1, 1}, Box{1, 1, 1, 1}) == 0.0);
  CHECK(iou(kUnit, Box{1, 0, 2, 1}) == 0.0);  // shared edge only

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int i = 0; i < 500; ++i) {
    auto box = [&] {
      double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
      return Box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
    };
    const Box a = box(), b = box();
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
    if (a.area() > 0) CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("matching") {
  SUBCASE("perfect") {
    std::vector<Detection> d{det(kUnit, 0, 0.9)};
    std::vector<GroundTruth> g{gt(kUnit, 0)};
    const auto m = match_detections(d, g, 0);
    CHECK(m.true_positives == 1);
    CHECK(m.false_positives == 0);
    CHECK(m.false_negatives == 0);
  }
  SUBCASE("duplicate detections") {
    std::vector<Detection> d{det(Box{0, 0, 1, 0.9}, 0, 0.6), det(kUnit, 0, 0.8)};
    std::vector<GroundTruth> g{gt(kUnit, 0)};
    const auto m = match_detections(d, g, 0);
    CHECK(m.labels == std::vector<MatchLabel>{TP, FP});
    CHECK(m.confidences == std::vector<double>{0.8, 0.6});
  }
  SUBCASE("below threshold") {
    std::vector<Detection> d{det(Box{0, 0, 0.4, 1}, 0, 0.9)};
    std::vector<GroundTruth> g{gt(kUnit, 0)};
    const auto m = match_detections(d, g, 0);
    CHECK(m.labels == std::vector<MatchLabel>{FP});
    CHECK(m.false_negatives == 1);
  }
  SUBCASE("image and class must agree") {
    std::vector<Detection> d{det(kUnit, 0, 0.9, 1), det(kUnit, 1, 0.9, 0)};
    std::vector<GroundTruth> g{gt(kUnit, 0, 0)};
    const auto m = match_detections(d, g, 0);
    CHECK(m.labels == std::vector<MatchLabel>{FP});
    CHECK(m.num_ground_truth == 1);
  }
  SUBCASE("highest iou wins among free ground truths") {
    // The first detection overlaps both ground truths; it must take the exact
    // one, which leaves the second detection with nothing above threshold.
    std::vector<Detection> d{det(Box{0, 0, 1, 1}, 0, 0.9), det(Box{-0.3, 0, 0.7, 1}, 0, 0.5)};
    std::vector<GroundTruth> g{gt(Box{0.2, 0, 1.2, 1}, 0), gt(Box{0, 0, 1, 1}, 0)};
    const auto m = match_detections(d, g, 0);
    CHECK(m.labels == std::vector<MatchLabel>{TP, FP});
  }
  SUBCASE("bad threshold") {
    CHECK_THROWS_AS(match_detections({}, {}, 0, 0.0), InvalidInputError);
    CHECK_THROWS_AS(match_detections({}, {}, 0, 1.5), InvalidInputError);
  }
}

TEST_CASE("precision and recall") {
  CHECK(precision_recall(5, 5, 0) == std::pair{0.5, 1.0});
  CHECK(precision_recall(0, 0, 3) == std::pair{0.0, 0.0});
  CHECK(precision_recall(10, 0, 0) == std::pair{1.0, 1.0});
  CHECK(precision_recall(0, 0, 0) == std::pair{0.0, 0.0});
}

TEST_CASE("average precision") {
  const std::vector<MatchLabel> all_tp{TP, TP, TP};
  CHECK(average_precision(all_tp, 3) == 1.0);
  const std::vector<MatchLabel> tp_fp{TP, FP};
  CHECK(average_precision(tp_fp, 1) == 1.0);
  const std::vector<MatchLabel> fp_tp{FP, TP};
  CHECK(average_precision(fp_tp, 1) == 0.5);
  CHECK(average_precision(fp_tp, 0) == 0.0);
  CHECK(average_precision({}, 2) == 0.0);
  CHECK_THROWS_AS(average_precision(all_tp, 2), InvalidInputError);
  // TP FP TP with 3 gts: 1/3*1 + 1/3*2/3 = 5/9
  const std::vector<MatchLabel> mixed{TP, FP, TP};
  CHECK(average_precision(mixed, 3) == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("average precision agrees with the envelope enumeration") {
  for (std::size_t len = 0; len <= 8; ++len) {
    for (unsigned mask = 0; mask < (1u << len); ++mask) {
      std::vector<MatchLabel> labels;
      std::vector<bool> tp;
      for (std::size_t i = 0; i < len; ++i) {
        const bool t = (mask >> i) & 1u;
        labels.push_back(t ? TP : FP);
        tp.push_back(t);
      }
      const auto n_tp = static_cast<std::size_t>(__builtin_popcount(mask));
      for (std::size_t num_gt = std::max<std::size_t>(1, n_tp); num_gt <= std::max<std::size_t>(4, n_tp);
           ++num_gt) {
        CHECK(std::abs(average_precision(labels, num_gt) - oracle::ap_envelope_bruteforce(tp, num_gt)) <
              1e-12);
      }
    }
  }
}

TEST_CASE("pr curve recall is non-decreasing") {
  const std::vector<MatchLabel> labels{FP, TP, FP, FP, TP, TP, FP};
  const auto c = pr_curve(labels, 4);
  REQUIRE(c.points.size() == labels.size());
  for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].recall >= c.points[i - 1].recall);
  CHECK(c.points.back().recall == 0.75);
  CHECK(c.points.back().precision == doctest::Approx(3.0 / 7.0));
}

TEST_CASE("mean average precision") {
  SUBCASE("perfect two-class detector") {
    std::vector<Detection> d{det(kUnit, 0, 0.9), det(Box{2, 2, 3, 3}, 1, 0.8)};
    std::vector<GroundTruth> g{gt(kUnit, 0), gt(Box{2, 2, 3, 3}, 1)};
    CHECK(mean_average_precision(d, g, 2) == 1.0);
  }
  SUBCASE("ap 1.0 and 0.5 average to 0.75") {
    std::vector<Detection> d{det(kUnit, 0, 0.9), det(Box{5, 5, 6, 6}, 1, 0.9),
                             det(Box{2, 2, 3, 3}, 1, 0.4)};
    std::vector<GroundTruth> g{gt(kUnit, 0), gt(Box{2, 2, 3, 3}, 1)};
    CHECK(mean_average_precision(d, g, 2) == 0.75);
  }
  SUBCASE("classes without ground truth are left out") {
    std::vector<Detection> d{det(kUnit, 0, 0.9), det(kUnit, 2, 0.9)};
    std::vector<GroundTruth> g{gt(kUnit, 0)};
    CHECK(mean_average_precision(d, g, 3) == 1.0);
  }
  SUBCASE("no ground truth at all") {
    std::vector<Detection> d{det(kUnit, 0, 0.9)};
    CHECK_THROWS_AS(mean_average_precision(d, {}, 2), DegenerateInputError);
  }
  SUBCASE("a zero-confidence false positive never helps") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> pos(0.0, 5.0), conf(0.01, 1.0);
    std::uniform_int_distribution<int> cls(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<GroundTruth> g;
      std::vector<Detection> d;
      for (int i = 0; i < 4; ++i) {
        const double x = pos(rng), y = pos(rng);
        g.push_back(gt(Box{x, y, x + 1, y + 1}, cls(rng)));
      }
      for (int i = 0; i < 6; ++i) {
        const double x = pos(rng), y = pos(rng);
        d.push_back(det(Box{x, y, x + 1, y + 1}, cls(rng), conf(rng)));
      }
      const double before = mean_average_precision(d, g, 2);
      CHECK(before >= 0.0);
      CHECK(before <= 1.0);
      d.push_back(det(Box{10, 10, 11, 11}, cls(rng), 0.0));
      CHECK(mean_average_precision(d, g, 2) <= before);
    }
  }
}

TEST_CASE("classification metrics") {
  using P = std::vector<double>;
  SUBCASE("all correct") {
    std::vector<P> probs{{0.9, 0.1}, {0.2, 0.8}};
    std::vector<std::size_t> labels{0, 1};
    const auto s = classification_metrics(probs, labels);
    CHECK(s.accuracy == 1.0);
    CHECK(s.macro_f1 == 1.0);
  }
  SUBCASE("constant prediction") {
    std::vector<P> probs(4, P{0.7, 0.3});
    std::vector<std::size_t> labels{0, 0, 1, 1};
    const auto s = classification_metrics(probs, labels);
    CHECK(s.accuracy == 0.5);
    // class 0: P=0.5, R=1 -> F1=2/3; class 1: F1=0
    CHECK(s.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("ties go to the lowest index") {
    const P flat{0.25, 0.25, 0.25, 0.25};
    CHECK(argmax(flat) == 0);
    const P late{0.1, 0.45, 0.45};
    CHECK(argmax(late) == 1);
  }
  SUBCASE("empty or mismatched input") {
    CHECK_THROWS_AS(classification_metrics({}, {}), InvalidInputError);
    std::vector<P> probs{{1.0, 0.0}};
    std::vector<std::size_t> labels{0, 1};
    CHECK_THROWS_AS(classification_metrics(probs, labels), InvalidInputError);
  }
}

TEST_CASE("rounds to target") {
  const std::vector<std::pair<std::size_t, double>> curve{{1, 0.3}, {2, 0.5}, {3, 0.5}};
  CHECK(rounds_to_target(curve, 0.5) == 2u);
  CHECK_FALSE(rounds_to_target(curve, 0.51).has_value());
  CHECK(rounds_to_target(curve, 0.0) == 1u);
  for (double t = 0.0; t < 0.6; t += 0.05) {
    const auto lo = rounds_to_target(curve, t), hi = rounds_to_target(curve, t + 0.05);
    if (lo && hi) CHECK(*lo <= *hi);
    if (!lo) CHECK_FALSE(hi.has_value());
  }
}

TEST_CASE("line readers") {
  std::istringstream dets("# header\n3 1 0.75 0 0 2 2\n\n4 0 0.5 1 1 3 3\n");
  const auto d = read_detections(dets);
  REQUIRE(d.size() == 2);
  CHECK(d[0].image_id == 3);
  CHECK(d[0].class_id == 1);
  CHECK(d[0].confidence == 0.75);
  CHECK(d[1].box.x_max == 3.0);

  std::istringstream gts("3 1 0 0 2 2\n");
  const auto g = read_ground_truth(gts);
  REQUIRE(g.size() == 1);
  CHECK(g[0].box.y_max == 2.0);

  std::istringstream bad("1 0 0.5 0 0\n");
  CHECK_THROWS_AS(read_detections(bad), InvalidInputError);
  std::istringstream inverted("1 0 0.5 2 2 1 1\n");
  CHECK_THROWS_AS(read_detections(inverted), InvalidInputError);
  std::istringstream conf("1 0 1.5 0 0 1 1\n");
  CHECK_THROWS_AS(read_detections(conf), InvalidInputError);
}

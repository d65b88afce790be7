#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fedsim/aggregation.hpp"
#include "fedsim/errors.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

ClientUpdate update(std::size_t id, std::vector<std::size_t> hist, double fill = 0.0,
                    std::size_t params = 3) {
  return make_update(id, ParameterVector(params, fill), LabelHistogram(std::move(hist)));
}

std::vector<ClientUpdate> from_histograms(const std::vector<std::vector<std::size_t>>& h) {
  std::vector<ClientUpdate> out;
  for (std::size_t i = 0; i < h.size(); ++i) out.push_back(update(i, h[i]));
  return out;
}

// Random histogram sets with at least one non-zero count overall.
std::vector<std::vector<std::size_t>> random_histograms(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> clients(1, 10), labels(1, 5), count(0, 100);
  std::bernoulli_distribution zero(0.25);
  const std::size_t k = clients(rng), n = labels(rng);
  std::vector<std::vector<std::size_t>> h(k, std::vector<std::size_t>(n));
  for (auto& row : h) {
    for (auto& c : row) c = zero(rng) ? 0 : count(rng);
  }
  h[0][0] += 1;
  return h;
}

}  // namespace

TEST_CASE("fedavg weights") {
  auto w = compute_fedavg_weights(from_histograms({{60, 40}, {150, 150}}));
  CHECK(w.weights == std::vector<double>{0.25, 0.75});
  w = compute_fedavg_weights(from_histograms({{5, 5}, {5, 5}, {5, 5}, {5, 5}}));
  for (double x : w.weights) CHECK(x == 0.25);
  CHECK(compute_fedavg_weights(from_histograms({{1, 2}})).weights == std::vector<double>{1.0});
}

TEST_CASE("fedavgl weights") {
  CHECK(compute_fedavgl_weights(from_histograms({{8, 2}, {5, 5}})).weights ==
        std::vector<double>{0.5, 0.5});
  CHECK(compute_fedavgl_weights(from_histograms({{3, 0}, {0, 9}})).weights ==
        std::vector<double>{0.25, 0.75});
  const auto u = from_histograms({{7, 1}, {2, 30}, {0, 4}});
  CHECK(compute_fedavgl_weights(u).weights == compute_fedavg_weights(u).weights);
}

TEST_CASE("fedla weights") {
  CHECK(compute_fedla_weights(from_histograms({{8, 2}, {2, 8}})).weights ==
        std::vector<double>{0.5, 0.5});
  CHECK(compute_fedla_weights(from_histograms({{9, 1}, {1, 1}})).weights ==
        std::vector<double>{0.7, 0.3});
  for (double x : compute_fedla_weights(from_histograms({{4, 6}, {4, 6}, {4, 6}})).weights) {
    CHECK(x == 1.0 / 3.0);
  }
  // Absent label 1 is skipped: only label 0 and 2 count.
  const auto w = compute_fedla_weights(from_histograms({{3, 0, 1}, {1, 0, 1}}));
  CHECK(w.weights[0] == doctest::Approx((0.75 + 0.5) / 2.0).epsilon(1e-15));
  CHECK(w.weights[1] == doctest::Approx((0.25 + 0.5) / 2.0).epsilon(1e-15));
}

TEST_CASE("empty clients") {
  const auto w = compute_fedla_weights(from_histograms({{0, 0}, {3, 1}}));
  CHECK(w.weights == std::vector<double>{0.0, 1.0});
  CHECK(compute_fedavg_weights(from_histograms({{0, 0}, {3, 1}})).weights ==
        std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(compute_fedla_weights(from_histograms({{0, 0}, {0, 0}})), DegenerateInputError);
  CHECK_THROWS_AS(compute_fedavg_weights(from_histograms({{0, 0}})), DegenerateInputError);
  CHECK_THROWS_AS(compute_fedavgl_weights(from_histograms({{0, 0}})), DegenerateInputError);
  CHECK_THROWS_AS(compute_fedla_weights({}), InvalidInputError);
}

TEST_CASE("dispatch") {
  const auto skew = from_histograms({{9, 1}, {1, 1}});
  CHECK(weights_for(StrategyId::kFedProxLA, skew).weights == std::vector<double>{0.7, 0.3});
  CHECK(weights_for(StrategyId::kFedLA, skew).weights == std::vector<double>{0.7, 0.3});
  const auto even = from_histograms({{3, 2}, {1, 4}});
  CHECK(weights_for(StrategyId::kFedProx, even).weights == std::vector<double>{0.5, 0.5});
  CHECK(weights_for(StrategyId::kFedAvgL, skew).weights ==
        weights_for(StrategyId::kFedAvg, skew).weights);
  CHECK(uses_proximal_term(StrategyId::kFedProx));
  CHECK(uses_proximal_term(StrategyId::kFedProxLA));
  CHECK_FALSE(uses_proximal_term(StrategyId::kFedLA));
}

TEST_CASE("strategy names round trip") {
  for (StrategyId s : all_strategies()) CHECK(parse_strategy(to_string(s)) == s);
  CHECK(parse_strategy("fedprox+la") == StrategyId::kFedProxLA);
  CHECK_THROWS_AS(parse_strategy("fedsgd"), ConfigError);
}

TEST_CASE("weight properties on random histograms") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    const auto h = random_histograms(rng);
    const auto updates = from_histograms(h);
    for (StrategyId s : all_strategies()) {
      const auto w = weights_for(s, updates);
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
      for (double x : w.weights) CHECK(x >= 0.0);
    }

    const auto la = compute_fedla_weights(updates).weights;
    const auto ref = oracle::fedla_bruteforce(h);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(la[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // permutation equivariance
    std::vector<std::size_t> perm(h.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ClientUpdate> shuffled;
    for (std::size_t p : perm) shuffled.push_back(updates[p]);
    const auto ws = compute_fedla_weights(shuffled);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      CHECK(ws.weights[i] == doctest::Approx(la[perm[i]]).epsilon(1e-15));
    }

    // scale invariance
    auto scaled = h;
    for (auto& row : scaled) {
      for (auto& c : row) c *= 7;
    }
    const auto wk = compute_fedla_weights(from_histograms(scaled)).weights;
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(wk[i] == doctest::Approx(la[i]).epsilon(1e-15));
  }
}

TEST_CASE("identical histograms give identical weights across strategies") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> count(0, 50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> row{count(rng) + 1, count(rng), count(rng)};
    const std::size_t k = 1 + trial % 9;
    const auto u = from_histograms(std::vector<std::vector<std::size_t>>(k, row));
    const auto a = compute_fedavg_weights(u).weights;
    CHECK(compute_fedavgl_weights(u).weights == a);
    CHECK(compute_fedla_weights(u).weights == a);
    for (double x : a) CHECK(x == 1.0 / static_cast<double>(k));
  }
}

TEST_CASE("fedla dominance") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> count(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> b{count(rng), count(rng), count(rng)};
    std::vector<std::size_t> a = b;
    for (auto& c : a) c += 1 + count(rng);
    std::vector<std::size_t> other{count(rng), count(rng), count(rng)};
    const auto w = compute_fedla_weights(from_histograms({a, b, other})).weights;
    CHECK(w[0] > w[1]);
  }
}

TEST_CASE("aggregate") {
  SUBCASE("fixed point") {
    std::vector<ClientUpdate> u{update(0, {1, 2}, 0.123456789), update(1, {9, 1}, 0.123456789),
                                update(2, {4, 4}, 0.123456789)};
    const auto out = aggregate(u, compute_fedla_weights(u));
    for (double v : out) CHECK(v == 0.123456789);
  }
  SUBCASE("convex combination") {
    std::vector<ClientUpdate> u{update(0, {9, 1}, 0.0), update(1, {1, 1}, 1.0)};
    const auto out = aggregate(u, compute_fedla_weights(u));
    for (double v : out) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("singleton") {
    std::vector<ClientUpdate> u{make_update(4, ParameterVector(std::vector<double>{1.5, -2.0}),
                                            LabelHistogram({2, 2}))};
    CHECK(aggregate(u, compute_fedavg_weights(u)) == u[0].params);
  }
  SUBCASE("stays within the client envelope") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      auto hs = random_histograms(rng);
      auto u = from_histograms(hs);
      for (auto& x : u) {
        for (double& v : x.params) v = g(rng);
      }
      const auto out = aggregate(u, compute_fedla_weights(u));
      for (std::size_t k = 0; k < out.size(); ++k) {
        double lo = u[0].params[k], hi = lo;
        for (const auto& x : u) {
          lo = std::min(lo, x.params[k]);
          hi = std::max(hi, x.params[k]);
        }
        CHECK(out[k] >= lo - 1e-12);
        CHECK(out[k] <= hi + 1e-12);
      }
    }
  }
  SUBCASE("protocol errors") {
    std::vector<ClientUpdate> u{update(0, {1, 1}), update(1, {1, 1})};
    auto w = compute_fedavg_weights(u);
    w.client_ids[1] = 9;
    CHECK_THROWS_AS(aggregate(u, w), ProtocolError);
    std::vector<ClientUpdate> one{u[0]};
    CHECK_THROWS_AS(aggregate(one, compute_fedavg_weights(u)), ProtocolError);
    std::vector<ClientUpdate> dup{update(3, {1, 1}), update(3, {1, 1})};
    CHECK_THROWS_AS(compute_fedavg_weights(dup), ProtocolError);
    std::vector<ClientUpdate> ragged{update(0, {1, 1}), update(1, {1, 1, 1})};
    CHECK_THROWS_AS(compute_fedla_weights(ragged), ProtocolError);
    auto lying = update(0, {2, 2});
    lying.sample_count = 5;
    std::vector<ClientUpdate> bad{lying};
    CHECK_THROWS_AS(compute_fedavg_weights(bad), ProtocolError);
    std::vector<ClientUpdate> lengths{update(0, {1, 1}, 0.0, 3), update(1, {1, 1}, 0.0, 4)};
    CHECK_THROWS_AS(aggregate(lengths, compute_fedavg_weights(lengths)), ProtocolError);
  }
  SUBCASE("non-finite parameters") {
    std::vector<ClientUpdate> u{update(0, {1, 1}, 0.0), update(1, {1, 1}, INFINITY)};
    CHECK_THROWS_AS(aggregate(u, compute_fedavg_weights(u)), NumericalError);
  }
}

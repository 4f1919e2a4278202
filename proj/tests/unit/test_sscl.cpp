#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/random.hpp"
#include "lsinet/sscl/connection.hpp"
#include "lsinet/train/adam.hpp"
#include "oracles.hpp"

using namespace lsinet;
using namespace lsinet::sscl;
using TD = ad::Tensor<double>;

namespace {

MemoryBankConfig small_bank(std::size_t n) {
  MemoryBankConfig c;
  c.num_patches = n;
  c.memory_dim = 6;
  c.encoder_hidden = {10, 6};
  c.predictor_hidden = 8;
  return c;
}

void zero_all(ad::Mlp<double>& mlp) {
  for (auto& layer : mlp.layers()) {
    for (auto* t : {&layer.weight(), &layer.bias()}) {
      auto d = t->mutable_data();
      std::fill(d.begin(), d.end(), 0.0);
    }
  }
}

TD probs_from_c1(const std::vector<double>& c1) {
  std::vector<double> p;
  for (double c : c1) {
    p.push_back(1.0 - c);
    p.push_back(c);
  }
  return TD::from_data({c1.size(), 2}, p, true);
}

}  // namespace

TEST_CASE("pair features enumerate ordered pairs") {
  const auto m = TD::from_data({2, 1}, {7, 9});
  const auto h = pair_features(m);
  CHECK(h.shape() == ad::Shape{4, 2});
  CHECK(std::vector<double>(h.data().begin(), h.data().end()) ==
        std::vector<double>{7, 7, 7, 9, 9, 7, 9, 9});
  CHECK(pair_features(TD::zeros({3, 4})).shape() == ad::Shape{9, 8});
  CHECK_THROWS_AS(pair_features(TD::zeros({3})), ShapeError);
}

TEST_CASE("predictor with zero weights gives one half everywhere") {
  Rng rng(1);
  MemoryBank<double> bank(small_bank(3), rng);
  zero_all(bank.predictor());
  for (double c : class_one(bank.connection_probs())) CHECK(c == 0.5);

  auto b2 = bank.predictor().layers().back().bias().mutable_data();
  b2[1] = 10.0;
  for (double c : class_one(bank.connection_probs())) CHECK(c > 0.9999);
}

TEST_CASE("class probabilities sum to one") {
  Rng rng(2);
  MemoryBank<double> bank(small_bank(5), rng);
  const auto probs = bank.connection_probs();
  CHECK(probs.shape() == ad::Shape{25, 2});
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(std::abs(probs.at(2 * i) + probs.at(2 * i + 1) - 1.0) < 1e-6);
  }
  MemoryBank<float> fbank(small_bank(5), rng);
  const auto fp = fbank.connection_probs();
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(std::abs(fp.at(2 * i) + fp.at(2 * i + 1) - 1.0f) < 1e-6f);
  }
}

TEST_CASE("memory bank gradients against central differences") {
  Rng rng(3);
  MemoryBank<double> bank(small_bank(3), rng);
  ad::ParameterList<double> params;
  bank.collect("bank", params);
  std::vector<TD> wrt;
  for (auto& p : params) wrt.push_back(p.tensor);
  const auto w = TD::from_data({9, 2}, {0.3, -1.2, 0.7, 0.1, -0.4, 0.9, 1.1, -0.6, 0.2,
                                        0.5, -0.8, 0.4, 0.6, -0.3, 1.3, 0.05, -0.9, 0.8});
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::mul(bank.connection_probs(), w)); },
                               wrt) < 1e-4);
}

TEST_CASE("Gumbel-Softmax rejects non-positive temperature") {
  Rng rng(4);
  const auto p = probs_from_c1({0.5});
  CHECK_THROWS_AS(gumbel_softmax_sample(p, 0.0, rng), ConfigError);
  CHECK_THROWS_AS(gumbel_softmax_sample(p, -1.0, rng), ConfigError);
  CHECK_THROWS_AS(gumbel_softmax(p, TD::zeros({2, 2}), 1.0), ShapeError);
}

TEST_CASE("low temperature samples are nearly binary") {
  Rng rng(5);
  const auto p = probs_from_c1(std::vector<double>(1000, 0.99));
  const auto z = gumbel_softmax_sample(p, 0.01, rng);
  double mean = 0.0;
  std::size_t loose = 0;
  for (double v : z.data()) {
    mean += v;
    loose += std::min(v, 1.0 - v) >= 1e-3 ? 1 : 0;
  }
  CHECK(mean / 1000.0 > 0.95);
  // A sample is loose when |log-odds + logistic noise| < tau * log(999); the
  // logistic CDF gives the expected count, which is about 1.4 here.
  auto cdf = [](double x) { return 1.0 / (1.0 + std::exp(-(x - std::log(99.0)))); };
  const double band = 0.01 * std::log(999.0);
  const double expected = 1000.0 * (cdf(band) - cdf(-band));
  CHECK(expected < 2.0);
  CHECK(static_cast<double>(loose) <= expected + 4.0 * std::sqrt(expected) + 1.0);
}

TEST_CASE("even odds harden to one about half the time") {
  Rng rng(6);
  for (double tau : {0.1, 1.0, 5.0}) {
    const auto z = gumbel_softmax_sample(probs_from_c1(std::vector<double>(1000, 0.5)), tau, rng);
    double ones = 0.0;
    for (double v : z.data()) ones += v > 0.5 ? 1.0 : 0.0;
    CHECK(std::abs(ones / 1000.0 - 0.5) < 0.05);
  }
}

TEST_CASE("high temperature flattens samples towards one half") {
  Rng rng(7);
  const auto z = gumbel_softmax_sample(probs_from_c1({0.01, 0.3, 0.99}), 1e6, rng);
  for (double v : z.data()) CHECK(std::abs(v - 0.5) < 1e-4);
}

TEST_CASE("low temperature matches the Gumbel-Max argmax with shared noise") {
  Rng rng(8);
  const std::size_t draws = 10000;
  std::vector<double> c1(draws);
  for (auto& c : c1) c = rng.uniform(0.0, 1.0);
  const auto p = probs_from_c1(c1);
  const auto g = sample_gumbel_noise<double>(draws, rng);
  const auto z = gumbel_softmax(p, g, 0.01);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double s0 = std::log(1.0 - c1[i]) + g.at(2 * i);
    const double s1 = std::log(c1[i]) + g.at(2 * i + 1);
    if (std::abs(s1 - s0) < 1e-9) continue;
    const double argmax = s1 > s0 ? 1.0 : 0.0;
    const double hard = z.at(i) > 0.5 ? 1.0 : 0.0;
    mismatches += argmax != hard ? 1 : 0;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("hardened frequency of ones follows the probability") {
  for (double p : {0.1, 0.5, 0.9}) {
    Rng rng = Rng::stream(11, "frequency");
    const std::size_t draws = 10000;
    const auto z = gumbel_softmax_sample(probs_from_c1(std::vector<double>(draws, p)), 1.0, rng);
    double ones = 0.0;
    for (double v : z.data()) ones += v > 0.5 ? 1.0 : 0.0;
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
    INFO("p = " << p);
    CHECK(std::abs(ones / static_cast<double>(draws) - p) <= 3.0 * sigma);
  }
}

TEST_CASE("relaxed sample gradients against central differences") {
  Rng rng(9);
  auto p = probs_from_c1({0.2, 0.5, 0.8, 0.35});
  const auto g = sample_gumbel_noise<double>(4, rng);
  const auto w = TD::from_data({4}, {1.0, -2.0, 0.5, 1.5});
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::mul(gumbel_softmax(p, g, 0.7), w)); },
                               {p}) < 1e-4);
}

TEST_CASE("hardening") {
  const std::vector<double> c1{0.9, 0.1, 0.4, 0.6};
  CHECK(harden_threshold<double>(c1) == std::vector<double>{1, 0, 0, 1});
  CHECK(harden_threshold<double>(std::vector<double>(4, 0.5)) == std::vector<double>(4, 0.0));

  auto soft = TD::from_data({4}, {0.2, 0.7, 0.5, 0.51}, true);
  const auto hard = harden_straight_through(soft);
  CHECK(std::vector<double>(hard.data().begin(), hard.data().end()) ==
        std::vector<double>{0, 1, 0, 1});
  const auto w = TD::from_data({4}, {1, 2, 3, 4});
  ad::sum(ad::mul(hard, w)).backward();
  CHECK(std::vector<double>(soft.grad().begin(), soft.grad().end()) ==
        std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("straight-through passes the relaxed gradient to the probabilities") {
  Rng rng(10);
  auto p1 = probs_from_c1({0.3, 0.6, 0.45});
  auto p2 = probs_from_c1({0.3, 0.6, 0.45});
  const auto g = sample_gumbel_noise<double>(3, rng);
  const auto w = TD::from_data({3}, {0.5, -1.0, 2.0});
  ad::sum(ad::mul(harden_straight_through(gumbel_softmax(p1, g, 1.0)), w)).backward();
  ad::sum(ad::mul(gumbel_softmax(p2, g, 1.0), w)).backward();
  for (std::size_t i = 0; i < 6; ++i) CHECK(p1.grad()[i] == p2.grad()[i]);
}

TEST_CASE("top-K target") {
  CHECK(top_k_count(4, 0.25) == 1);
  CHECK(top_k_count(100, 0.15) == 15);
  CHECK(top_k_count(4096, 0.15) == 614);
  CHECK_THROWS_AS(top_k_count(4, 0.0), ConfigError);
  CHECK_THROWS_AS(top_k_count(4, 1.0), ConfigError);
  const std::vector<double> c1{0.2, 0.7, 0.7, 0.1};
  CHECK(top_k_target<double>(c1, 0.25) == std::vector<double>{0, 1, 0, 0});
  CHECK(top_k_target<double>(c1, 0.5) == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("ASRL examples") {
  const std::vector<double> c1{0.9, 0.1, 0.1, 0.1};
  const std::vector<double> target{1, 0, 0, 0};
  const auto p = probs_from_c1(c1);
  const double expect = oracle::binary_cross_entropy(c1, target);
  CHECK(expect == doctest::Approx(0.4214420626313051).epsilon(1e-15));
  CHECK(asrl_loss(p, std::span<const double>(target)).item() ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(asrl_loss(p, 0.25).item() == doctest::Approx(expect).epsilon(1e-12));

  const auto perfect = probs_from_c1({1.0, 0.0, 0.0, 0.0});
  CHECK(asrl_loss(perfect, 0.25).item() < 1e-7);

  const std::vector<double> short_target{1, 0};
  CHECK_THROWS_AS(asrl_loss(p, std::span<const double>(short_target)), ShapeError);
}

TEST_CASE("ASRL agrees with the scalar oracle on random probabilities") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> c1(36);
    for (auto& c : c1) c = rng.uniform(0.01, 0.99);
    const auto target = top_k_target<double>(c1, 0.15);
    CHECK(std::count(target.begin(), target.end(), 1.0) == 5);
    CHECK(asrl_loss(probs_from_c1(c1), 0.15).item() ==
          doctest::Approx(oracle::binary_cross_entropy(c1, target)).epsilon(1e-12));
  }
}

TEST_CASE("regularization indicator") {
  for (std::size_t e = 0; e < 10; ++e) CHECK(regularization_indicator(e, 1));
  const std::vector<bool> expect{true, false, false, true, false, false};
  for (std::size_t e = 0; e < 6; ++e) CHECK(regularization_indicator(e, 3) == expect[e]);
  CHECK(regularization_indicator(30, 3));
  CHECK_THROWS_AS(regularization_indicator(0, 0), ConfigError);
}

TEST_CASE("ASRL gradient steps decrease the loss on a frozen target") {
  Rng rng(14);
  MemoryBank<double> bank(small_bank(4), rng);
  ad::ParameterList<double> params;
  bank.collect("bank", params);
  const auto c1 = class_one(bank.connection_probs());
  const auto target = top_k_target<double>(c1, 0.15);
  train::Adam<double> opt(params, 1e-2);
  double previous = asrl_loss(bank.connection_probs(), std::span<const double>(target)).item();
  for (int step = 0; step < 10; ++step) {
    opt.zero_grad();
    asrl_loss(bank.connection_probs(), std::span<const double>(target)).backward();
    opt.step();
    const double now = asrl_loss(bank.connection_probs(), std::span<const double>(target)).item();
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("connection matrix snapshot") {
  ConnectionMatrix m;
  m.num_patches = 2;
  m.z_hard = {1, 0, 0, 1};
  CHECK(m.ones_fraction() == 0.5);
  CHECK(ConnectionMatrix{}.ones_fraction() == 0.0);
}

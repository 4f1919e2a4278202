#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "lsinet/autodiff/layers.hpp"
#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/random.hpp"
#include "oracles.hpp"

using namespace lsinet;
using TD = ad::Tensor<double>;

namespace {

TD leaf(ad::Shape shape, std::vector<double> v) {
  return TD::from_data(std::move(shape), std::move(v), true);
}

TD random_leaf(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TD::from_data(std::move(shape), std::move(v), true);
}

TD random_const(ad::Shape shape, Rng& rng) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return TD::from_data(std::move(shape), std::move(v));
}

std::vector<double> values(const TD& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul small products") {
  auto eye = TD::from_data({2, 2}, {1, 0, 0, 1});
  auto col = TD::from_data({2, 1}, {3, 4});
  CHECK(values(ad::matmul(eye, col)) == std::vector<double>{3, 4});
  auto row = TD::from_data({1, 2}, {1, 2});
  auto r = ad::matmul(row, col);
  CHECK(r.shape() == ad::Shape{1, 1});
  CHECK(r.item() == 11);
}

TEST_CASE("matmul gradient of sum against central differences") {
  Rng rng(11);
  TD a = random_leaf({5, 7}, rng);
  TD b = random_leaf({7, 3}, rng);
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::matmul(a, b)); }, {a, b}) < 1e-4);
}

TEST_CASE("matmul batch broadcasting rules") {
  Rng rng(5);
  TD x = random_leaf({2, 3, 4}, rng);
  TD w = random_leaf({4, 5}, rng);
  auto y = ad::matmul(x, w);
  CHECK(y.shape() == ad::Shape{2, 3, 5});
  // Each batch slice equals its own 2-D product.
  auto xs = values(x);
  auto ws = values(w);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> slice(xs.begin() + static_cast<long>(b * 12),
                              xs.begin() + static_cast<long>((b + 1) * 12));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(y.at(b * 15 + i * 5 + j) ==
              doctest::Approx(oracle::dense_matmul_entry(slice, ws, 4, 5, i, j)).epsilon(1e-12));
      }
    }
  }
  TD g = random_leaf({3, 3}, rng);
  CHECK(ad::matmul(g, x).shape() == ad::Shape{2, 3, 4});
  CHECK_THROWS_AS(ad::matmul(w, w), ShapeError);
  TD other = random_leaf({3, 4, 5}, rng);
  CHECK_THROWS_AS(ad::matmul(x, other), ShapeError);
  try {
    ad::matmul(w, w);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(4, 5)") != std::string::npos);
  }
}

TEST_CASE("elementwise examples") {
  auto r = ad::relu(TD::from_data({3}, {-1, 0, 2}));
  CHECK(values(r) == std::vector<double>{0, 0, 2});

  auto x = TD::from_data({3}, {0.5, 1.0, 3.0});
  auto round_trip = ad::exp(ad::log(x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(round_trip.at(i) - x.at(i)) < 1e-12);

  auto v = leaf({2}, {-1, 2});
  ad::sum(ad::relu(v)).backward();
  CHECK(std::vector<double>(v.grad().begin(), v.grad().end()) == std::vector<double>{0, 1});

  auto z = leaf({1}, {0.0});
  ad::sum(ad::relu(z)).backward();
  CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("log of a non-positive entry names its index") {
  auto x = TD::from_data({4}, {1.0, 2.0, -3.0, 0.0});
  try {
    ad::log(x);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.index() == 2);
  }
  CHECK_THROWS_AS(ad::log(TD::from_data({1}, {0.0})), DomainError);
}

TEST_CASE("elementwise broadcasting is narrow") {
  auto a = TD::zeros({2, 3});
  CHECK(ad::add(a, TD::zeros({3})).shape() == ad::Shape{2, 3});
  CHECK(ad::add(a, TD::scalar(1.0)).shape() == ad::Shape{2, 3});
  CHECK(ad::add(TD::scalar(1.0), a).shape() == ad::Shape{2, 3});
  CHECK_THROWS_AS(ad::add(a, TD::zeros({2})), ShapeError);
  CHECK_THROWS_AS(ad::add(a, TD::zeros({2, 1})), ShapeError);
  CHECK_THROWS_AS(ad::mul(a, TD::zeros({3, 2})), ShapeError);
}

TEST_CASE("softmax examples") {
  auto s = ad::softmax(TD::from_data({2}, {0, 0}), 0);
  CHECK(s.at(0) == doctest::Approx(0.5));
  CHECK(s.at(1) == doctest::Approx(0.5));
  auto big = ad::softmax(TD::from_data({2}, {1000, 0}), 0);
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) < 1e-300);
  CHECK_THROWS(ad::softmax(TD::zeros({2}), 1));
}

TEST_CASE("softmax sums to one for any finite input") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_const({4, 6}, rng);
    auto xs = x.mutable_data();
    for (auto& v : xs) v *= rng.uniform(0.0, 500.0);
    for (std::size_t axis : {0u, 1u}) {
      auto s = ad::softmax(x, axis);
      auto sums = ad::sum(s, axis);
      for (double v : sums.data()) CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax Jacobian against central differences") {
  Rng rng(9);
  TD x = random_leaf({5}, rng, -2.0, 2.0);
  TD w = random_const({5}, rng);
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::mul(ad::softmax(x, 0), w)); }, {x}) <
        1e-4);
}

TEST_CASE("reductions") {
  CHECK(ad::mean(TD::from_data({3}, {1, 2, 3})).item() == 2.0);
  auto s = ad::sum(TD::from_data({2, 2}, {1, 2, 3, 4}), 0);
  CHECK(s.shape() == ad::Shape{2});
  CHECK(values(s) == std::vector<double>{4, 6});
  auto x = leaf({4}, {1, 2, 3, 4});
  ad::mean(x).backward();
  for (double g : x.grad()) CHECK(g == 0.25);
}

TEST_CASE("concat, reshape, flatten and transpose") {
  auto c = ad::concat<double>({TD::from_data({1, 1}, {1}), TD::from_data({1, 1}, {2})}, 0);
  CHECK(c.shape() == ad::Shape{2, 1});
  CHECK(values(c) == std::vector<double>{1, 2});

  auto x = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  auto f = ad::flatten(x);
  CHECK(f.shape() == ad::Shape{6});
  CHECK(values(ad::reshape(f, {2, 3})) == values(x));
  CHECK(shape_to_string(f.shape()) == "(6,)");

  // d flatten(x) / dx is the identity: each output picks exactly its input.
  for (std::size_t k = 0; k < 6; ++k) {
    x.zero_grad();
    ad::sum(ad::slice(ad::flatten(x), 0, k, 1)).backward();
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == (i == k ? 1.0 : 0.0));
  }

  auto t = ad::transpose(TD::from_data({2, 3}, {1, 2, 3, 4, 5, 6}), 0, 1);
  CHECK(t.shape() == ad::Shape{3, 2});
  CHECK(values(t) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK_THROWS_AS(ad::concat<double>({TD::zeros({1, 2}), TD::zeros({1, 3})}, 0), ShapeError);
  CHECK_THROWS_AS(ad::reshape(x, {4}), ShapeError);
}

TEST_CASE("backward examples") {
  auto x = leaf({2}, {1, 2});
  ad::sum(ad::mul(x, x)).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4});

  // Repeated calls accumulate.
  ad::sum(ad::mul(x, x)).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{4, 8});

  auto used = leaf({2}, {1, 1});
  auto unused = leaf({2}, {3, 3});
  ad::sum(used).backward();
  for (double g : unused.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(ad::mul(x, x).backward(), ContractError);
}

TEST_CASE("a node shared by several paths receives every contribution") {
  auto x = leaf({1}, {3});
  auto y = ad::mul(x, x);      // x^2
  auto z = ad::add(y, ad::mul(y, x));  // x^2 + x^3
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 3 + 3 * 9));
}

TEST_CASE("backward is bit-wise deterministic") {
  Rng rng(4);
  auto a = random_leaf({6, 5}, rng);
  auto b = random_leaf({5, 4}, rng);
  auto build = [&] {
    return ad::sum(ad::softmax(ad::relu(ad::matmul(a, b)), 1));
  };
  build().backward();
  const std::vector<double> first(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  build().backward();
  CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == first);
}

TEST_CASE("requires_grad only on leaves; no-grad scope records nothing") {
  auto x = leaf({2}, {1, 2});
  auto y = ad::mul(x, x);
  CHECK(y.requires_grad());
  CHECK_THROWS_AS(y.set_requires_grad(false), ContractError);
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    CHECK_FALSE(ad::mul(x, x).requires_grad());
  }
  CHECK(ad::grad_enabled());
}

TEST_CASE("detach blocks gradients; straight-through passes them") {
  auto x = leaf({3}, {0.2, 0.7, 0.4});
  ad::sum(ad::mul(x.detach(), x)).backward();
  CHECK(x.grad()[1] == doctest::Approx(0.7));

  x.zero_grad();
  auto st = ad::straight_through(x, {0, 1, 0});
  CHECK(values(st) == std::vector<double>{0, 1, 0});
  auto w = TD::from_data({3}, {1, 2, 3});
  ad::sum(ad::mul(st, w)).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 2, 3});
}

// Every op at 64-bit for 20 seeds, eps 1e-5, tolerance 1e-4.
TEST_CASE("finite-difference agreement for every op over 20 seeds") {
  using Case = std::function<double(Rng&)>;
  auto project = [](const TD& probe, Rng& rng) { return random_const(probe.shape(), rng); };
  auto check = [&](Rng& rng, std::vector<TD> wrt, const std::function<TD()>& f) {
    const TD w = project(f(), rng);
    return oracle::gradient_error([&] { return ad::sum(ad::mul(f(), w)); }, wrt);
  };
  const std::vector<std::pair<std::string, Case>> cases = {
      {"matmul", [&](Rng& r) {
         TD a = random_leaf({5, 7}, r), b = random_leaf({7, 3}, r);
         return check(r, {a, b}, [&] { return ad::matmul(a, b); });
       }},
      {"matmul_batched", [&](Rng& r) {
         TD a = random_leaf({2, 3, 4}, r), b = random_leaf({2, 4, 2}, r);
         return check(r, {a, b}, [&] { return ad::matmul(a, b); });
       }},
      {"matmul_left_shared", [&](Rng& r) {
         TD a = random_leaf({3, 3}, r), b = random_leaf({2, 3, 4}, r);
         return check(r, {a, b}, [&] { return ad::matmul(a, b); });
       }},
      {"add", [&](Rng& r) {
         TD a = random_leaf({3, 4}, r), b = random_leaf({4}, r);
         return check(r, {a, b}, [&] { return ad::add(a, b); });
       }},
      {"sub", [&](Rng& r) {
         TD a = random_leaf({3, 4}, r), b = random_leaf({3, 4}, r);
         return check(r, {a, b}, [&] { return ad::sub(a, b); });
       }},
      {"mul", [&](Rng& r) {
         TD a = random_leaf({2, 3, 4}, r), b = random_leaf({3, 4}, r);
         return check(r, {a, b}, [&] { return ad::mul(a, b); });
       }},
      {"relu", [&](Rng& r) {
         TD a = random_leaf({20}, r);
         return check(r, {a}, [&] { return ad::relu(a); });
       }},
      {"exp", [&](Rng& r) {
         TD a = random_leaf({6}, r);
         return check(r, {a}, [&] { return ad::exp(a); });
       }},
      {"log", [&](Rng& r) {
         TD a = random_leaf({6}, r, 0.1, 3.0);
         return check(r, {a}, [&] { return ad::log(a); });
       }},
      {"neg_scale", [&](Rng& r) {
         TD a = random_leaf({6}, r);
         return check(r, {a}, [&] { return ad::scale(ad::neg(a), 1.7); });
       }},
      {"softmax", [&](Rng& r) {
         TD a = random_leaf({3, 5}, r, -2.0, 2.0);
         return check(r, {a}, [&] { return ad::softmax(a, 1); });
       }},
      {"sum_mean", [&](Rng& r) {
         TD a = random_leaf({3, 4, 2}, r);
         return check(r, {a}, [&] { return ad::add(ad::sum(a, 1), ad::mean(a, 1)); });
       }},
      {"concat", [&](Rng& r) {
         TD a = random_leaf({2, 3}, r), b = random_leaf({2, 1}, r);
         return check(r, {a, b}, [&] { return ad::concat<double>({a, b}, 1); });
       }},
      {"reshape_flatten", [&](Rng& r) {
         TD a = random_leaf({2, 3, 2}, r);
         return check(r, {a}, [&] { return ad::reshape(ad::flatten(a, 1), {3, 4}); });
       }},
      {"transpose", [&](Rng& r) {
         TD a = random_leaf({2, 3, 4}, r);
         return check(r, {a}, [&] { return ad::transpose(ad::transpose(a, 0, 2), 1, 2); });
       }},
      {"slice_gather", [&](Rng& r) {
         TD a = random_leaf({3, 4}, r);
         const std::vector<std::size_t> rows{2, 0, 2};
         return check(r, {a}, [&] { return ad::gather_rows<double>(ad::slice(a, 1, 1, 2), rows); });
       }},
  };
  for (const auto& [name, run] : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng = Rng::stream(seed, name);
      worst = std::max(worst, run(rng));
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("linear and MLP along axis 1 equal the transpose formulation") {
  Rng rng(21);
  ad::Mlp<double> mlp({4, 6, 4}, rng);
  TD x = random_leaf({3, 4, 5}, rng);
  auto fused = mlp.along_axis1(x);
  auto reference = ad::along_axis1(x, mlp);
  REQUIRE(fused.shape() == reference.shape());
  for (std::size_t i = 0; i < fused.numel(); ++i) {
    CHECK(fused.at(i) == doctest::Approx(reference.at(i)).epsilon(1e-12));
  }
  std::vector<TD> wrt{x};
  ad::ParameterList<double> params;
  mlp.collect("mlp", params);
  for (auto& p : params) wrt.push_back(p.tensor);
  TD w = random_const(fused.shape(), rng);
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::mul(mlp.along_axis1(x), w)); }, wrt) <
        1e-4);
}

TEST_CASE("random streams are reproducible and distinct") {
  Rng a = Rng::stream(7, "init");
  Rng b = Rng::stream(7, "init");
  Rng c = Rng::stream(7, "gumbel");
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
}

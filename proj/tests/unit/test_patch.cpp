#include <vector>

#include "doctest.h"
#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/patch/patch_encoding.hpp"
#include "lsinet/random.hpp"
#include "oracles.hpp"

using namespace lsinet;
using namespace lsinet::patch;
using TD = ad::Tensor<double>;

namespace {

std::vector<std::vector<double>> patches_of(const std::vector<double>& h, const PatchConfig& c) {
  std::vector<double> flat(c.num_patches * c.patch_length);
  patch<double>(h, c, flat);
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < c.num_patches; ++p) {
    out.emplace_back(flat.begin() + static_cast<long>(p * c.patch_length),
                     flat.begin() + static_cast<long>((p + 1) * c.patch_length));
  }
  return out;
}

}  // namespace

TEST_CASE("geometry from a target patch count") {
  const auto a = derive_patch_geometry(512, 64);
  CHECK(a.stride == 8);
  CHECK(a.patch_length == 16);
  CHECK(a.num_patches == 64);
  const auto b = derive_patch_geometry(1024, 64);
  CHECK(b.stride == 16);
  CHECK(b.patch_length == 32);
  CHECK(b.num_patches == 64);
  CHECK(derive_patch_geometry(256, 64).num_patches == 64);
  CHECK(derive_patch_geometry(336, 42, 16).embed_dim == 16);
  try {
    derive_patch_geometry(100, 64);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("at most 50") != std::string::npos);
  }
}

TEST_CASE("patch count formula and validation") {
  CHECK(patch_count(6, 4, 2) == 3);
  CHECK(patch_count(10, 10, 3) == 2);
  CHECK_THROWS_AS(patch_count(10, 0, 1), ConfigError);
  CHECK_THROWS_AS(patch_count(10, 11, 1), ConfigError);
  CHECK_THROWS_AS(patch_count(10, 4, 0), ConfigError);
}

TEST_CASE("patch examples") {
  const std::vector<double> h{1, 2, 3, 4, 5, 6};
  const auto c = make_patch_config(6, 4, 2, 8);
  const auto p = patches_of(h, c);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == std::vector<double>{1, 2, 3, 4});
  CHECK(p[1] == std::vector<double>{3, 4, 5, 6});
  CHECK(p[2] == std::vector<double>{5, 6, 6, 6});

  const auto full = make_patch_config(5, 5, 3, 8);
  const auto q = patches_of({1, 2, 3, 4, 5}, full);
  REQUIRE(q.size() == 2);
  CHECK(q[0] == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(q[1] == std::vector<double>{4, 5, 5, 5, 5});

  std::vector<double> out(12);
  CHECK_THROWS_AS(patch<double>(std::vector<double>(5, 0.0), c, out), ShapeError);
}

TEST_CASE("patches agree with a brute-force enumerator") {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(120);
    const std::size_t len = 1 + rng.below(n);
    const std::size_t k = 1 + rng.below(len + 4);
    std::vector<double> h(n);
    for (auto& v : h) v = rng.normal();
    const auto c = make_patch_config(n, len, k, 4);
    const auto expect = oracle::enumerate_patches(h, len, k);
    CHECK(c.num_patches == expect.size());
    CHECK(patches_of(h, c) == expect);
  }
}

TEST_CASE("neighbouring patches overlap in K positions when L = 2K") {
  Rng rng(4);
  for (std::size_t n : {64u, 100u, 512u}) {
    const auto c = derive_patch_geometry(n, n / 8);
    std::vector<double> h(n);
    for (auto& v : h) v = rng.normal();
    const auto p = patches_of(h, c);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      for (std::size_t j = 0; j < c.stride; ++j) CHECK(p[i][c.stride + j] == p[i + 1][j]);
    }
  }
}

TEST_CASE("patch_rows stacks one block per history") {
  const auto c = make_patch_config(6, 4, 2, 8);
  const std::vector<double> two{1, 2, 3, 4, 5, 6, 6, 5, 4, 3, 2, 1};
  const auto t = patch_rows<double>(two, 2, c);
  CHECK(t.shape() == ad::Shape{2, 3, 4});
  CHECK(t.at(12) == 6);
  CHECK(t.at(23) == 1);
  CHECK(t.at(22) == 1);
  CHECK_THROWS_AS(patch_rows<double>(two, 3, c), ShapeError);
}

TEST_CASE("embedding examples") {
  Rng rng(1);
  const auto patches = TD::from_data({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  const auto raw = embed(patches, TD::from_data({3, 3}, eye), TD::zeros({2, 3}));
  CHECK(std::vector<double>(raw.data().begin(), raw.data().end()) ==
        std::vector<double>(patches.data().begin(), patches.data().end()));

  const auto pos = TD::from_data({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const auto only = embed(patches, TD::zeros({3, 3}), pos);
  CHECK(std::vector<double>(only.data().begin(), only.data().end()) ==
        std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
}

TEST_CASE("positions break permutation symmetry") {
  Rng rng(2);
  const auto c = make_patch_config(8, 4, 2, 6);
  PatchEmbedding<double> emb(c, rng);
  std::vector<double> a(c.num_patches * 4), b(a.size());
  for (auto& v : a) v = rng.normal();
  // Swap patches 0 and 1.
  b = a;
  std::swap_ranges(b.begin(), b.begin() + 4, b.begin() + 4);
  const auto ea = emb(TD::from_data({c.num_patches, 4}, a));
  const auto eb = emb(TD::from_data({c.num_patches, 4}, b));
  bool permuted_equal = true;
  for (std::size_t j = 0; j < 6; ++j) {
    permuted_equal = permuted_equal && ea.at(j) == eb.at(6 + j) && ea.at(6 + j) == eb.at(j);
  }
  CHECK_FALSE(permuted_equal);

  // Constant positions restore it.
  auto pos = emb.positions().mutable_data();
  std::fill(pos.begin(), pos.end(), 0.25);
  const auto ca = emb(TD::from_data({c.num_patches, 4}, a));
  const auto cb = emb(TD::from_data({c.num_patches, 4}, b));
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(ca.at(j) == doctest::Approx(cb.at(6 + j)));
  }
}

TEST_CASE("embedding gradients against central differences") {
  Rng rng(6);
  const auto c = make_patch_config(12, 4, 2, 5);
  PatchEmbedding<double> emb(c, rng);
  std::vector<double> x(3 * c.num_patches * 4);
  for (auto& v : x) v = rng.normal();
  const auto patches = TD::from_data({3, c.num_patches, 4}, x);
  CHECK(oracle::gradient_error([&] { return ad::sum(emb(patches)); },
                               {emb.projection(), emb.positions()}) < 1e-4);
  std::vector<double> w(3 * c.num_patches * 5);
  for (auto& v : w) v = rng.normal();
  const auto weights = TD::from_data({3, c.num_patches, 5}, w);
  CHECK(oracle::gradient_error([&] { return ad::sum(ad::mul(emb(patches), weights)); },
                               {emb.projection(), emb.positions()}) < 1e-4);
}

TEST_CASE("initialisation scales") {
  Rng rng(3);
  const auto c = derive_patch_geometry(512, 64);
  PatchEmbedding<double> emb(c, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.patch_length));
  for (double v : emb.projection().data()) CHECK(std::abs(v) <= bound);
  double sq = 0.0;
  for (double v : emb.positions().data()) sq += v * v;
  const double sd = std::sqrt(sq / static_cast<double>(emb.positions().numel()));
  CHECK(sd == doctest::Approx(0.02).epsilon(0.05));
}

// Copyright 2026 The pico Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pico/error.hpp"
#include "pico/nce.hpp"
#include "pico/rng.hpp"

using namespace pico;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.uniform() - 1.0;
  return m;
}

EmbeddingBatch random_batch(Rng& rng, std::size_t m, std::size_t k, std::size_t d) {
  EmbeddingBatch b;
  b.queries = random_matrix(rng, m, d);
  b.positives = random_matrix(rng, m, d);
  b.negatives = random_matrix(rng, k - 1, d);
  return b;
}

// Plain loop evaluation in long double.
long double cosine_ld(const double* a, const double* b, Eigen::Index d) {
  long double ab = 0, aa = 0, bb = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double reference_loss(const EmbeddingBatch& b) {
  const Eigen::Index d = b.queries.cols();
  long double total = 0;
  for (Eigen::Index i = 0; i < b.queries.rows(); ++i) {
    const Matrix& neg = b.negatives_for(static_cast<std::size_t>(i));
    const long double sp = cosine_ld(b.queries.row(i).data(), b.positives.row(i).data(), d) /
                           b.temperature;
    long double denom = std::exp(sp);
    for (Eigen::Index j = 0; j < neg.rows(); ++j) {
      denom += std::exp(cosine_ld(b.queries.row(i).data(), neg.row(j).data(), d) /
                        b.temperature);
    }
    total += std::log(denom) - sp;
  }
  return b.queries.rows() == 0 ? 0.0 : static_cast<double>(total / b.queries.rows());
}

// Full central difference of the reference loss for one coordinate.
double numeric(EmbeddingBatch b, Matrix EmbeddingBatch::*which, Eigen::Index r,
               Eigen::Index c, double h) {
  const double x = (b.*which)(r, c);
  (b.*which)(r, c) = x + h;
  const double up = reference_loss(b);
  (b.*which)(r, c) = x - h;
  const double down = reference_loss(b);
  return (up - down) / (2 * h);
}

}  // namespace

TEST_CASE("similarity") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  b /= std::sqrt(2.0);
  CHECK(similarity(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(similarity(a, b, 0.2) == doctest::Approx(std::sqrt(0.5) / 0.2).epsilon(1e-14));
  CHECK(similarity(a, b, 0.2) == doctest::Approx(3.5355339).epsilon(1e-7));
  Vector o(2);
  o << 0, 3;
  CHECK(similarity(a, o, 0.2) == 0.0);
  CHECK_THROWS_AS(similarity(a, Vector::Zero(2), 0.2), DegenerateEmbedding);
}

TEST_CASE("loss from logits") {
  const std::vector<double> zero = {0.0};
  const LogitLoss l = info_nce_from_logits(std::log(3.0), zero);
  CHECK(std::abs(l.loss - std::log(4.0 / 3.0)) < 1e-12);
  CHECK(l.loss == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK(l.grad_positive == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(l.grad_negatives[0] == doctest::Approx(0.25).epsilon(1e-14));

  for (std::size_t k : {2, 3, 8, 64, 4096}) {
    const std::vector<double> negs(k - 1, 1.7);
    const LogitLoss eq = info_nce_from_logits(1.7, negs);
    CHECK(std::abs(eq.loss - std::log(double(k))) < 1e-12);
    CHECK(std::abs(eq.grad_positive + double(k - 1) / k) < 1e-14);
  }

  double prev = 1e300;
  for (double sp = -5.0; sp < 40.0; sp += 0.5) {
    const double v = info_nce_from_logits(sp, std::vector<double>{0.3, -1.0}).loss;
    CHECK(v >= 0.0);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(prev < 1e-15);

  SUBCASE("extreme logits") {
    for (double s : {700.0, -700.0}) {
      const LogitLoss e = info_nce_from_logits(s, std::vector<double>{-s, s, 0.0});
      CHECK(std::isfinite(e.loss));
      CHECK(std::isfinite(e.grad_positive));
    }
    CHECK(info_nce_from_logits(700.0, std::vector<double>{-700.0}).loss == 0.0);
    CHECK(info_nce_from_logits(-700.0, std::vector<double>{700.0}).loss ==
          doctest::Approx(1400.0));
    CHECK(std::abs(info_nce_from_logits(700.0, std::vector<double>{700.0}).loss -
                   std::log(2.0)) < 1e-12);
  }
}

TEST_CASE("batch loss matches a loop reference") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    EmbeddingBatch b = random_batch(rng, 1 + rng.below(12), 2 + rng.below(20), 1 + rng.below(40));
    b.temperature = 0.05 + rng.uniform();
    CHECK(std::abs(info_nce_loss(b) - reference_loss(b)) < 1e-11);
    CHECK(info_nce_loss(b) >= 0.0);
  }
}

TEST_CASE("equal similarities give log K") {
  // Every key equals its query, so all K logits are 1/tau.
  Rng rng(2);
  EmbeddingBatch b;
  b.queries = random_matrix(rng, 5, 16);
  b.positives = b.queries;
  b.negatives = Matrix(7, 16);
  for (int j = 0; j < 7; ++j) b.negatives.row(j) = b.queries.row(0) * (j + 1.0);
  b.queries.rowwise() = b.queries.row(0);
  b.positives = b.queries;
  CHECK(std::abs(info_nce_loss(b) - std::log(8.0)) < 1e-12);
}

TEST_CASE("shift invariance through embedding scale") {
  // Scaling keys does not move cosine logits; the loss is unchanged.
  Rng rng(3);
  EmbeddingBatch b = random_batch(rng, 6, 10, 8);
  const double base = info_nce_loss(b);
  b.positives *= 7.5;
  b.negatives *= 0.01;
  CHECK(std::abs(info_nce_loss(b) - base) < 1e-12);
}

TEST_CASE("analytic gradient against finite differences") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingBatch b = random_batch(rng, 1 + rng.below(4), 2 + rng.below(6), 2 + rng.below(6));
    b.temperature = 0.1 + 0.5 * rng.uniform();
    const NceGradients g = info_nce_grad(b);
    CHECK(std::abs(g.loss - reference_loss(b)) < 1e-12);
    for (auto which : {&EmbeddingBatch::queries, &EmbeddingBatch::positives,
                       &EmbeddingBatch::negatives}) {
      const Matrix& analytic = which == &EmbeddingBatch::queries     ? g.queries
                               : which == &EmbeddingBatch::positives ? g.positives
                                                                     : g.negatives;
      REQUIRE(analytic.rows() == (b.*which).rows());
      for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
        for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
          CHECK(analytic(r, c) == doctest::Approx(numeric(b, which, r, c, 1e-5)).epsilon(1e-6));
        }
      }
    }
    CHECK(check_gradient(b).max_rel_error < 1e-6);
  }
}

TEST_CASE("gradient check at full width") {
  Rng rng(5);
  const EmbeddingBatch b = random_batch(rng, 8, 64, 128);
  const GradCheckReport r = check_gradient(b);
  CHECK(r.max_rel_error < 1e-5);
  CHECK(r.max_abs_error < 1e-8);
}

TEST_CASE("equal-logit gradient on the positive") {
  // d loss / d s+ = -(K-1)/K; the chain rule through cosine at q = p gives
  // zero, so check it on the logits directly and on the gradient sign.
  const std::vector<double> negs(3, 2.0);
  CHECK(info_nce_from_logits(2.0, negs).grad_positive == doctest::Approx(-0.75).epsilon(1e-14));
}

TEST_CASE("empty query set") {
  Rng rng(8);
  EmbeddingBatch b;
  b.queries = Matrix(0, 4);
  b.positives = Matrix(0, 4);
  b.negatives = random_matrix(rng, 3, 4);
  CHECK(info_nce_loss(b) == 0.0);
  const NceGradients g = info_nce_grad(b);
  REQUIRE(g.negatives.rows() == 3);
  CHECK(g.negatives.isZero(0.0));
}

TEST_CASE("per-query negatives") {
  Rng rng(9);
  EmbeddingBatch b = random_batch(rng, 3, 5, 6);
  b.per_query_negatives = {random_matrix(rng, 4, 6), random_matrix(rng, 4, 6),
                           random_matrix(rng, 4, 6)};
  CHECK(std::abs(info_nce_loss(b) - reference_loss(b)) < 1e-12);
  const NceGradients g = info_nce_grad(b);
  REQUIRE(g.per_query_negatives.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EmbeddingBatch up = b, down = b;
    up.per_query_negatives[i](1, 2) += 1e-5;
    down.per_query_negatives[i](1, 2) -= 1e-5;
    const double num = (reference_loss(up) - reference_loss(down)) / 2e-5;
    CHECK(g.per_query_negatives[i](1, 2) == doctest::Approx(num).epsilon(1e-6));
  }
  CHECK(check_gradient(b).max_rel_error < 1e-6);
}

TEST_CASE("batch validation") {
  Rng rng(10);
  EmbeddingBatch b = random_batch(rng, 3, 4, 5);
  CHECK_NOTHROW(b.validate());
  EmbeddingBatch wide = b;
  wide.negatives = random_matrix(rng, 3, 6);
  CHECK_THROWS_AS(wide.validate(), ShapeError);
  EmbeddingBatch rows = b;
  rows.positives = random_matrix(rng, 2, 5);
  CHECK_THROWS_AS(rows.validate(), ShapeError);
  EmbeddingBatch nobank = b;
  nobank.negatives = Matrix(0, 5);
  CHECK_THROWS_AS(nobank.validate(), ShapeError);
  EmbeddingBatch tau = b;
  tau.temperature = 0.0;
  CHECK_THROWS_AS(tau.validate(), InvalidArgument);
  EmbeddingBatch nan = b;
  nan.queries(0, 0) = std::nan("");
  CHECK_THROWS(nan.validate());
  EmbeddingBatch zero = b;
  zero.queries.row(1).setZero();
  CHECK_THROWS_AS(info_nce_loss(zero), DegenerateEmbedding);
}

TEST_CASE("projection head") {
  Rng rng(11);
  SUBCASE("identity head") {
    ProjectionHead h{Matrix::Identity(6, 6), Vector::Zero(6), Matrix::Identity(6, 6),
                     Vector::Zero(6)};
    const Matrix x = random_matrix(rng, 9, 6).cwiseAbs();
    CHECK(project(h, x) == x);
  }
  SUBCASE("row oracle and permutation") {
    const ProjectionHead h = ProjectionHead::random(12, 32, 5, rng);
    const Matrix x = random_matrix(rng, 20, 12);
    const Matrix y = project(h, x);
    REQUIRE(y.rows() == 20);
    REQUIRE(y.cols() == 5);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      std::vector<double> hidden(32);
      for (int j = 0; j < 32; ++j) {
        double s = h.b1(j);
        for (int i = 0; i < 12; ++i) s += h.w1(j, i) * x(r, i);
        hidden[j] = std::max(0.0, s);
      }
      for (int o = 0; o < 5; ++o) {
        double s = h.b2(o);
        for (int j = 0; j < 32; ++j) s += h.w2(o, j) * hidden[j];
        CHECK(y(r, o) == doctest::Approx(s).epsilon(1e-12));
      }
    }
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[3], perm[11]);
    Matrix xp(20, 12);
    for (int r = 0; r < 20; ++r) xp.row(r) = x.row(perm[r]);
    const Matrix yp = project(h, xp);
    for (int r = 0; r < 20; ++r) CHECK(yp.row(r) == y.row(perm[r]));
  }
  SUBCASE("shape errors") {
    const ProjectionHead h = ProjectionHead::random(4, 8, 2, rng);
    CHECK_THROWS_AS(project(h, random_matrix(rng, 3, 5)), ShapeError);
    ProjectionHead bad = h;
    bad.b1 = Vector::Zero(7);
    CHECK_THROWS_AS(project(bad, random_matrix(rng, 3, 4)), ShapeError);
  }
}

TEST_CASE("tensor files") {
  Rng rng(13);
  const std::vector<Matrix> tensors = {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4),
                                       random_matrix(rng, 9, 4)};
  const auto bytes = encode_tensors(tensors);
  CHECK(bytes.size() == 3 * 12 + 8 * (12 + 12 + 36));
  const auto back = decode_tensors(bytes);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == tensors[i]);

  const EmbeddingBatch all = batch_from_tensors(back, 0.2);
  CHECK(all.num_negatives() == 9);
  const EmbeddingBatch k4 = batch_from_tensors(back, 0.2, 4);
  CHECK(k4.num_negatives() == 3);
  CHECK(k4.negatives == tensors[2].topRows(3));
  CHECK_THROWS_AS(batch_from_tensors(back, 0.2, 11), InvalidArgument);
  CHECK_THROWS_AS(batch_from_tensors({tensors[0]}, 0.2), ShapeError);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensors(bad), FormatError);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_tensors(cut), FormatError);
}

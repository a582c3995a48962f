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

#include "pico/nce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pico/binio.hpp"
#include "pico/error.hpp"
#include "pico/rng.hpp"

namespace pico {

namespace {

constexpr char kTensorMagic[] = "PCEB";

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidArgument(std::string(what) + " contains non-finite values");
  }
}

double norm_or_throw(const Eigen::Ref<const Vector>& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw DegenerateEmbedding("zero-norm embedding");
  return n;
}

// Logits of query i: positive similarity and one similarity per negative.
struct QueryLogits {
  double positive = 0.0;
  std::vector<double> negatives;
};

QueryLogits logits_for(const EmbeddingBatch& batch, std::size_t i) {
  const double tau = batch.temperature;
  const Matrix& bank = batch.negatives_for(i);
  QueryLogits z;
  z.positive = similarity(batch.queries.row(i).transpose(),
                          batch.positives.row(i).transpose(), tau);
  z.negatives.resize(static_cast<std::size_t>(bank.rows()));
  for (Eigen::Index j = 0; j < bank.rows(); ++j) {
    z.negatives[j] = similarity(batch.queries.row(i).transpose(),
                                bank.row(j).transpose(), tau);
  }
  return z;
}

// d cos(a, b) / da, scaled by `scale`, accumulated into out.
void add_cos_grad(const Eigen::Ref<const Vector>& a,
                  const Eigen::Ref<const Vector>& b, double scale,
                  Eigen::Ref<Vector> out) {
  const double na = norm_or_throw(a), nb = norm_or_throw(b);
  const double c = a.dot(b) / (na * nb);
  out += scale * (b / (na * nb) - (c / (na * na)) * a);
}

}  // namespace

std::size_t EmbeddingBatch::num_negatives() const {
  if (shared_bank()) return static_cast<std::size_t>(negatives.rows());
  return static_cast<std::size_t>(per_query_negatives.front().rows());
}

void EmbeddingBatch::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature must be positive and finite");
  }
  const Eigen::Index d = queries.cols();
  if (positives.rows() != queries.rows() || positives.cols() != d) {
    throw ShapeError("positives must match queries (" +
                     std::to_string(queries.rows()) + "x" + std::to_string(d) + ")");
  }
  if (shared_bank()) {
    if (negatives.rows() < 1) throw ShapeError("need K >= 2 (at least one negative)");
    if (negatives.cols() != d) throw ShapeError("negative bank width differs from d");
    require_finite(negatives, "negatives");
  } else {
    if (per_query_negatives.size() != rows()) {
      throw ShapeError("need one negative set per query");
    }
    const Eigen::Index k1 = per_query_negatives.front().rows();
    if (k1 < 1) throw ShapeError("need K >= 2 (at least one negative)");
    for (const Matrix& m : per_query_negatives) {
      if (m.rows() != k1 || m.cols() != d) {
        throw ShapeError("per-query negative sets must all be (K-1) x d");
      }
      require_finite(m, "negatives");
    }
  }
  require_finite(queries, "queries");
  require_finite(positives, "positives");
}

double similarity(const Eigen::Ref<const Vector>& a,
                  const Eigen::Ref<const Vector>& b, double tau) {
  if (a.size() != b.size()) throw ShapeError("similarity of vectors of different length");
  const double na = norm_or_throw(a), nb = norm_or_throw(b);
  return a.dot(b) / (na * nb) / tau;
}

LogitLoss info_nce_from_logits(double positive, std::span<const double> negatives) {
  double top = positive;
  for (double z : negatives) top = std::max(top, z);
  double denom = std::exp(positive - top);
  for (double z : negatives) denom += std::exp(z - top);
  LogitLoss out;
  const double log_denom = top + std::log(denom);
  out.loss = log_denom - positive;
  out.grad_positive = std::exp(positive - log_denom) - 1.0;
  out.grad_negatives.resize(negatives.size());
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    out.grad_negatives[j] = std::exp(negatives[j] - log_denom);
  }
  return out;
}

double info_nce_loss(const EmbeddingBatch& batch) {
  batch.validate();
  const std::size_t m = batch.rows();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const QueryLogits z = logits_for(batch, i);
    total += info_nce_from_logits(z.positive, z.negatives).loss;
  }
  return total / static_cast<double>(m);
}

NceGradients info_nce_grad(const EmbeddingBatch& batch) {
  batch.validate();
  const std::size_t m = batch.rows();
  NceGradients g;
  g.queries = Matrix::Zero(batch.queries.rows(), batch.queries.cols());
  g.positives = Matrix::Zero(batch.positives.rows(), batch.positives.cols());
  if (batch.shared_bank()) {
    g.negatives = Matrix::Zero(batch.negatives.rows(), batch.negatives.cols());
  } else {
    for (const Matrix& bank : batch.per_query_negatives) {
      g.per_query_negatives.push_back(Matrix::Zero(bank.rows(), bank.cols()));
    }
  }
  if (m == 0) return g;

  const double inv_m = 1.0 / static_cast<double>(m);
  const double tau = batch.temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const QueryLogits z = logits_for(batch, i);
    const LogitLoss l = info_nce_from_logits(z.positive, z.negatives);
    total += l.loss;
    const Vector q = batch.queries.row(i).transpose();
    const Vector p = batch.positives.row(i).transpose();
    Vector gq = Vector::Zero(q.size());
    Vector gp = Vector::Zero(p.size());
    // d logit / d cos = 1 / tau.
    const double sp = l.grad_positive * inv_m / tau;
    add_cos_grad(q, p, sp, gq);
    add_cos_grad(p, q, sp, gp);
    const Matrix& bank = batch.negatives_for(i);
    Matrix& gbank = batch.shared_bank() ? g.negatives : g.per_query_negatives[i];
    for (Eigen::Index j = 0; j < bank.rows(); ++j) {
      const double sn = l.grad_negatives[j] * inv_m / tau;
      const Vector n = bank.row(j).transpose();
      add_cos_grad(q, n, sn, gq);
      Vector gn = Vector::Zero(n.size());
      add_cos_grad(n, q, sn, gn);
      gbank.row(j) += gn.transpose();
    }
    g.queries.row(i) = gq.transpose();
    g.positives.row(i) = gp.transpose();
  }
  g.loss = total * inv_m;
  return g;
}

GradCheckReport check_gradient(const EmbeddingBatch& batch, double step) {
  const NceGradients analytic = info_nce_grad(batch);
  const std::size_t m = batch.rows();
  GradCheckReport report;
  if (m == 0) return report;
  const double inv = 1.0 / (2.0 * step * static_cast<double>(m));
  const double tau = batch.temperature;

  auto term = [](double pos, const std::vector<double>& neg) {
    return info_nce_from_logits(pos, neg).loss;
  };
  std::vector<QueryLogits> base(m);
  for (std::size_t i = 0; i < m; ++i) base[i] = logits_for(batch, i);

  auto fold = [&](const Matrix& numeric, const Matrix& exact) {
    const double scale = exact.cwiseAbs().maxCoeff();
    const double err = (numeric - exact).cwiseAbs().maxCoeff();
    report.max_abs_error = std::max(report.max_abs_error, err);
    const double rel = scale > 0.0 ? err / scale : err;
    report.max_rel_error = std::max(report.max_rel_error, rel);
  };

  // Queries: only term i moves.
  EmbeddingBatch work = batch;
  Matrix num_q = Matrix::Zero(batch.queries.rows(), batch.queries.cols());
  for (std::size_t i = 0; i < m; ++i) {
    for (Eigen::Index c = 0; c < batch.queries.cols(); ++c) {
      const double keep = work.queries(i, c);
      work.queries(i, c) = keep + step;
      const QueryLogits hi = logits_for(work, i);
      work.queries(i, c) = keep - step;
      const QueryLogits lo = logits_for(work, i);
      work.queries(i, c) = keep;
      num_q(i, c) = (term(hi.positive, hi.negatives) -
                     term(lo.positive, lo.negatives)) * inv;
    }
  }
  fold(num_q, analytic.queries);

  // Positives: only the positive logit of term i moves.
  Matrix num_p = Matrix::Zero(batch.positives.rows(), batch.positives.cols());
  for (std::size_t i = 0; i < m; ++i) {
    const Vector q = batch.queries.row(i).transpose();
    for (Eigen::Index c = 0; c < batch.positives.cols(); ++c) {
      Vector p = batch.positives.row(i).transpose();
      p(c) += step;
      const double hi = similarity(q, p, tau);
      p(c) -= 2.0 * step;
      const double lo = similarity(q, p, tau);
      num_p(i, c) = (term(hi, base[i].negatives) - term(lo, base[i].negatives)) * inv;
    }
  }
  fold(num_p, analytic.positives);

  // Negatives: logit j of every query sharing the row moves.
  auto numeric_bank = [&](const Matrix& bank, std::size_t first, std::size_t last) {
    Matrix num = Matrix::Zero(bank.rows(), bank.cols());
    for (Eigen::Index j = 0; j < bank.rows(); ++j) {
      for (Eigen::Index c = 0; c < bank.cols(); ++c) {
        Vector n = bank.row(j).transpose();
        double acc = 0.0;
        for (std::size_t i = first; i < last; ++i) {
          const Vector q = batch.queries.row(i).transpose();
          std::vector<double> neg = base[i].negatives;
          n(c) = bank(j, c) + step;
          neg[j] = similarity(q, n, tau);
          const double hi = term(base[i].positive, neg);
          n(c) = bank(j, c) - step;
          neg[j] = similarity(q, n, tau);
          const double lo = term(base[i].positive, neg);
          acc += hi - lo;
        }
        num(j, c) = acc * inv;
      }
    }
    return num;
  };
  if (batch.shared_bank()) {
    fold(numeric_bank(batch.negatives, 0, m), analytic.negatives);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      fold(numeric_bank(batch.per_query_negatives[i], i, i + 1),
           analytic.per_query_negatives[i]);
    }
  }
  return report;
}

ProjectionHead ProjectionHead::random(std::size_t in, std::size_t hidden,
                                      std::size_t out, Rng& rng) {
  auto fill = [&](Eigen::Index r, Eigen::Index c, double bound) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return m;
  };
  ProjectionHead h;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  h.w1 = fill(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(in), b1);
  h.b1 = fill(static_cast<Eigen::Index>(hidden), 1, b1).col(0);
  h.w2 = fill(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(hidden), b2);
  h.b2 = fill(static_cast<Eigen::Index>(out), 1, b2).col(0);
  return h;
}

void ProjectionHead::validate() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw ShapeError("projection head layer shapes are inconsistent");
  }
}

Matrix project(const ProjectionHead& head, const Matrix& pixels) {
  head.validate();
  if (pixels.cols() != head.w1.cols()) {
    throw ShapeError("pixel width " + std::to_string(pixels.cols()) +
                     " does not match head input " + std::to_string(head.w1.cols()));
  }
  Matrix hidden = (pixels * head.w1.transpose()).rowwise() + head.b1.transpose();
  hidden = hidden.cwiseMax(0.0);
  Matrix out = (hidden * head.w2.transpose()).rowwise() + head.b2.transpose();
  return out;
}

std::vector<std::uint8_t> encode_tensors(std::span<const Matrix> tensors) {
  binio::Writer w;
  for (const Matrix& t : tensors) {
    w.tag(kTensorMagic);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) w.f64(t(i, j));
    }
  }
  return w.take();
}

std::vector<Matrix> decode_tensors(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  std::vector<Matrix> out;
  while (!r.at_end()) {
    r.expect_tag(kTensorMagic);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (n > r.remaining() / 8) throw FormatError(r.offset(), "truncated input");
    Matrix t(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) t(i, j) = r.f64();
    }
    out.push_back(std::move(t));
  }
  return out;
}

EmbeddingBatch batch_from_tensors(std::vector<Matrix> tensors, double tau,
                                  std::size_t k) {
  if (tensors.size() != 3) {
    throw ShapeError("embedding file must hold 3 tensors (queries, positives, "
                     "negatives), found " + std::to_string(tensors.size()));
  }
  EmbeddingBatch batch;
  batch.queries = std::move(tensors[0]);
  batch.positives = std::move(tensors[1]);
  batch.negatives = std::move(tensors[2]);
  batch.temperature = tau;
  if (k > 0) {
    if (k < 2) throw InvalidArgument("K must be >= 2");
    if (static_cast<std::size_t>(batch.negatives.rows()) < k - 1) {
      throw InvalidArgument("negative bank has " +
                            std::to_string(batch.negatives.rows()) +
                            " rows, K=" + std::to_string(k) + " needs " +
                            std::to_string(k - 1));
    }
    batch.negatives.conservativeResize(static_cast<Eigen::Index>(k - 1),
                                       Eigen::NoChange);
  }
  batch.validate();
  return batch;
}

}  // namespace pico

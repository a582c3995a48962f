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

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace pico {

class Rng;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Pixel embeddings for one evaluation of the pixel-level InfoNCE loss.
// Row i of `queries` is contrasted against row i of `positives` and
// against the K-1 rows of the shared negative bank, or against
// per_query_negatives[i] when that is non-empty.
struct EmbeddingBatch {
  Matrix queries;    // M x d
  Matrix positives;  // M x d
  Matrix negatives;  // (K-1) x d
  std::vector<Matrix> per_query_negatives;
  double temperature = 0.2;

  std::size_t rows() const { return static_cast<std::size_t>(queries.rows()); }
  std::size_t num_negatives() const;
  bool shared_bank() const { return per_query_negatives.empty(); }
  const Matrix& negatives_for(std::size_t i) const {
    return shared_bank() ? negatives : per_query_negatives[i];
  }

  // Shapes agree, every value is finite, K >= 2, temperature > 0.
  // Throws ShapeError / InvalidArgument.
  void validate() const;
};

// cos(a, b) / tau. Throws DegenerateEmbedding for a zero vector.
double similarity(const Eigen::Ref<const Vector>& a,
                  const Eigen::Ref<const Vector>& b, double tau);

// -log softmax(positive) over {positive} U negatives and its derivative
// with respect to every logit. Stable for logits of any finite magnitude.
struct LogitLoss {
  double loss = 0.0;
  double grad_positive = 0.0;
  std::vector<double> grad_negatives;
};
LogitLoss info_nce_from_logits(double positive, std::span<const double> negatives);

// Mean over queries of the per-query loss; 0 for an empty batch.
double info_nce_loss(const EmbeddingBatch& batch);

struct NceGradients {
  double loss = 0.0;
  Matrix queries;
  Matrix positives;
  Matrix negatives;                       // shared bank mode
  std::vector<Matrix> per_query_negatives;  // per-query mode
};
NceGradients info_nce_grad(const EmbeddingBatch& batch);

struct GradCheckReport {
  // Largest over {queries, positives, negatives} of
  // max|analytic - numeric| / max|analytic| (inf-norm relative error).
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};
// Central differences of info_nce_loss with the given step.
GradCheckReport check_gradient(const EmbeddingBatch& batch, double step = 1e-5);

// Dense projection head: affine -> ReLU -> affine on every pixel row
// independently (a pair of 1x1 convolutions).
struct ProjectionHead {
  Matrix w1;  // hidden x in
  Vector b1;  // hidden
  Matrix w2;  // out x hidden
  Vector b2;  // out

  static ProjectionHead random(std::size_t in, std::size_t hidden,
                               std::size_t out, Rng& rng);
  void validate() const;
};

// pixels: M x in -> M x out. Throws ShapeError on mismatch.
Matrix project(const ProjectionHead& head, const Matrix& pixels);

// PCEB tensor: "PCEB" | u32 rows | u32 cols | f64 row-major. Files may hold
// several tensors back to back; embedding files hold queries, positives and
// the negative bank in that order.
std::vector<std::uint8_t> encode_tensors(std::span<const Matrix> tensors);
std::vector<Matrix> decode_tensors(std::span<const std::uint8_t> bytes);

// Batch from a three-tensor PCEB file. When k > 0 only the first k-1 bank
// rows are used (InvalidArgument if the bank is smaller).
EmbeddingBatch batch_from_tensors(std::vector<Matrix> tensors, double tau,
                                  std::size_t k = 0);

}  // namespace pico

// SPDX-License-Identifier: Apache-2.0
#include "sde/cipher.hpp"

#include <cmath>
#include <stdexcept>

namespace sde {

Eigen::MatrixXf softmax_rows(const Eigen::MatrixXf& logits, float temperature) {
  if (temperature < 0.0f) {
    throw std::invalid_argument("softmax_rows: negative temperature");
  }
  Eigen::MatrixXf out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (temperature == 0.0f) {
      Eigen::Index best = 0;
      logits.row(r).maxCoeff(&best);
      out.row(r).setZero();
      out(r, best) = 1.0f;
    } else {
      Eigen::RowVectorXf row = logits.row(r) / temperature;
      row = (row.array() - row.maxCoeff()).exp();
      out.row(r) = row / row.sum();
    }
  }
  return out;
}

CipherPayload cipher_from_distributions(const Eigen::MatrixXf& distributions,
                                        const Model& model) {
  if (distributions.cols() != model.config().vocab_size) {
    throw std::invalid_argument("cipher: distribution width differs from the vocabulary");
  }
  for (Eigen::Index r = 0; r < distributions.rows(); ++r) {
    float sum = 0.0f;
    for (Eigen::Index c = 0; c < distributions.cols(); ++c) {
      const float p = distributions(r, c);
      if (std::isnan(p) || p < 0.0f) {
        throw std::invalid_argument("cipher: distribution row " + std::to_string(r) +
                                    " has negative or NaN mass");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0f) > 1e-4f) {
      throw std::invalid_argument("cipher: distribution row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
    }
  }
  CipherPayload payload;
  payload.embeddings = distributions * model.tok_emb;  // (n x V) * (V x d)
  return payload;
}

CipherPayload cipher_from_logits(const Eigen::MatrixXf& step_logits, float temperature,
                                 const Model& model) {
  return cipher_from_distributions(softmax_rows(step_logits, temperature), model);
}

std::vector<TokenId> nearest_tokens(const Eigen::MatrixXf& distributions) {
  std::vector<TokenId> out;
  out.reserve(static_cast<std::size_t>(distributions.rows()));
  for (Eigen::Index r = 0; r < distributions.rows(); ++r) {
    Eigen::Index best = 0;
    distributions.row(r).maxCoeff(&best);
    out.push_back(static_cast<TokenId>(best));
  }
  return out;
}

}  // namespace sde

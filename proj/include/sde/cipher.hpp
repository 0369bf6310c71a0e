// SPDX-License-Identifier: Apache-2.0
//
// Weighted-embedding ("expectation over the vocabulary") message encoding.
// Each communicated position carries sum_v p(v) * embedding_row(v) instead
// of a single token's embedding; the argmax token is still recorded so the
// message can be rendered and stop rules keep working.
#pragma once

#include <Eigen/Dense>

#include "sde/message.hpp"
#include "sde/model.hpp"

namespace sde {

// Row-wise softmax of logits at a temperature.  temperature == 0 returns
// one-hot rows at the argmax (ties to the lowest id); negative temperatures
// are rejected.
Eigen::MatrixXf softmax_rows(const Eigen::MatrixXf& logits, float temperature);

// Weighted embeddings from explicit per-step distributions (n x vocab).
// Every row must be non-negative and sum to one within 1e-4; NaNs and
// malformed rows are rejected with std::invalid_argument.
CipherPayload cipher_from_distributions(const Eigen::MatrixXf& distributions, const Model& model);

// Weighted embeddings by re-softmaxing recorded step logits at the given
// temperature (the default encoding; sampling filters are deliberately not
// reapplied).
CipherPayload cipher_from_logits(const Eigen::MatrixXf& step_logits, float temperature,
                                 const Model& model);

// Argmax token per distribution row, ties to the lowest id.
std::vector<TokenId> nearest_tokens(const Eigen::MatrixXf& distributions);

}  // namespace sde

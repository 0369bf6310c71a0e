// SPDX-License-Identifier: Apache-2.0
#include "sde/message.hpp"

#include <stdexcept>

namespace sde {

std::string method_name(Method m) {
  switch (m) {
    case Method::nl:
      return "nl";
    case Method::sde:
      return "sde";
    case Method::cipher:
      return "cipher";
    case Method::raw:
      return "raw";
  }
  throw std::invalid_argument("method_name: unknown method");
}

Method parse_method(const std::string& name) {
  if (name == "nl") {
    return Method::nl;
  }
  if (name == "sde") {
    return Method::sde;
  }
  if (name == "cipher") {
    return Method::cipher;
  }
  if (name == "raw") {
    return Method::raw;
  }
  throw std::invalid_argument("parse_method: unknown method '" + name + "'");
}

int payload_rows(const Payload& payload) {
  if (const auto* d = std::get_if<DeltaPayload>(&payload)) {
    return d->layers.empty() ? 0 : static_cast<int>(d->layers.front().deltas.rows());
  }
  if (const auto* r = std::get_if<RawStatePayload>(&payload)) {
    return r->layers.empty() ? 0 : static_cast<int>(r->layers.front().states.rows());
  }
  if (const auto* c = std::get_if<CipherPayload>(&payload)) {
    return static_cast<int>(c->embeddings.rows());
  }
  return 0;
}

std::vector<int> payload_layers(const Payload& payload) {
  std::vector<int> out;
  if (const auto* d = std::get_if<DeltaPayload>(&payload)) {
    for (const DeltaTrajectory& t : d->layers) {
      out.push_back(t.layer);
    }
  } else if (const auto* r = std::get_if<RawStatePayload>(&payload)) {
    for (const RawStateTrajectory& t : r->layers) {
      out.push_back(t.layer);
    }
  }
  return out;
}

Message make_message(std::string id, int sender, int round, std::vector<TokenId> tokens,
                     std::string text, Payload payload) {
  const int n = static_cast<int>(tokens.size());
  if (const auto* d = std::get_if<DeltaPayload>(&payload)) {
    if (d->layers.empty()) {
      throw std::invalid_argument("message " + id + ": delta payload without layers");
    }
    for (const DeltaTrajectory& t : d->layers) {
      if (t.deltas.rows() != n) {
        throw std::invalid_argument("message " + id + ": layer " + std::to_string(t.layer) +
                                    " carries " + std::to_string(t.deltas.rows()) +
                                    " delta rows for " + std::to_string(n) + " tokens");
      }
    }
  } else if (const auto* r = std::get_if<RawStatePayload>(&payload)) {
    if (r->layers.empty()) {
      throw std::invalid_argument("message " + id + ": raw-state payload without layers");
    }
    for (const RawStateTrajectory& t : r->layers) {
      if (t.states.rows() != n) {
        throw std::invalid_argument("message " + id + ": layer " + std::to_string(t.layer) +
                                    " carries " + std::to_string(t.states.rows()) +
                                    " state rows for " + std::to_string(n) + " tokens");
      }
    }
  } else if (const auto* c = std::get_if<CipherPayload>(&payload)) {
    if (c->embeddings.rows() != n) {
      throw std::invalid_argument("message " + id + ": " + std::to_string(c->embeddings.rows()) +
                                  " embedding rows for " + std::to_string(n) + " tokens");
    }
  }
  Message msg;
  msg.id = std::move(id);
  msg.sender = sender;
  msg.round = round;
  msg.tokens = std::move(tokens);
  msg.text = std::move(text);
  msg.payload = std::move(payload);
  return msg;
}

InjectionPlan build_injection_plan(const Message& message, int span_begin, int span_length,
                                   bool zeroed) {
  InjectionPlan plan;
  const auto add_rows = [&](int layer, const Eigen::MatrixXf& rows) {
    if (static_cast<int>(rows.rows()) != span_length) {
      throw std::invalid_argument("build_injection_plan: message " + message.id + " carries " +
                                  std::to_string(rows.rows()) + " rows but the span holds " +
                                  std::to_string(span_length) + " positions");
    }
    for (int i = 0; i < span_length; ++i) {
      if (zeroed) {
        plan.add(layer, span_begin + i, Eigen::VectorXf::Zero(rows.cols()));
      } else {
        plan.add(layer, span_begin + i, rows.row(i).transpose());
      }
    }
  };
  if (const auto* d = std::get_if<DeltaPayload>(&message.payload)) {
    for (const DeltaTrajectory& t : d->layers) {
      add_rows(t.layer, t.deltas);
    }
  } else if (const auto* r = std::get_if<RawStatePayload>(&message.payload)) {
    for (const RawStateTrajectory& t : r->layers) {
      add_rows(t.layer, t.states);
    }
  }
  return plan;
}

Eigen::VectorXf inject(const Eigen::VectorXf& state, const Eigen::VectorXf& delta) {
  if (state.size() != delta.size()) {
    throw std::invalid_argument("inject: state and delta widths differ");
  }
  return state + delta;
}

}  // namespace sde

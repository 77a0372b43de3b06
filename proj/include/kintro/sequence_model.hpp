// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kintro/rng.hpp"
#include "kintro/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <type_traits>

namespace kintro {

enum class HeadKind : std::uint32_t {
  token_distribution = 1,  // linear head onto vocabulary logits
  scalar_value = 2,        // linear head onto one regression output
};

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  HeadKind head = HeadKind::token_distribution;
  std::size_t max_input_len = 256;
  std::size_t max_output_len = 32;

  std::size_t output_dim() const { return head == HeadKind::token_distribution ? vocab_size : 1; }
  std::size_t parameter_count() const;
  /// Identifies the parameter layout (head kind and widths) in checkpoints.
  std::uint32_t layout_id() const { return static_cast<std::uint32_t>(head); }

  bool operator==(const ModelShape&) const = default;
};

/// Views onto a flat parameter (or gradient) vector. The flat layout is, in
/// order and each block column-major:
///
///   embedding  E x V     token t embeds to column t
///   w_z w_r w_n  H x E   input weights of update gate, reset gate, candidate
///   u_z u_r u_n  H x H   recurrent weights
///   b_z b_r b_n  H
///   head_w     O x H     O = V (token head) or 1 (value head)
///   head_b     O
///
/// One recurrent step on input embedding x and state h:
///   z  = sigmoid(w_z x + u_z h + b_z)
///   r  = sigmoid(w_r x + u_r h + b_r)
///   n  = tanh(w_n x + u_n (r * h) + b_n)
///   h' = (1 - z) * n + z * h
/// and the head reads head_w h' + head_b.
template <bool Const>
struct WeightMaps {
  using MatMap = std::conditional_t<Const, Eigen::Map<const Matrix>, Eigen::Map<Matrix>>;
  using VecMap = std::conditional_t<Const, Eigen::Map<const Vector>, Eigen::Map<Vector>>;
  using Ptr = std::conditional_t<Const, const double*, double*>;

  MatMap embedding;
  MatMap w_z, w_r, w_n;
  MatMap u_z, u_r, u_n;
  VecMap b_z, b_r, b_n;
  MatMap head_w;
  VecMap head_b;

  WeightMaps(const ModelShape& s, Ptr p);
};

using ConstWeights = WeightMaps<true>;
using MutableWeights = WeightMaps<false>;

/// Single-layer gated recurrent sequence model with a token or value head.
/// The input for a question q and knowledge k is q, <sep>, k; the state s_t
/// for t = 1..|k|+1 is the hidden vector after <sep> and k_1..k_{t-1}.
class SequenceModel {
 public:
  SequenceModel() = default;
  /// Zero-initialized parameters.
  SequenceModel(ModelShape shape, std::uint64_t vocab_hash);

  /// Uniform(-scale/sqrt(H), scale/sqrt(H)) body, head scaled by head_scale.
  static SequenceModel random(ModelShape shape, std::uint64_t vocab_hash, Rng& rng,
                              double scale = 1.0, double head_scale = 1.0);

  const ModelShape& shape() const { return shape_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  ConstWeights weights() const { return ConstWeights(shape_, params_.data()); }
  MutableWeights weights() { return MutableWeights(shape_, params_.data()); }

  /// Copies every parameter except the head from `other` (same body widths).
  void copy_body_from(const SequenceModel& other);

 private:
  ModelShape shape_;
  std::uint64_t vocab_hash_ = 0;
  Vector params_;
};

/// Cached activations of one forward pass, consumed by backward().
struct ForwardTrace {
  TokenSeq inputs;         // q, <sep>, k
  Matrix hidden;           // H x (L+1); column i is the state after i inputs
  Matrix update_gate;      // H x L
  Matrix reset_gate;       // H x L
  Matrix candidate;        // H x L
  std::size_t first_state = 0;  // hidden column of s_1
  std::size_t num_states = 0;   // |k| + 1
  Matrix head_out;         // O x num_states: logits or values for s_1..s_{|k|+1}
};

ForwardTrace run_forward(const SequenceModel& model, std::span<const TokenId> question,
                         std::span<const TokenId> knowledge);

/// Next-token distributions at s_1..s_{|k|+1} (V x (|k|+1)).
Matrix forward_policy(const SequenceModel& model, std::span<const TokenId> question,
                      std::span<const TokenId> knowledge);

/// V(s_t) for t = 1..|k|+1.
Vector forward_value(const SequenceModel& model, std::span<const TokenId> question,
                     std::span<const TokenId> knowledge);

/// Reverse pass. `d_head_out` is dLoss/d(head_out), shape O x num_states.
/// Returns dLoss/dparams in the flat layout. Throws Error(numeric) naming the
/// layer if a non-finite value appears.
Vector backward(const SequenceModel& model, const ForwardTrace& trace, const Matrix& d_head_out);

/// Log-probabilities of k_1..k_T under the policy, optionally at temperature
/// tau (log softmax(logits / tau)).
Vector token_logprobs(const ForwardTrace& trace, std::span<const TokenId> knowledge, double tau = 1.0);

/// d/dlogits of sum_t coeff_t * log p_tau(k_t | s_t); shape V x (T+1).
Matrix logprob_head_gradient(const ForwardTrace& trace, std::span<const TokenId> knowledge,
                             std::span<const double> coeffs, double tau = 1.0);

/// One recurrent step (no caching).
Vector recurrent_step(const ConstWeights& w, const Vector& h, TokenId token);

/// Frozen copy of a model's parameters (theta_imit, theta_old, phi_old).
class ParamSnapshot {
 public:
  explicit ParamSnapshot(const SequenceModel& model) : model_(model) {}

  const SequenceModel& model() const { return model_; }
  const Vector& params() const { return model_.params(); }
  const ModelShape& shape() const { return model_.shape(); }

  SequenceModel restore() const { return model_; }
  /// Overwrites target's parameters; throws Error(precondition) on a layout mismatch.
  void restore_into(SequenceModel& target) const;

 private:
  SequenceModel model_;
};

inline ParamSnapshot snapshot(const SequenceModel& model) { return ParamSnapshot(model); }

}  // namespace kintro

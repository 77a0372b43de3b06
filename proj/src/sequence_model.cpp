// SPDX-License-Identifier: Apache-2.0
#include "kintro/sequence_model.hpp"

#include "kintro/math.hpp"
#include "kintro/vocab.hpp"

#include <cmath>
#include <string>

namespace kintro {
namespace {

struct Offsets {
  std::size_t embedding, w_z, w_r, w_n, u_z, u_r, u_n, b_z, b_r, b_n, head_w, head_b, total;
};

Offsets offsets_of(const ModelShape& s) {
  const std::size_t V = s.vocab_size, E = s.embed_dim, H = s.hidden_dim, O = s.output_dim();
  Offsets o{};
  std::size_t at = 0;
  auto take = [&at](std::size_t n) {
    const std::size_t start = at;
    at += n;
    return start;
  };
  o.embedding = take(E * V);
  o.w_z = take(H * E);
  o.w_r = take(H * E);
  o.w_n = take(H * E);
  o.u_z = take(H * H);
  o.u_r = take(H * H);
  o.u_n = take(H * H);
  o.b_z = take(H);
  o.b_r = take(H);
  o.b_n = take(H);
  o.head_w = take(O * H);
  o.head_b = take(O);
  o.total = at;
  return o;
}

Vector sigmoid(const Vector& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

void check_token(const ModelShape& s, TokenId t) {
  if (t < 0 || static_cast<std::size_t>(t) >= s.vocab_size)
    throw Error(ErrorCategory::precondition, "token id " + std::to_string(t) + " outside model vocabulary");
}

void check_finite(const Eigen::Ref<const Matrix>& m, const char* layer) {
  if (!all_finite(m)) throw Error(ErrorCategory::numeric, std::string("non-finite gradient in ") + layer + " layer");
}

}  // namespace

std::size_t ModelShape::parameter_count() const { return offsets_of(*this).total; }

template <bool Const>
WeightMaps<Const>::WeightMaps(const ModelShape& s, Ptr p)
    : embedding(p + offsets_of(s).embedding, s.embed_dim, s.vocab_size),
      w_z(p + offsets_of(s).w_z, s.hidden_dim, s.embed_dim),
      w_r(p + offsets_of(s).w_r, s.hidden_dim, s.embed_dim),
      w_n(p + offsets_of(s).w_n, s.hidden_dim, s.embed_dim),
      u_z(p + offsets_of(s).u_z, s.hidden_dim, s.hidden_dim),
      u_r(p + offsets_of(s).u_r, s.hidden_dim, s.hidden_dim),
      u_n(p + offsets_of(s).u_n, s.hidden_dim, s.hidden_dim),
      b_z(p + offsets_of(s).b_z, s.hidden_dim),
      b_r(p + offsets_of(s).b_r, s.hidden_dim),
      b_n(p + offsets_of(s).b_n, s.hidden_dim),
      head_w(p + offsets_of(s).head_w, s.output_dim(), s.hidden_dim),
      head_b(p + offsets_of(s).head_b, s.output_dim()) {}

template struct WeightMaps<true>;
template struct WeightMaps<false>;

SequenceModel::SequenceModel(ModelShape shape, std::uint64_t vocab_hash)
    : shape_(shape), vocab_hash_(vocab_hash), params_(Vector::Zero(static_cast<Eigen::Index>(shape.parameter_count()))) {
  if (shape.vocab_size == 0 || shape.embed_dim == 0 || shape.hidden_dim == 0)
    throw Error(ErrorCategory::config, "model widths and vocabulary size must be positive");
}

SequenceModel SequenceModel::random(ModelShape shape, std::uint64_t vocab_hash, Rng& rng, double scale,
                                    double head_scale) {
  SequenceModel m(shape, vocab_hash);
  const double bound = scale / std::sqrt(static_cast<double>(shape.hidden_dim));
  std::uniform_real_distribution<double> body(-bound, bound);
  const auto o = offsets_of(shape);
  for (std::size_t i = 0; i < o.head_w; ++i) m.params_(static_cast<Eigen::Index>(i)) = body(rng);
  for (std::size_t i = o.head_w; i < o.total; ++i)
    m.params_(static_cast<Eigen::Index>(i)) = head_scale * body(rng);
  return m;
}

void SequenceModel::copy_body_from(const SequenceModel& other) {
  const auto& a = shape_;
  const auto& b = other.shape_;
  if (a.vocab_size != b.vocab_size || a.embed_dim != b.embed_dim || a.hidden_dim != b.hidden_dim)
    throw Error(ErrorCategory::precondition, "copy_body_from: body widths differ");
  const auto n = static_cast<Eigen::Index>(offsets_of(a).head_w);
  params_.head(n) = other.params_.head(n);
}

Vector recurrent_step(const ConstWeights& w, const Vector& h, TokenId token) {
  const auto x = w.embedding.col(token);
  const Vector z = sigmoid(w.w_z * x + w.u_z * h + w.b_z);
  const Vector r = sigmoid(w.w_r * x + w.u_r * h + w.b_r);
  const Vector n = (w.w_n * x + w.u_n * r.cwiseProduct(h) + w.b_n).array().tanh().matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
}

ForwardTrace run_forward(const SequenceModel& model, std::span<const TokenId> question,
                         std::span<const TokenId> knowledge) {
  const auto& s = model.shape();
  if (question.size() > s.max_input_len)
    throw Error(ErrorCategory::precondition, "question length " + std::to_string(question.size()) +
                                                 " exceeds max input length " + std::to_string(s.max_input_len));
  if (knowledge.size() > s.max_output_len)
    throw Error(ErrorCategory::precondition, "prefix length " + std::to_string(knowledge.size()) +
                                                 " exceeds max output length " + std::to_string(s.max_output_len));

  ForwardTrace tr;
  tr.inputs.reserve(question.size() + 1 + knowledge.size());
  tr.inputs.insert(tr.inputs.end(), question.begin(), question.end());
  tr.inputs.push_back(Vocab::kSep);
  tr.inputs.insert(tr.inputs.end(), knowledge.begin(), knowledge.end());

  const auto w = model.weights();
  const auto H = static_cast<Eigen::Index>(s.hidden_dim);
  const auto L = static_cast<Eigen::Index>(tr.inputs.size());
  tr.hidden = Matrix::Zero(H, L + 1);
  tr.update_gate.resize(H, L);
  tr.reset_gate.resize(H, L);
  tr.candidate.resize(H, L);

  for (Eigen::Index i = 0; i < L; ++i) {
    const TokenId tok = tr.inputs[static_cast<std::size_t>(i)];
    check_token(s, tok);
    const auto x = w.embedding.col(tok);
    const auto h = tr.hidden.col(i);
    tr.update_gate.col(i) = sigmoid(w.w_z * x + w.u_z * h + w.b_z);
    tr.reset_gate.col(i) = sigmoid(w.w_r * x + w.u_r * h + w.b_r);
    tr.candidate.col(i) =
        (w.w_n * x + w.u_n * tr.reset_gate.col(i).cwiseProduct(h) + w.b_n).array().tanh().matrix();
    tr.hidden.col(i + 1) = (1.0 - tr.update_gate.col(i).array()).matrix().cwiseProduct(tr.candidate.col(i)) +
                           tr.update_gate.col(i).cwiseProduct(h);
  }

  tr.first_state = question.size() + 1;
  tr.num_states = knowledge.size() + 1;
  const auto states = tr.hidden.middleCols(static_cast<Eigen::Index>(tr.first_state),
                                           static_cast<Eigen::Index>(tr.num_states));
  tr.head_out = (w.head_w * states).colwise() + w.head_b;
  return tr;
}

Matrix forward_policy(const SequenceModel& model, std::span<const TokenId> question,
                      std::span<const TokenId> knowledge) {
  if (model.shape().head != HeadKind::token_distribution)
    throw Error(ErrorCategory::precondition, "forward_policy requires a token-distribution head");
  return softmax_columns(run_forward(model, question, knowledge).head_out);
}

Vector forward_value(const SequenceModel& model, std::span<const TokenId> question,
                     std::span<const TokenId> knowledge) {
  if (model.shape().head != HeadKind::scalar_value)
    throw Error(ErrorCategory::precondition, "forward_value requires a scalar-value head");
  return run_forward(model, question, knowledge).head_out.row(0).transpose();
}

Vector backward(const SequenceModel& model, const ForwardTrace& tr, const Matrix& d_head_out) {
  const auto& s = model.shape();
  const auto w = model.weights();
  if (d_head_out.rows() != static_cast<Eigen::Index>(s.output_dim()) ||
      d_head_out.cols() != static_cast<Eigen::Index>(tr.num_states))
    throw Error(ErrorCategory::precondition, "backward: head gradient has the wrong shape");

  Vector grad = Vector::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  MutableWeights g(s, grad.data());

  const auto first = static_cast<Eigen::Index>(tr.first_state);
  const auto S = static_cast<Eigen::Index>(tr.num_states);
  const auto states = tr.hidden.middleCols(first, S);
  g.head_w.noalias() = d_head_out * states.transpose();
  g.head_b = d_head_out.rowwise().sum();
  const Matrix d_states = w.head_w.transpose() * d_head_out;
  check_finite(grad, "head");

  const auto H = static_cast<Eigen::Index>(s.hidden_dim);
  const auto L = static_cast<Eigen::Index>(tr.inputs.size());
  Vector dh = Vector::Zero(H);
  for (Eigen::Index i = L - 1; i >= 0; --i) {
    // hidden column i+1 is produced by input i
    if (i + 1 >= first) dh += d_states.col(i + 1 - first);
    const auto z = tr.update_gate.col(i);
    const auto r = tr.reset_gate.col(i);
    const auto n = tr.candidate.col(i);
    const auto h_prev = tr.hidden.col(i);
    const auto x = w.embedding.col(tr.inputs[static_cast<std::size_t>(i)]);

    const Vector dn = dh.cwiseProduct((1.0 - z.array()).matrix());
    const Vector dz = dh.cwiseProduct(h_prev - n);
    Vector dh_prev = dh.cwiseProduct(z);

    const Vector da_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
    const Vector rh = r.cwiseProduct(h_prev);
    g.w_n.noalias() += da_n * x.transpose();
    g.u_n.noalias() += da_n * rh.transpose();
    g.b_n += da_n;
    const Vector d_rh = w.u_n.transpose() * da_n;
    const Vector dr = d_rh.cwiseProduct(h_prev);
    dh_prev += d_rh.cwiseProduct(r);

    const Vector da_z = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
    g.w_z.noalias() += da_z * x.transpose();
    g.u_z.noalias() += da_z * h_prev.transpose();
    g.b_z += da_z;
    dh_prev.noalias() += w.u_z.transpose() * da_z;

    const Vector da_r = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
    g.w_r.noalias() += da_r * x.transpose();
    g.u_r.noalias() += da_r * h_prev.transpose();
    g.b_r += da_r;
    dh_prev.noalias() += w.u_r.transpose() * da_r;

    g.embedding.col(tr.inputs[static_cast<std::size_t>(i)]).noalias() +=
        w.w_z.transpose() * da_z + w.w_r.transpose() * da_r + w.w_n.transpose() * da_n;
    dh = dh_prev;
  }
  check_finite(g.u_n, "recurrent");
  check_finite(g.u_z, "recurrent");
  check_finite(g.u_r, "recurrent");
  check_finite(g.embedding, "embedding");
  return grad;
}

Vector token_logprobs(const ForwardTrace& tr, std::span<const TokenId> knowledge, double tau) {
  Vector out(static_cast<Eigen::Index>(knowledge.size()));
  for (std::size_t t = 0; t < knowledge.size(); ++t) {
    const Vector lp = log_softmax(tr.head_out.col(static_cast<Eigen::Index>(t)) / tau);
    out(static_cast<Eigen::Index>(t)) = lp(knowledge[t]);
  }
  return out;
}

Matrix logprob_head_gradient(const ForwardTrace& tr, std::span<const TokenId> knowledge,
                             std::span<const double> coeffs, double tau) {
  Matrix d = Matrix::Zero(tr.head_out.rows(), tr.head_out.cols());
  for (std::size_t t = 0; t < knowledge.size(); ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    const Vector p = softmax(tr.head_out.col(c) / tau);
    d.col(c) = -coeffs[t] / tau * p;
    d(knowledge[t], c) += coeffs[t] / tau;
  }
  return d;
}

void ParamSnapshot::restore_into(SequenceModel& target) const {
  if (!(target.shape() == model_.shape()) || target.vocab_hash() != model_.vocab_hash())
    throw Error(ErrorCategory::precondition, "snapshot layout does not match the target model");
  target.params() = model_.params();
}

}  // namespace kintro

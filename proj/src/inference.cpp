// SPDX-License-Identifier: Apache-2.0
#include "kintro/inference.hpp"

#include "kintro/math.hpp"
#include "kintro/parallel.hpp"

namespace kintro {

std::vector<TokenSeq> generate_knowledge_set(const SequenceModel& policy, std::span<const TokenId> question,
                                             std::size_t count, double top_p, std::size_t max_len, Rng& rng) {
  std::vector<TokenSeq> out;
  out.reserve(count + 1);
  out.emplace_back();
  for (std::size_t m = 0; m < count; ++m)
    out.push_back(sample_sequence(policy, question, DecodeMode::nucleus(top_p), max_len, rng).knowledge());
  return out;
}

AggregationResult aggregate_confidences(Matrix confidence) {
  if (confidence.rows() == 0 || confidence.cols() == 0)
    throw Error(ErrorCategory::precondition, "aggregation needs a non-empty knowledge set");
  AggregationResult r;
  r.answer = argmax_first(confidence.colwise().maxCoeff());
  r.knowledge = argmax_first(confidence.rowwise().maxCoeff());
  r.confidence = std::move(confidence);
  return r;
}

AggregationResult aggregate_predict(const FrozenScorer& scorer, std::span<const TokenId> question,
                                    const QAInstance& instance, const std::vector<TokenSeq>& knowledge_set) {
  if (knowledge_set.empty()) throw Error(ErrorCategory::precondition, "knowledge set is empty");
  Matrix conf(static_cast<Eigen::Index>(knowledge_set.size()), static_cast<Eigen::Index>(instance.candidates.size()));
  for (std::size_t k = 0; k < knowledge_set.size(); ++k)
    conf.row(static_cast<Eigen::Index>(k)) =
        answer_prob(scorer, concat_prompt(question, knowledge_set[k]), instance.candidates).transpose();
  return aggregate_confidences(std::move(conf));
}

EvalResult evaluate(const FrozenScorer& scorer, const SequenceModel& policy, const Dataset& dataset,
                    const Vocab& vocab, const EvalOptions& options, std::uint64_t seed) {
  if (dataset.instances.empty()) throw Error(ErrorCategory::precondition, "evaluate: empty dataset");
  EvalResult out;
  out.records.resize(dataset.instances.size());
  parallel_for(dataset.instances.size(), options.threads, [&](std::size_t i) {
    const auto& inst = dataset.instances[i];
    const TokenSeq q = format_question(inst, vocab);
    Rng rng = make_rng(seed, {0x4556414cULL, i});
    std::vector<TokenSeq> ks;
    if (options.greedy) {
      ks.emplace_back();
      ks.push_back(sample_sequence(policy, q, DecodeMode::greedy(), options.max_len, rng).knowledge());
    } else {
      ks = generate_knowledge_set(policy, q, options.knowledge_per_question, options.top_p, options.max_len, rng);
    }
    auto& rec = out.records[i];
    rec.index = i;
    rec.result = aggregate_predict(scorer, q, inst, ks);
    rec.knowledge = std::move(ks);
    rec.correct = rec.result.answer == inst.gold;
  });
  std::size_t correct = 0;
  for (const auto& r : out.records) correct += r.correct ? 1 : 0;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(out.records.size());
  return out;
}

double union_accuracy(const FrozenScorer& scorer, const SequenceModel& policy, const std::vector<Dataset>& datasets,
                      const Vocab& vocab, const EvalOptions& options, std::uint64_t seed) {
  std::size_t correct = 0, total = 0;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto res = evaluate(scorer, policy, datasets[d], vocab, options, derive_seed(seed, {d}));
    for (const auto& r : res.records) correct += r.correct ? 1 : 0;
    total += res.records.size();
  }
  if (total == 0) throw Error(ErrorCategory::precondition, "no validation instances");
  return static_cast<double>(correct) / static_cast<double>(total);
}

nlohmann::ordered_json record_to_json(const EvalRecord& record, const QAInstance& instance, const Vocab& vocab) {
  nlohmann::ordered_json j;
  j["index"] = record.index;
  j["question"] = vocab.detokenize(format_question(instance, vocab));
  auto ks = nlohmann::ordered_json::array();
  for (const auto& k : record.knowledge) ks.push_back(vocab.detokenize(k));
  j["knowledge"] = std::move(ks);
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < record.result.confidence.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < record.result.confidence.cols(); ++c) row.push_back(record.result.confidence(r, c));
    rows.push_back(std::move(row));
  }
  j["confidence"] = std::move(rows);
  j["predicted"] = record.result.answer;
  j["selected_knowledge"] = record.result.knowledge;
  j["gold"] = instance.gold;
  j["correct"] = record.correct;
  return j;
}

}  // namespace kintro

// SPDX-License-Identifier: Apache-2.0
#include "kintro/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace kintro {
namespace {

constexpr char kMagic[8] = {'K', 'I', 'N', 'T', 'R', 'O', 'C', 'K'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > bytes_.size()) throw Error(ErrorCategory::data, "checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const SequenceModel& model) {
  const auto& s = model.shape();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, s.layout_id());
  put_le<std::uint64_t>(out, s.vocab_size);
  put_le<std::uint64_t>(out, s.embed_dim);
  put_le<std::uint64_t>(out, s.hidden_dim);
  put_le<std::uint64_t>(out, s.max_input_len);
  put_le<std::uint64_t>(out, s.max_output_len);
  put_le<std::uint64_t>(out, model.vocab_hash());
  put_le<std::uint64_t>(out, model.parameter_count());
  for (Eigen::Index i = 0; i < model.params().size(); ++i)
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(model.params()(i)));
  return out;
}

SequenceModel decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || bytes.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCategory::data, "not a checkpoint file (bad magic)");
  Reader rd(bytes);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) rd.get<std::uint8_t>();
  const auto version = rd.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCategory::data, "unsupported checkpoint version " + std::to_string(version));
  const auto layout = rd.get<std::uint32_t>();
  if (layout != static_cast<std::uint32_t>(HeadKind::token_distribution) &&
      layout != static_cast<std::uint32_t>(HeadKind::scalar_value))
    throw Error(ErrorCategory::data, "unknown checkpoint layout id " + std::to_string(layout));

  ModelShape shape;
  shape.head = static_cast<HeadKind>(layout);
  shape.vocab_size = rd.get<std::uint64_t>();
  shape.embed_dim = rd.get<std::uint64_t>();
  shape.hidden_dim = rd.get<std::uint64_t>();
  shape.max_input_len = rd.get<std::uint64_t>();
  shape.max_output_len = rd.get<std::uint64_t>();
  const auto vocab_hash = rd.get<std::uint64_t>();
  const auto count = rd.get<std::uint64_t>();
  if (count != shape.parameter_count())
    throw Error(ErrorCategory::data, "checkpoint parameter count does not match its declared layout");
  if (rd.remaining() != count * sizeof(double))
    throw Error(ErrorCategory::data, "checkpoint payload size mismatch");

  SequenceModel model(shape, vocab_hash);
  for (Eigen::Index i = 0; i < model.params().size(); ++i)
    model.params()(i) = std::bit_cast<double>(rd.get<std::uint64_t>());
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::io, "cannot write checkpoint: " + path.string());
  const auto bytes = encode_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SequenceModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::io, "missing checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

SequenceModel load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash) {
  auto model = load_checkpoint(path);
  if (model.vocab_hash() != vocab_hash)
    throw Error(ErrorCategory::data, "checkpoint " + path.string() + " was written for a different vocabulary");
  return model;
}

}  // namespace kintro

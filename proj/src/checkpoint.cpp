#include "acdiff/checkpoint.hpp"

#include "acdiff/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace acdiff {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(double v) { uint(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (n > n_ - pos_) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
    const unsigned char* at = p_ + pos_;
    pos_ += n;
    return at;
  }
  template <typename U>
  U uint(const char* what) {
    const unsigned char* b = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }
  double f32() { return std::bit_cast<float>(uint<std::uint32_t>("tensor values")); }
  bool done() const { return pos_ == n_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, p, static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const RunConfig& config, const Model& model) {
  Writer w;
  w.bytes("ACDF", 4);
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string text = config.serialize();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  const auto params = model.named_parameters();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint32_t>(2);
    w.uint<std::uint64_t>(static_cast<std::uint64_t>(t->rows()));
    w.uint<std::uint64_t>(static_cast<std::uint64_t>(t->cols()));
    const Matrix& v = t->value();
    for (Index i = 0; i < v.size(); ++i) w.f32(v.data()[i]);
  }
  auto& bytes = w.data();
  w.uint<std::uint32_t>(crc_of(bytes.data(), bytes.size()));
  return std::move(bytes);
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "ACDF", 4) != 0) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  if (tail.uint<std::uint32_t>("crc") != crc_of(bytes.data(), body)) {
    throw FormatError("corrupt checkpoint: CRC mismatch");
  }

  Reader r(bytes.data(), body);
  r.take(4, "magic");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto text_len = r.uint<std::uint32_t>("config length");
  const auto* text = reinterpret_cast<const char*>(r.take(text_len, "config"));

  Checkpoint ck;
  try {
    ck.config = RunConfig::parse(std::string_view(text, text_len));
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Rng unused(0);
  ck.model = Model::init(ck.config.model_config(), unused);

  std::map<std::string, Tensor*> expected;
  for (auto& [name, t] : ck.model.named_parameters()) expected.emplace(name, t);
  const auto count = r.uint<std::uint32_t>("tensor count");
  std::map<std::string, bool> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.uint<std::uint32_t>("tensor name length");
    const std::string name(reinterpret_cast<const char*>(r.take(name_len, "tensor name")), name_len);
    const auto it = expected.find(name);
    if (it == expected.end()) throw FormatError("checkpoint: unknown tensor '" + name + "'");
    if (seen[name]) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    seen[name] = true;
    const auto rank = r.uint<std::uint32_t>("tensor rank");
    if (rank != 2) throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    const auto rows = r.uint<std::uint64_t>("tensor dims");
    const auto cols = r.uint<std::uint64_t>("tensor dims");
    Tensor& t = *it->second;
    if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols())) {
      throw FormatError("checkpoint: tensor '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                        ", config expects " + shape_string(t.value()));
    }
    Matrix& v = t.value();
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = r.f32();
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes before CRC");
  for (const auto& [name, t] : expected) {
    if (!seen[name]) throw FormatError("checkpoint: missing tensor '" + name + "'");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Model& model) {
  const auto bytes = encode_checkpoint(config, model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace acdiff

#include "threadsel/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "threadsel/error.hpp"

namespace threadsel {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return read_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  double f64() { return std::bit_cast<double>(read_le(8)); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("corrupt checkpoint: unexpected end of data");
  }
  std::uint64_t read_le(int width) {
    need(static_cast<std::uint64_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json config_to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["dim"] = c.dim;
  j["ffn_dim"] = c.ffn_dim;
  j["max_len"] = c.max_len;
  j["vocab_size"] = c.vocab_size;
  j["num_codes"] = c.num_codes;
  return j;
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.num_codes = j.at("num_codes").get<std::size_t>();
  return c;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::ordered_json meta;
  meta["encoder"] = config_to_json(checkpoint.model.config);
  meta["mode"] = to_string(checkpoint.mode);
  meta["threshold"] = checkpoint.extraction.threshold;
  meta["max_threads"] = checkpoint.extraction.max_threads;
  meta["vocab"] = checkpoint.tokenizer.regular_tokens();
  const std::string meta_text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta_text.size());
  out += meta_text;
  const auto params = checkpoint.model.parameters();
  put_u64(out, params.size());
  for (const auto* p : params) {
    put_u64(out, p->name.size());
    out += p->name;
    put_u64(out, 2);
    put_u64(out, static_cast<std::uint64_t>(p->value.rows()));
    put_u64(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("corrupt checkpoint: bad magic");
  }
  Reader reader(bytes);
  reader.str(sizeof(kMagic));
  const auto version = reader.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  Checkpoint checkpoint;
  try {
    const auto meta = nlohmann::json::parse(reader.str(reader.u64()));
    const auto config = config_from_json(meta.at("encoder"));
    checkpoint.tokenizer = Tokenizer(meta.at("vocab").get<std::vector<std::string>>());
    checkpoint.mode = parse_thread_mode(meta.at("mode").get<std::string>());
    checkpoint.extraction.threshold = meta.at("threshold").get<double>();
    checkpoint.extraction.max_threads = meta.at("max_threads").get<std::size_t>();
    // Shapes come from the config; values are overwritten below.
    checkpoint.model = ThreadEncoderModel::create(config, 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint: bad metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }

  auto params = checkpoint.model.parameters();
  const auto count = reader.u64();
  if (count != params.size()) throw DataError("corrupt checkpoint: tensor count does not match the config");
  for (auto* p : params) {
    const auto name = reader.str(reader.u64());
    if (name != p->name) throw DataError("corrupt checkpoint: expected tensor " + p->name + ", found " + name);
    if (reader.u64() != 2) throw DataError("corrupt checkpoint: tensor " + name + " is not 2-D");
    const auto rows = reader.u64();
    const auto cols = reader.u64();
    if (rows != static_cast<std::uint64_t>(p->value.rows()) || cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw DataError("corrupt checkpoint: tensor " + name + " has the wrong shape");
    }
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = reader.f64();
    p->zero_grad();
  }
  if (!reader.done()) throw DataError("corrupt checkpoint: trailing bytes");
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace threadsel

#include "mac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mac/errors.hpp"

namespace mac {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8, "integer");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_)
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const MacParams& params, const MacConfig& cfg, const Encoder& encoder, Schema schema,
                           std::uint64_t seed, nlohmann::json extra) {
  Checkpoint c;
  c.config = cfg;
  c.encoder = encoder;
  c.schema = schema;
  c.seed = seed;
  c.extra = std::move(extra);
  c.values = snapshot_values(params);
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = "mac-checkpoint";
  manifest["version"] = kFormatVersion;
  manifest["schema"] = to_string(ckpt.schema);
  manifest["seed"] = ckpt.seed;
  manifest["config"] = to_json(ckpt.config);
  manifest["encoder"] = to_json(ckpt.encoder);
  manifest["extra"] = ckpt.extra;
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  put_u64(out, ckpt.values.size());
  for (double v : ckpt.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  put_u64(out, fnv1a(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic))
    throw CheckpointError("not a checkpoint file (bad magic)");
  const std::uint64_t manifest_len = in.u64();
  if (manifest_len > in.remaining()) throw CheckpointError("checkpoint truncated inside manifest");
  const std::string text = in.take(static_cast<std::size_t>(manifest_len), "manifest");
  const std::uint64_t count = in.u64();
  if (count > in.remaining() / 8) throw CheckpointError("checkpoint truncated inside parameter blob");
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = std::bit_cast<double>(in.u64());
  const std::size_t body_end = in.position();
  const std::uint64_t stored = in.u64();
  if (in.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint checksum");
  if (stored != fnv1a(std::string_view(bytes).substr(0, body_end)))
    throw CheckpointError("checkpoint checksum mismatch (file corrupted)");

  Checkpoint c;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
    if (manifest.at("format").get<std::string>() != "mac-checkpoint" ||
        manifest.at("version").get<int>() != kFormatVersion)
      throw CheckpointError("unsupported checkpoint format or version");
    c.schema = parse_schema(manifest.at("schema").get<std::string>());
    c.seed = manifest.at("seed").get<std::uint64_t>();
    c.config = mac_config_from_json(manifest.at("config"));
    c.encoder = encoder_from_json(manifest.at("encoder"));
    c.extra = manifest.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint manifest: ") + e.what());
  }
  if (c.config.vocab_size != c.encoder.vocab.size() || c.config.speaker_count != c.encoder.speakers.size() ||
      c.config.publisher_count != c.encoder.publishers.size())
    throw CheckpointError("checkpoint config table sizes disagree with its vocabulary");
  if (values.size() != parameter_count(c.config))
    throw CheckpointError("checkpoint holds " + std::to_string(values.size()) + " values, config implies " +
                          std::to_string(parameter_count(c.config)));
  c.values = std::move(values);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

MacParams restore_params(const Checkpoint& ckpt) {
  MacParams params = init_params(ckpt.config, ckpt.seed);
  restore_values(params, ckpt.values);
  return params;
}

}  // namespace mac

#include "trajdiff/checkpoint.hpp"

#include "trajdiff/io.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>

namespace trajdiff {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'J', 'D', 'I', 'F', 'F'};
constexpr std::size_t kDigest = 32;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view bytes, std::size_t& pos, const std::string& source) {
  if (pos + sizeof(T) > bytes.size()) throw DataError(source + ": truncated checkpoint");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string raw_digest(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1 || len != kDigest)
    throw Error("sha256 failed");
  return std::string(reinterpret_cast<const char*>(md), len);
}

void put_blob(std::string& out, const ParamSet& ps) {
  out.append(reinterpret_cast<const char*>(ps.values().data()), ps.size() * sizeof(double));
}

void get_blob(std::string_view bytes, std::size_t& pos, ParamSet& ps, const std::string& source) {
  const std::size_t n = ps.size() * sizeof(double);
  if (pos + n > bytes.size()) throw DataError(source + ": truncated checkpoint blob");
  std::memcpy(ps.values().data(), bytes.data() + pos, n);
  pos += n;
}

double json_double(const json& j) {
  // infinity is stored as null
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const TrainState& st = ckpt.state;
  json header;
  header["config"] = ckpt.config.to_map();
  header["step"] = st.step;
  header["best_val"] = std::isfinite(st.best_val) ? json(st.best_val) : json(nullptr);
  header["best_step"] = st.best_step;
  header["stale_evals"] = st.stale_evals;
  header["stopped"] = st.stopped;
  json tensors = json::array();
  for (const auto& s : st.params.weights.specs()) tensors.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  header["tensors"] = tensors;
  header["blobs"] = {"params", "adam_m", "adam_v", "best_params"};
  const std::string htext = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, htext.size());
  out += htext;
  put_blob(out, st.params.weights);
  put_blob(out, st.moments.m);
  put_blob(out, st.moments.v);
  put_blob(out, st.best_params.weights);
  out += raw_digest(out);
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < sizeof kMagic + 12 + kDigest || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw DataError(source + ": not a checkpoint file");
  const std::string_view body = bytes.substr(0, bytes.size() - kDigest);
  if (raw_digest(body) != bytes.substr(bytes.size() - kDigest))
    throw DataError(source + ": checkpoint integrity check failed");
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(body, pos, source);
  if (version != kCheckpointVersion)
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto hlen = get<std::uint64_t>(body, pos, source);
  if (pos + hlen > body.size()) throw DataError(source + ": truncated checkpoint header");
  json header;
  try {
    header = json::parse(body.substr(pos, hlen));
  } catch (const json::exception& e) {
    throw DataError(source + ": bad checkpoint header: " + e.what());
  }
  pos += hlen;

  Checkpoint ck;
  try {
    for (const auto& [k, v] : header.at("config").items()) ck.config.set(k, v.get<std::string>());
    ck.config.arch.validate();
    TrainState& st = ck.state;
    st.params = {ck.config.arch, ParamSet(param_layout(ck.config.arch))};
    const auto& specs = st.params.weights.specs();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != specs.size()) throw DataError(source + ": tensor count mismatch");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != specs[i].name || tensors[i].at("rows").get<Eigen::Index>() != specs[i].rows ||
          tensors[i].at("cols").get<Eigen::Index>() != specs[i].cols)
        throw DataError(source + ": tensor layout mismatch at '" + specs[i].name + "'");
    }
    st.moments = zero_moments(st.params.weights);
    st.best_params = st.params;
    st.step = header.at("step").get<int>();
    st.best_val = json_double(header.at("best_val"));
    st.best_step = header.at("best_step").get<int>();
    st.stale_evals = header.at("stale_evals").get<int>();
    st.stopped = header.at("stopped").get<bool>();
    get_blob(body, pos, st.params.weights, source);
    get_blob(body, pos, st.moments.m, source);
    get_blob(body, pos, st.moments.v, source);
    get_blob(body, pos, st.best_params.weights, source);
  } catch (const json::exception& e) {
    throw DataError(source + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(source + ": bad checkpoint config: " + e.what());
  }
  if (pos != body.size()) throw DataError(source + ": trailing bytes in checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::atomic_write(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path), path.string());
}

ScoreNetParams best_model(const Checkpoint& ckpt) { return ckpt.state.best_params; }

}  // namespace trajdiff

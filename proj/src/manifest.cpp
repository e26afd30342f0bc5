#include "neurongauge/manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "neurongauge/error.hpp"
#include "neurongauge/ratings_log.hpp"

#ifndef NEURONGAUGE_VERSION
#define NEURONGAUGE_VERSION "0.0.0"
#endif

namespace ngauge {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      fail(ErrorCode::Io, "SHA-256 initialisation failed");
    }
  }

  void update(const void* data, std::size_t len) {
    if (EVP_DigestUpdate(ctx_.get(), data, len) != 1) fail(ErrorCode::Io, "SHA-256 update failed");
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) fail(ErrorCode::Io, "SHA-256 finalisation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 0xF];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string_view tool_version() noexcept { return NEURONGAUGE_VERSION; }

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json inputs_json = nlohmann::json::array();
  for (const auto& [path, digest] : inputs) inputs_json.push_back({{"path", path}, {"sha256", digest}});
  return nlohmann::json{{"command", command},         {"config", config},
                        {"config_sha256", config_digest}, {"seed", seed},
                        {"inputs", inputs_json},       {"tool_version", tool_version},
                        {"started_at", started_at},    {"wall_seconds", wall_seconds}};
}

ManifestRecorder::ManifestRecorder(std::string command, nlohmann::json config, std::uint64_t seed,
                                   const std::vector<std::filesystem::path>& inputs)
    : start_(std::chrono::steady_clock::now()) {
  manifest_.command = std::move(command);
  manifest_.config_digest = sha256_hex(config.dump());
  manifest_.config = std::move(config);
  manifest_.seed = seed;
  for (const auto& p : inputs) {
    if (!p.empty()) manifest_.inputs.emplace_back(p.string(), sha256_file(p));
  }
  manifest_.tool_version = std::string(ngauge::tool_version());
  manifest_.started_at = iso8601_now();
}

std::filesystem::path ManifestRecorder::write_for(const std::filesystem::path& output) {
  manifest_.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  std::filesystem::path path = output;
  path += ".manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << manifest_.to_json().dump(2) << "\n";
  return path;
}

}  // namespace ngauge

#include "metacritique/util.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "metacritique/errors.hpp"

namespace metacritique {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, digest, &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha256 computation failed");

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0x0f]);
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  static std::atomic<std::uint64_t> counter{0};

  fs::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StoreError("cannot create directory " + dir.string() + ": " + ec.message());
  }

  std::ostringstream name;
  name << "." << path.filename().string() << ".tmp." << ::getpid() << "."
       << counter.fetch_add(1);
  fs::path tmp = dir / name.str();

  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot open temp file " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw StoreError("write failed for " + tmp.string());
    }
  }

  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw StoreError("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double round_half_up(double value, int digits) {
  double scale = std::pow(10.0, digits);
  double scaled = value * scale;
  // Nudge values sitting a hair below .5 (from binary representation of
  // decimals like 0.625) onto the boundary before rounding away from zero.
  double nearest_half = std::floor(std::abs(scaled)) + 0.5;
  if (std::abs(std::abs(scaled) - nearest_half) < 1e-9) {
    scaled = std::copysign(nearest_half, scaled);
  }
  return std::round(scaled) / scale;
}

std::string format_fixed(double value, int digits) {
  double rounded = round_half_up(value, digits);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, rounded);
  // Normalize "-0.00" to "0.00".
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::string format_pct(double fraction) { return format_fixed(fraction * 100.0, 2); }

std::string sanitize_for_filename(const std::string& id) {
  std::string out;
  out.reserve(id.size());
  bool changed = false;
  for (char c : id) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-';
    if (ok) {
      out.push_back(c);
    } else {
      out.push_back('_');
      changed = true;
    }
  }
  if (out.empty() || out == "." || out == "..") changed = true;
  if (changed) {
    out += "-" + sha256_hex(id).substr(0, 8);
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string iso8601_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace metacritique

#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>

namespace metacritique {

// Hex-encoded SHA-256 of the exact bytes.
std::string sha256_hex(std::string_view bytes);

// Writes content to a sibling temp file and renames it over path, so readers
// never observe a half-written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Reads a whole file as bytes. Throws StoreError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

// Round half away from zero at `digits` decimal places. This is the display
// rounding used everywhere a score is rendered: 0.625 at 2 digits -> 0.63.
double round_half_up(double value, int digits);

// Renders a 0..1 ratio as a percentage string with two decimals ("87.61").
std::string format_pct(double fraction);

// Fixed-point rendering with `digits` decimals, half-up ("0.6667").
std::string format_fixed(double value, int digits);

// Replaces characters outside [A-Za-z0-9._-] so an external id can name a
// file; appends a short digest when anything was replaced, to keep distinct
// ids distinct on disk.
std::string sanitize_for_filename(const std::string& id);

// splitmix64 — used to derive independent RNG streams from one seed.
std::uint64_t splitmix64(std::uint64_t x);

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601_now();

// Counting semaphore with a runtime limit (std::counting_semaphore fixes the
// ceiling at compile time).
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard lock(mutex_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int count_;
};

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(Semaphore& s) : sem_(s) { sem_.acquire(); }
  ~SemaphoreGuard() { sem_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  Semaphore& sem_;
};

}  // namespace metacritique

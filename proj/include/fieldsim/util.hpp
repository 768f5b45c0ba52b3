#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fieldsim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a. Stable across platforms; used for derived seeds, config
// hashes, template checksums and mock prompt hashes.
inline constexpr uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

uint64_t fnv1a64(std::string_view bytes, uint64_t seed = kFnvOffset);
std::string hex64(uint64_t value);

// splitmix64 step; small deterministic generator for shuffled-option seeds
// and test mocks.
uint64_t splitmix64_next(uint64_t& state);

std::string trim(std::string_view s);
std::string to_lower(std::string s);
// Collapses every whitespace run to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);
bool istarts_with(std::string_view text, std::string_view prefix);
// Case-insensitive substring search; npos when absent.
size_t ifind(std::string_view text, std::string_view needle, size_t from = 0);
size_t ifind_last(std::string_view text, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Outcome of parsing a model response: either a value or a machine-readable
// failure code. Parse failures are data (they drive retries and logging),
// not exceptions.
template <typename T>
struct ParseResult {
  std::optional<T> value;
  std::string code;     // empty on success
  std::string message;  // empty on success

  bool ok() const { return value.has_value(); }
  explicit operator bool() const { return ok(); }

  static ParseResult success(T v) {
    ParseResult r;
    r.value = std::move(v);
    return r;
  }
  static ParseResult failure(std::string code, std::string message) {
    ParseResult r;
    r.code = std::move(code);
    r.message = std::move(message);
    return r;
  }
};

// Injectable clock so backoff, rate limiting and log timestamps are
// deterministic under test.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual uint64_t now_ms() = 0;
  virtual void sleep_ms(uint64_t ms) = 0;
};

class SystemClock final : public Clock {
 public:
  uint64_t now_ms() override;
  void sleep_ms(uint64_t ms) override;
};

// Virtual time: now() is a counter, sleep() advances it. A fixed instant
// (never advanced) makes run logs byte-reproducible. Atomic so concurrent
// trial workers can read it while a limiter advances it.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(uint64_t start_ms = 0) : now_(start_ms) {}
  uint64_t now_ms() override { return now_.load(); }
  void sleep_ms(uint64_t ms) override { now_.fetch_add(ms); }
  void set(uint64_t ms) { now_.store(ms); }

 private:
  std::atomic<uint64_t> now_;
};

}  // namespace fieldsim

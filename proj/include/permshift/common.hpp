#pragma once

// Shared plumbing: error codes, the deterministic seed-derivation contract,
// and a small parallel-for helper. Every random decision in the library is
// derived from (master seed, operation tag, index) through splitmix64, and
// parallel work writes into per-index slots, so results never depend on the
// worker count.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace permshift {

enum class Errc {
  missing_label_column,
  non_binary_value,
  duplicate_feature_name,
  invalid_feature_name,
  empty_dataset,
  malformed_csv,
  insufficient_class_rows,
  empty_intersection,
  length_mismatch,
  too_few_samples,
  single_class_dataset,
  single_class_labels,
  width_mismatch,
  too_many_features_for_exact,
  invalid_spec,
  config_error,
  io_error,
  internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_label_column: return "MissingLabelColumn";
    case Errc::non_binary_value: return "NonBinaryValue";
    case Errc::duplicate_feature_name: return "DuplicateFeatureName";
    case Errc::invalid_feature_name: return "InvalidFeatureName";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::malformed_csv: return "MalformedCsv";
    case Errc::insufficient_class_rows: return "InsufficientClassRows";
    case Errc::empty_intersection: return "EmptyIntersection";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::too_few_samples: return "TooFewSamples";
    case Errc::single_class_dataset: return "SingleClassDataset";
    case Errc::single_class_labels: return "SingleClassLabels";
    case Errc::width_mismatch: return "WidthMismatch";
    case Errc::too_many_features_for_exact: return "TooManyFeaturesForExact";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
    case Errc::internal: return "InternalError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void internal_check(bool ok, const char* what) {
  if (!ok) fail(Errc::internal, what);
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

// splitmix64 finalizer.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Deterministic sub-seed for one operation instance. Tags are short literal
// strings ("stratified_split", "rf_tree", ...); a/b are indices such as the
// class id or tree number.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = mix64(master ^ fnv1a64(tag));
  h = mix64(h ^ (a + 0x9E3779B97F4A7C15ULL));
  h = mix64(h ^ (b + 0xD1B54A32D192ED03ULL));
  return h;
}

// splitmix64 stream. Not a crypto RNG; chosen because the output sequence is
// fully specified by the seed, unlike std::shuffle / std::uniform_int_distribution
// whose results vary across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Lemire reduction; n == 0 is a caller bug.
  uint64_t next_below(uint64_t n) {
    internal_check(n > 0, "next_below(0)");
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

 private:
  uint64_t state_;
};

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};
  return cap;
}
}  // namespace detail

// 0 restores the default (hardware concurrency).
inline void set_max_threads(int n) { detail::thread_cap().store(n < 0 ? 0 : n); }

inline int max_threads() {
  int cap = detail::thread_cap().load();
  if (cap > 0) return cap;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). fn must only write to state owned by index i;
// any cross-index reduction belongs in a sequential pass afterwards.
template <typename Fn>
inline void parallel_for(size_t n, Fn&& fn) {
  int workers = max_threads();
  if (static_cast<size_t>(workers) > n) workers = static_cast<int>(n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  const size_t chunk = std::max<size_t>(1, n / (static_cast<size_t>(workers) * 8));
  auto work = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const size_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      const size_t end = std::min(n, begin + chunk);
      try {
        for (size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

// Write-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(Errc::io_error, "short write: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(Errc::io_error, "rename failed: " + path.string() + " (" + ec.message() + ")");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace permshift

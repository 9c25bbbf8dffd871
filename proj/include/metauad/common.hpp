#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace metauad {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: usage 1, format 2, precondition 3, numeric 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public FormatError {
 public:
  using FormatError::FormatError;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Deterministic RNG wrapper. mt19937_64 output is standardized; the
// double/int mappings below are written out so streams are identical on
// every platform (std::uniform_real_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // uniform in [0,1) with 53-bit resolution
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller (single value; pair cache avoided for
  // reproducibility of call counts)
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // uniform index in [0, n)
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // first k entries of a seeded partial Fisher-Yates over 0..n-1
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 eng_;
};

// Stable stream splitting: derive_seed(base, i) != derive_seed(base, j) with
// overwhelming probability, and the mapping never changes between runs.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// FNV-1a over raw bytes; used for content hashes in manifests and dataset ids.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_combine(std::uint64_t h, const void* data, std::size_t len);
std::string hash_hex(std::uint64_t h);
std::uint64_t hash_file(const std::string& path);

// string helpers
std::string trim(const std::string& s);
std::string to_lower(std::string s);
std::vector<std::string> split(const std::string& s, char sep);
bool iequals(const std::string& a, const std::string& b);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Worker cap from META_UAD_THREADS (0 or unset = hardware concurrency).
int worker_count();

// Runs fn(i) for i in [0, n). Results must be written to caller-owned,
// index-addressed slots; chunk scheduling never affects output content.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace metauad

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmlg {

// ---------------------------------------------------------------------------
// Error hierarchy. Every error carries a human-readable message naming the
// offending values (shapes, ids, counts, paths).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct VocabError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  enum class Kind { magic, version, hash, truncated };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// ---------------------------------------------------------------------------
// Seeded RNG. Draws are hand-rolled from mt19937_64 raw output so that a
// given seed produces the same stream on every platform and build.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64();

  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);

  // standard normal via Box-Muller (no cached spare; one draw costs two uniforms)
  double normal();

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Collapses any number of stream labels into one seed (splitmix-style mixing).
std::uint64_t mix_seed(std::uint64_t a);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d);

// FNV-1a for stable string -> stream-label hashing (also used by data splits).
std::uint64_t fnv1a64(const std::string& s);

// ---------------------------------------------------------------------------
// SHA-256 (vocabulary fingerprints in checkpoints).
// ---------------------------------------------------------------------------

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(const void* data, std::size_t len);
Sha256Digest sha256(const std::string& s);
std::string to_hex(const Sha256Digest& d);

// ---------------------------------------------------------------------------
// File helpers. All writers go through a temp-then-rename so a failed command
// never leaves a partial output behind.
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace mmlg

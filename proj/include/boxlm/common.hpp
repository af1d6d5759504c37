// Copyright 2026 The boxlm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace boxlm {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure the library can surface is a subclass of
// Error so the CLI can map exception type -> exit code in one place.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or contradictory configuration (unknown enum value, out-of-range field).
struct ConfigError : Error {
  using Error::Error;
};
// Filesystem-level failure (missing file, unwritable directory).
struct IoError : Error {
  using Error::Error;
};
// A file exists and is readable but its contents violate the expected schema.
struct SchemaViolation : Error {
  using Error::Error;
};
// A surface string contains a word outside the closed vocabulary.
struct UnknownTokenError : Error {
  using Error::Error;
};
// A coordinate left [0, 1] where the contract requires it inside.
struct CoordOutOfRangeError : Error {
  using Error::Error;
};
// An object state combination the consistency rules forbid.
struct InconsistentStateError : Error {
  using Error::Error;
};
// Scene placement rejection sampling exhausted its attempt budget.
struct PlacementFailedError : Error {
  using Error::Error;
};
// NaN/Inf detected in a forward activation.
struct NonFiniteActivationError : Error {
  using Error::Error;
};
// NaN/Inf detected in an accumulated gradient.
struct NonFiniteGradientError : Error {
  using Error::Error;
};
// NaN/Inf detected in parameters after an optimizer step.
struct NonFiniteUpdateError : Error {
  using Error::Error;
};
// Checkpoint does not match the model/vocab it is being loaded into.
struct CheckpointMismatchError : Error {
  using Error::Error;
};
// Two evaluation reports cover different splits and cannot be compared.
struct SplitMismatchError : Error {
  using Error::Error;
};
// Run directory is locked by another process or already populated.
struct RunDirBusyError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 gives a portable, standardized stream;
// the distributions are hand-rolled because the standard library's
// distribution objects are implementation-defined and would break
// byte-identical artifacts across toolchains.
// ---------------------------------------------------------------------------

// splitmix64 finalizer; used both to derive independent seeds and to hash
// small integers deterministically.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for an independent substream (scene i, step s, ...) of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x51ed2701ab0e5e5dull));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift; the O(n/2^64) bias is far
  // below anything observable here and the method is branch-free and
  // platform-stable.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  // Standard normal via Box-Muller (no cached spare: one value per call keeps
  // the consumed-stream length predictable).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]: log stays finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Hashing and formatting helpers.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a_64(const void* data, std::size_t n,
                              std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a_64(const std::string& s) {
  return fnv1a_64(s.data(), s.size());
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Shortest round-trip-safe decimal rendering of a double. %.17g always
// round-trips; when fewer digits already parse back exactly we keep the
// shorter form so emitted files stay readable.
inline std::string fmt_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 16; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Small file helpers. All artifact writes go through write_file so the
// library never leaves half-written outputs behind on error paths.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace boxlm

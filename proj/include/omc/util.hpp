#pragma once
// Shared plumbing: deterministic RNG substreams, SHA-256 content hashes,
// a parallel-for task pool, and text/number formatting helpers.

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace omc {

// One SplitMix64 step on `state`; returns the mixed value.
std::uint64_t splitmix64(std::uint64_t& state);

// Independent random substream for one trajectory (or other indexed task).
// Seeds a std::mt19937_64 from SplitMix64 mixing of (master_seed, stream_index).
// The engine's output sequence is fixed by the C++ standard, and uniforms use
// an explicit 53-bit mapping, so streams are bit-reproducible across platforms
// and independent of how tasks are scheduled onto workers.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

  // Uniform on [0,1): (raw >> 11) * 2^-53. std::uniform_real_distribution is
  // implementation-defined, so it is deliberately not used.
  double uniform();

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

// Runs task(0..count-1) on `workers` threads (<=1 runs inline, in order).
// Tasks must be independent; the first exception thrown is rethrown after all
// workers join.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& task);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

inline std::chrono::steady_clock::time_point now() {
  return std::chrono::steady_clock::now();
}
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(now() - t0).count();
}

// Caps BLAS-internal threading (call once at program start); worker-level
// parallelism owns all cores so BLAS must not oversubscribe them.
void pin_blas_single_threaded();

}  // namespace omc

#pragma once
// Stochastic unravelling of the monitored cavity: full-record sampling (every
// decay channel resolved, pure states) and detector-record sampling (only
// detected photons resolved, conditional densities), plus click-record
// (de)serialization and conditional replay along a fixed record.

#include <cstdint>
#include <string>
#include <vector>

#include "omc/open.hpp"

namespace omc {

// Raised when the running state's population at the top cavity or mechanical
// level exceeds the configured abort threshold: results in the chosen
// truncated space would no longer be trustworthy.
struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClickEvent {
  double t = 0.0;
  JumpChannel ch = JumpChannel::photon_detected;
};

enum class SamplingMode { full, detector };

const char* sampling_mode_name(SamplingMode mode);
SamplingMode sampling_mode_from_name(const std::string& name);

// One sampled measurement record. `fingerprint` ties it to the parameters and
// truncation it was generated under; replay/inference verify it before reuse.
struct ClickRecord {
  std::vector<ClickEvent> events;
  double t_end = 0.0;
  std::uint64_t seed = 0;          // master seed
  std::uint64_t stream = 0;        // substream index within the master seed
  std::string fingerprint;
  SamplingMode mode = SamplingMode::full;
  int dim_cavity = 0;
  int dim_mech = 0;
  int format_version = 1;

  int detected_count() const;

  // Line-delimited JSON: one header object, then one object per event.
  // Doubles are written in shortest round-trip form, so
  // deserialize(serialize(r)) reproduces every field bit-exactly.
  std::string serialize() const;
  static ClickRecord deserialize(const std::string& text);
};

struct SamplerOptions {
  // Fatal truncation-leakage level (top cavity or mech level population of the
  // running normalized state, checked at every jump and at the end time).
  // Raise deliberately when generation and analysis share the same truncated
  // space and the comparison is therefore unbiased by the shared truncation.
  double truncation_abort = 1e-2;
  double bisect_tol = 1e-6;        // click-time bisection resolution
  StepControl step;                // integrator control for non-spectral paths
  const PropagatorCache* cache = nullptr;  // detector-mode spectral fast path
};

struct TrajectoryResult {
  ClickRecord record;
  State final_state;  // normalized conditional state at t_end
};

// Samples one record from `initial` over [0, t_end] using the inverse-transform
// waiting-time construction: draw u, propagate until the squared norm (full
// mode) or trace (detector mode) reaches u, bisect the crossing to
// `bisect_tol`, draw the channel (full mode: weights kappa<n_c> :
// gamma(mbar+1)<n_m> : gamma mbar<n_m + 1> at the jump time, and photon jumps
// are tagged detected/lost with probability kappa_d/kappa), apply the jump,
// renormalize, repeat. RNG stream: RngStream(master_seed, stream_index); a
// mixed initial density first consumes one uniform to pick a basis state, then
// each event consumes (waiting u, channel draw, detected/lost draw) in full
// mode and only the waiting u in detector mode.
TrajectoryResult sample_trajectory(const SystemParams& params, const FockSpace& space,
                                   const State& initial, double t_end,
                                   SamplingMode mode, std::uint64_t master_seed,
                                   std::uint64_t stream_index,
                                   const SamplerOptions& options = {});

// Conditional state at each checkpoint time, given the fixed record: no-click
// propagation between events, recorded jumps applied, normalized at readout.
// Works for records of either mode (full records replay all four channels).
// Checkpoints must be sorted ascending within [0, t_end].
std::vector<State> replay_conditional(const ClickRecord& record,
                                      const SystemParams& params,
                                      const FockSpace& space, const State& initial,
                                      const std::vector<double>& checkpoints,
                                      const SamplerOptions& options = {});

// Convenience batch driver: records for stream indices [0, count) under one
// master seed, scheduled over `workers` threads. Results are ordered by stream
// index, and identical for any worker count.
std::vector<TrajectoryResult> sample_ensemble(const SystemParams& params,
                                              const FockSpace& space,
                                              const State& initial, double t_end,
                                              SamplingMode mode,
                                              std::uint64_t master_seed,
                                              std::size_t count, int workers,
                                              const SamplerOptions& options = {});

}  // namespace omc

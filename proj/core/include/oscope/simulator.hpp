#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::sim {

// Piecewise behavior templates. Each segment emits `duration` samples and
// may move the running level:
//   hold  - stay at the current level (magnitude ignored)
//   ramp  - linear by magnitude over the segment; level += magnitude
//   step  - immediate jump by magnitude, held; level += magnitude
//   spike - rectangular excursion at level + magnitude; level unchanged
//   decay - exponential relaxation toward level + magnitude; level ends there
enum class SegmentKind { hold, ramp, step, spike, decay };

struct Segment {
  SegmentKind kind = SegmentKind::hold;
  std::size_t duration = 0;
  double magnitude = 0.0;
};

struct FeatureTrack {
  FeatureId feature;
  double baseline = 0.0;
  std::vector<Segment> segments;
};

struct BehaviorSignature {
  BehaviorLabel label;
  std::vector<FeatureTrack> tracks;
  std::size_t onset_jitter = 0;    // max samples, uniform shift of the template
  double amplitude_jitter = 0.0;   // relative fraction; per-trace, per-segment scale

  std::size_t template_length() const;
  std::vector<FeatureId> features() const;
};

struct NoiseModel {
  double ar1_rho = 0.9;             // in [0,1)
  double sigma = 0.0;               // stationary std of the AR(1) component
  double drift_per_sample = 0.0;
  double baseline_jitter = 0.0;     // max abs per-trace, per-feature level offset
  std::size_t background_processes = 0;
  double background_event_rate = 0.0;  // events per second per process
};

struct SynthOptions {
  std::size_t trace_len = kWindowLength;
  std::size_t template_start = 0;   // idle lead-in before the (jittered) template
  std::int64_t sample_interval_us = 1000;
};

struct SynthTrace {
  RawTrace trace;
  std::size_t onset = 0;  // ground truth: template_start + drawn jitter offset
};

// Deterministic given (signature, noise, seed, opts). The trace is
// baseline + shifted/scaled template + AR(1) + drift + background step
// events, clamped at zero and rounded to integer counters.
SynthTrace synth_trace_detail(const BehaviorSignature& sig, const NoiseModel& noise,
                              std::uint64_t seed, const SynthOptions& opts = {});
RawTrace synth_trace(const BehaviorSignature& sig, const NoiseModel& noise,
                     std::uint64_t seed, const SynthOptions& opts = {});

// per_class labeled windows per signature, split via make_dataset(seed).
Dataset synth_dataset(const std::vector<BehaviorSignature>& signatures,
                      const NoiseModel& noise, std::size_t per_class,
                      std::uint64_t seed, const SynthOptions& opts = {});

// 1..3 behaviors in sequence, separated by uniform random gaps drawn from
// [gap_min, gap_max]. Errors if templates plus gaps overflow the trace.
RawTrace synth_multi_behavior(const std::vector<const BehaviorSignature*>& sequence,
                              std::pair<std::size_t, std::size_t> gap_range,
                              const NoiseModel& noise, std::uint64_t seed,
                              const SynthOptions& opts, BehaviorLabel composite_label);

// The 17-behavior default catalog (four apps' worth of behavior names) over
// the five catalog features. Five class pairs differ only in sub-5-sample
// spike structure, which is what the invoking-interval ablation leans on.
std::vector<BehaviorSignature> default_catalog();
NoiseModel default_noise();

// The 41-category multi-behavior catalog: 17 singles, 12 adjacent pairs,
// 12 stride-3 triples over the default catalog.
struct MultiSpec {
  std::vector<std::size_t> parts;  // indices into the single catalog
  BehaviorLabel label;
};
std::vector<MultiSpec> multi_behavior_catalog();

// Catalog config file: a JSON document with a "signatures" section and
// optional "noise" defaults.
std::vector<BehaviorSignature> load_catalog(const std::string& path, NoiseModel* noise_out = nullptr);
void save_catalog(const std::vector<BehaviorSignature>& catalog, const NoiseModel& noise,
                  const std::string& path);

}  // namespace oscope::sim

#include "oscope/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "oscope/rng.hpp"
#include "oscope/signalprep.hpp"

using nlohmann::json;

namespace oscope::sim {

namespace {

struct RenderedTrack {
  std::vector<double> values;  // relative to the track baseline
  double final_level = 0.0;
};

// Renders one track's segments starting from `level`, scaling each segment's
// magnitude by the matching entry of `scales` (empty = no scaling).
RenderedTrack render_track(const FeatureTrack& track, double level,
                           const std::vector<double>& scales) {
  RenderedTrack out;
  for (std::size_t s = 0; s < track.segments.size(); ++s) {
    const Segment& seg = track.segments[s];
    const double mag = seg.magnitude * (scales.empty() ? 1.0 : scales[s]);
    const std::size_t d = seg.duration;
    switch (seg.kind) {
      case SegmentKind::hold:
        out.values.insert(out.values.end(), d, level);
        break;
      case SegmentKind::ramp:
        for (std::size_t i = 0; i < d; ++i)
          out.values.push_back(level + mag * static_cast<double>(i + 1) / static_cast<double>(d));
        level += mag;
        break;
      case SegmentKind::step:
        level += mag;
        out.values.insert(out.values.end(), d, level);
        break;
      case SegmentKind::spike:
        out.values.insert(out.values.end(), d, level + mag);
        break;
      case SegmentKind::decay: {
        const double target = level + mag;
        for (std::size_t i = 0; i < d; ++i)
          out.values.push_back(target + (level - target) *
                                            std::exp(-5.0 * static_cast<double>(i + 1) /
                                                     static_cast<double>(d)));
        level = target;
        break;
      }
    }
  }
  out.final_level = level;
  return out;
}

struct SequencedBehavior {
  const BehaviorSignature* sig;
  std::size_t gap_before;
};

RawTrace synth_impl(const std::vector<SequencedBehavior>& seq, const NoiseModel& noise,
                    std::uint64_t seed, const SynthOptions& opts,
                    const BehaviorLabel& label, std::size_t* onset_out) {
  if (seq.empty()) throw DataError("synth: empty behavior sequence");
  const BehaviorSignature& first = *seq.front().sig;
  const std::vector<FeatureId> features = first.features();
  const std::size_t n = features.size();
  if (n == 0) throw DataError("synth: signature has no feature tracks");
  for (const auto& sb : seq)
    if (sb.sig->features() != features)
      throw DataError("synth: sequence signatures have differing feature lists");

  Rng rng(seed);

  const std::size_t onset_offset = first.onset_jitter == 0
                                       ? 0
                                       : static_cast<std::size_t>(rng.uniform_int(
                                             static_cast<std::uint64_t>(first.onset_jitter) + 1));

  std::size_t total_template = 0;
  for (const auto& sb : seq) total_template += sb.gap_before + sb.sig->template_length();
  if (opts.template_start + first.onset_jitter + total_template > opts.trace_len)
    throw DataError("synth: behaviors plus gaps overflow the trace length");

  // Per behavior, per track, per segment amplitude scales.
  std::vector<std::vector<std::vector<double>>> scales(seq.size());
  for (std::size_t b = 0; b < seq.size(); ++b) {
    const BehaviorSignature& sig = *seq[b].sig;
    if (sig.amplitude_jitter > 0) {
      scales[b].resize(n);
      for (std::size_t f = 0; f < n; ++f) {
        scales[b][f].reserve(sig.tracks[f].segments.size());
        for (std::size_t s = 0; s < sig.tracks[f].segments.size(); ++s)
          scales[b][f].push_back(1.0 + rng.uniform(-sig.amplitude_jitter, sig.amplitude_jitter));
      }
    }
  }

  const std::size_t T = opts.trace_len;
  const std::size_t onset = opts.template_start + onset_offset;
  const double dt_seconds = static_cast<double>(opts.sample_interval_us) * 1e-6;

  RawTrace trace;
  trace.features = features;
  trace.sample_interval_us = opts.sample_interval_us;
  trace.start_time_unix_us = 0;
  trace.label = label;
  trace.device = {"oscope-sim", "1", "sim"};
  trace.samples.assign(T * n, 0);

  std::vector<double> column(T);
  for (std::size_t f = 0; f < n; ++f) {
    // Template: idle zero before onset; behaviors back to back with gap holds;
    // final level persists to the end of the trace.
    std::fill(column.begin(), column.end(), 0.0);
    double level = 0.0;
    std::size_t cursor = onset;
    for (std::size_t b = 0; b < seq.size(); ++b) {
      cursor += seq[b].gap_before;
      // gap holds the running level
      for (std::size_t t = cursor - seq[b].gap_before; t < cursor && t < T; ++t) column[t] = level;
      RenderedTrack r = render_track(seq[b].sig->tracks[f], level,
                                     scales[b].empty() ? std::vector<double>{} : scales[b][f]);
      for (std::size_t i = 0; i < r.values.size() && cursor + i < T; ++i)
        column[cursor + i] = r.values[i];
      cursor += r.values.size();
      level = r.final_level;
    }
    for (std::size_t t = cursor; t < T; ++t) column[t] = level;

    const double base_off =
        noise.baseline_jitter > 0 ? rng.uniform(-noise.baseline_jitter, noise.baseline_jitter) : 0.0;

    if (noise.sigma > 0) {
      const double innov = noise.sigma * std::sqrt(1.0 - noise.ar1_rho * noise.ar1_rho);
      double x = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        x = noise.ar1_rho * x + innov * rng.normal();
        column[t] += x;
      }
    }

    // Background processes: independent on/off renewal streams; while active
    // each contributes a persistent level shift.
    for (std::size_t p = 0; p < noise.background_processes; ++p) {
      if (noise.background_event_rate <= 0) break;
      double t_event = rng.exponential(noise.background_event_rate) / dt_seconds;
      bool active = false;
      double shift = 0.0, current = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        while (static_cast<double>(t) >= t_event) {
          if (!active) {
            shift = rng.uniform(6.0, 24.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            current += shift;
            active = true;
          } else {
            current -= shift;
            active = false;
          }
          t_event += rng.exponential(noise.background_event_rate) / dt_seconds;
        }
        column[t] += current;
      }
    }

    const double baseline = (f < first.tracks.size() ? first.tracks[f].baseline : 0.0) + base_off;
    for (std::size_t t = 0; t < T; ++t) {
      double v = baseline + column[t] + noise.drift_per_sample * static_cast<double>(t);
      trace.samples[t * n + f] = static_cast<std::uint64_t>(std::llround(std::max(0.0, v)));
    }
  }

  if (onset_out) *onset_out = onset;
  return trace;
}

}  // namespace

std::size_t BehaviorSignature::template_length() const {
  std::size_t len = 0;
  for (const auto& tr : tracks) {
    std::size_t l = 0;
    for (const auto& s : tr.segments) l += s.duration;
    len = std::max(len, l);
  }
  return len;
}

std::vector<FeatureId> BehaviorSignature::features() const {
  std::vector<FeatureId> out;
  out.reserve(tracks.size());
  for (const auto& t : tracks) out.push_back(t.feature);
  return out;
}

SynthTrace synth_trace_detail(const BehaviorSignature& sig, const NoiseModel& noise,
                              std::uint64_t seed, const SynthOptions& opts) {
  SynthTrace out;
  out.trace = synth_impl({{&sig, 0}}, noise, seed, opts, sig.label, &out.onset);
  return out;
}

RawTrace synth_trace(const BehaviorSignature& sig, const NoiseModel& noise, std::uint64_t seed,
                     const SynthOptions& opts) {
  return synth_trace_detail(sig, noise, seed, opts).trace;
}

Dataset synth_dataset(const std::vector<BehaviorSignature>& signatures, const NoiseModel& noise,
                      std::size_t per_class, std::uint64_t seed, const SynthOptions& opts) {
  if (signatures.size() < 2) throw DataError("synth_dataset: need at least 2 signatures");
  if (per_class < 2) throw DataError("synth_dataset: per_class must be >= 2");

  std::vector<Window> windows;
  windows.reserve(signatures.size() * per_class);
  for (std::size_t k = 0; k < signatures.size(); ++k) {
    for (std::size_t r = 0; r < per_class; ++r) {
      const std::uint64_t trace_seed = splitmix64(seed ^ splitmix64((k << 32) | r));
      RawTrace t = synth_trace(signatures[k], noise, trace_seed, opts);
      windows.push_back(prep::extract_window(t, 0, t.rows()));
    }
  }
  return make_dataset(std::move(windows), seed);
}

RawTrace synth_multi_behavior(const std::vector<const BehaviorSignature*>& sequence,
                              std::pair<std::size_t, std::size_t> gap_range,
                              const NoiseModel& noise, std::uint64_t seed,
                              const SynthOptions& opts, BehaviorLabel composite_label) {
  if (sequence.empty() || sequence.size() > 3)
    throw DataError("synth_multi_behavior: sequence length must be 1..3");
  if (gap_range.second < gap_range.first)
    throw DataError("synth_multi_behavior: bad gap range");

  // Gap draws come from a dedicated stream so a single-behavior sequence is
  // bit-identical to synth_trace with the same seed.
  std::vector<SequencedBehavior> seq;
  seq.push_back({sequence[0], 0});
  if (sequence.size() > 1) {
    Rng gap_rng(splitmix64(seed ^ 0xA5A5A5A5A5A5A5A5ULL));
    for (std::size_t i = 1; i < sequence.size(); ++i) {
      const std::size_t span = gap_range.second - gap_range.first + 1;
      seq.push_back({sequence[i],
                     gap_range.first + static_cast<std::size_t>(gap_rng.uniform_int(span))});
    }
  }
  return synth_impl(seq, noise, seed, opts, composite_label, nullptr);
}

NoiseModel default_noise() {
  NoiseModel m;
  m.ar1_rho = 0.9;
  m.sigma = 3.0;
  m.drift_per_sample = 0.002;
  m.baseline_jitter = 40.0;
  m.background_processes = 1;
  m.background_event_rate = 2.0;
  return m;
}

namespace {

// Behavior names mirror the four-application catalog the experiments use.
const char* kBehaviorNames[17] = {
    "telegram_launch",    "telegram_view_messages", "telegram_send_messages",
    "telegram_view_profile", "youtube_launch",      "youtube_refresh_videos",
    "youtube_view_videos", "youtube_short_videos",  "youtube_search_videos",
    "gmail_launch",       "gmail_view_emails",      "gmail_send_emails",
    "gmail_search_emails", "onenote_launch",        "onenote_view_notes",
    "onenote_create_notes", "onenote_search_notes",
};

// Four class pairs share every coarse segment and differ only in the order
// of a hi/lo spike doublet inside 5-sample clusters. The cluster stride is a
// multiple of 5, so sampling every 5th point sees the same value distribution
// for both orders; at full rate the order is plain.
std::size_t coarse_key(std::size_t k) {
  switch (k) {
    case 2: return 1;
    case 5: return 4;
    case 8: return 7;
    case 11: return 10;
    case 14: return 13;
    default: return k;
  }
}

bool hi_first(std::size_t k) {
  return k == 1 || k == 4 || k == 7 || k == 10 || k == 13;
}
bool has_clusters(std::size_t k) { return coarse_key(k) != k || hi_first(k); }

class TrackBuilder {
 public:
  explicit TrackBuilder(FeatureId f, double baseline) {
    track_.feature = std::move(f);
    track_.baseline = baseline;
  }
  TrackBuilder& hold_to(std::size_t t) {
    if (t > cursor_) {
      track_.segments.push_back({SegmentKind::hold, t - cursor_, 0.0});
      cursor_ = t;
    }
    return *this;
  }
  TrackBuilder& seg(SegmentKind kind, std::size_t dur, double mag) {
    track_.segments.push_back({kind, dur, mag});
    cursor_ += dur;
    return *this;
  }
  FeatureTrack finish(std::size_t total) {
    hold_to(total);
    return std::move(track_);
  }

 private:
  FeatureTrack track_;
  std::size_t cursor_ = 0;
};

// Fixed per-class digit in {0,1,2} for each coarse event slot.
int event_digit(std::size_t coarse, std::size_t slot) {
  return static_cast<int>(splitmix64(0x636174ULL + coarse * 131 + slot * 17) % 3);
}

// Digit selects the event shape: sustained drop, sustained rise, or a
// transient plateau. Level structure like this survives time warping, and
// instantaneous edges carry no sub-sample timing information for the
// cadence ablation to exploit.
void emit_event(TrackBuilder& b, std::size_t at, std::size_t dur, double amp, int digit) {
  b.hold_to(at);
  switch (digit) {
    case 0: b.seg(SegmentKind::step, dur, -amp); break;
    case 1: b.seg(SegmentKind::step, dur, amp); break;
    default: b.seg(SegmentKind::spike, dur, amp); break;
  }
}

}  // namespace

std::vector<BehaviorSignature> default_catalog() {
  const auto& feats = feature_catalog();
  const double kBaselines[5] = {900, 1800000, 620000, 1100000, 2400000};
  constexpr std::size_t kTemplateLen = 4600;
  constexpr std::size_t kClusterStart = 2200;
  constexpr std::size_t kClusterCount = 60;
  constexpr std::size_t kClusterStride = 30;  // multiple of 5

  // Two coarse event slots per auxiliary feature, fixed times and base
  // amplitudes; class identity lives in the digit-coded event shapes.
  struct Slot {
    std::size_t at, dur;
    double amp;
  };
  const Slot kSlots[4][2] = {
      {{500, 600, 2400}, {2600, 500, 1800}},   // f1 free blocks
      {{300, 500, 5200}, {3200, 600, 3600}},   // f2 available pages
      {{800, 400, 900}, {2000, 700, 1300}},    // f3 free inodes
      {{1200, 500, 4100}, {3600, 500, 2600}},  // f4 free memory
  };

  std::vector<BehaviorSignature> catalog;
  for (std::size_t k = 0; k < 17; ++k) {
    const std::size_t coarse = coarse_key(k);
    const double kk = static_cast<double>(coarse);
    BehaviorSignature sig;
    sig.label = {static_cast<int>(k), kBehaviorNames[k]};
    sig.onset_jitter = 200;
    sig.amplitude_jitter = 0.08;

    // f0: process count. A sharp step at the template origin anchors onset
    // detection; the cluster region carries the per-pair doublet order.
    {
      TrackBuilder b(feats[0], kBaselines[0]);
      b.seg(SegmentKind::step, 40, 250 + 30 * kk);
      emit_event(b, 700, 300, 350 + 25 * kk, static_cast<int>(coarse % 3));
      b.hold_to(kClusterStart);
      if (has_clusters(k)) {
        const bool hi = hi_first(k);
        for (std::size_t c = 0; c < kClusterCount; ++c) {
          // Per-cluster amplitude modulation stops warping from sliding the
          // whole train by half a cluster.
          const double m = 1.0 + 0.25 * std::sin(2.3 * static_cast<double>(c));
          const double a = (hi ? 850.0 : 150.0) * m;
          const double bmag = (hi ? 150.0 : 850.0) * m;
          b.seg(SegmentKind::spike, 2, a)
              .seg(SegmentKind::hold, 1, 0)
              .seg(SegmentKind::spike, 2, bmag)
              .seg(SegmentKind::hold, kClusterStride - 5, 0);
        }
      } else {
        // Singles get a class-scaled plateau over the same region.
        b.seg(SegmentKind::spike, 900, 180 + 22 * kk);
      }
      b.hold_to(4200).seg(SegmentKind::step, 30, -(110 + 9 * kk));
      sig.tracks.push_back(b.finish(kTemplateLen));
    }

    // Auxiliary counters: digit-coded coarse events; available pages and
    // free inodes also carry copies of the doublet-order code so paired
    // classes leave evidence on three counters.
    auto cluster_train = [&](TrackBuilder& b, std::size_t at, std::size_t count, double hi_amp,
                             double lo_amp, double phase) {
      const bool hi = hi_first(k);
      b.hold_to(at);
      for (std::size_t c = 0; c < count; ++c) {
        const double m = 1.0 + 0.25 * std::sin(2.3 * static_cast<double>(c) + phase);
        const double a = (hi ? hi_amp : lo_amp) * m;
        const double bmag = (hi ? lo_amp : hi_amp) * m;
        b.seg(SegmentKind::spike, 2, a)
            .seg(SegmentKind::hold, 1, 0)
            .seg(SegmentKind::spike, 2, bmag)
            .seg(SegmentKind::hold, kClusterStride - 5, 0);
      }
    };
    for (std::size_t f = 0; f < 4; ++f) {
      TrackBuilder b(feats[f + 1], kBaselines[f + 1]);
      const Slot& s0 = kSlots[f][0];
      emit_event(b, s0.at, s0.dur, s0.amp * (0.75 + 0.05 * kk), event_digit(coarse, f * 2));
      if (f == 1 && has_clusters(k)) cluster_train(b, 1000, 60, 560.0, 140.0, 2.0);
      const Slot& s1 = kSlots[f][1];
      emit_event(b, s1.at, s1.dur, s1.amp * (0.75 + 0.05 * kk), event_digit(coarse, f * 2 + 1));
      if (f == 2 && has_clusters(k)) cluster_train(b, 2900, 50, 680.0, 170.0, 1.0);
      sig.tracks.push_back(b.finish(kTemplateLen));
    }
    catalog.push_back(std::move(sig));
  }
  return catalog;
}

std::vector<MultiSpec> multi_behavior_catalog() {
  std::vector<MultiSpec> out;
  const auto singles = default_catalog();
  int next_id = 0;
  for (std::size_t i = 0; i < 17; ++i)
    out.push_back({{i}, {next_id++, singles[i].label.name}});
  for (std::size_t i = 0; i < 12; ++i) {
    const std::size_t a = i, b = (i + 1) % 17;
    out.push_back({{a, b}, {next_id++, singles[a].label.name + "+" + singles[b].label.name}});
  }
  for (std::size_t i = 0; i < 12; ++i) {
    const std::size_t a = i, b = (i + 3) % 17, c = (i + 6) % 17;
    out.push_back({{a, b, c},
                   {next_id++, singles[a].label.name + "+" + singles[b].label.name + "+" +
                                   singles[c].label.name}});
  }
  return out;
}

namespace {

SegmentKind kind_from_string(const std::string& s) {
  if (s == "hold") return SegmentKind::hold;
  if (s == "ramp") return SegmentKind::ramp;
  if (s == "step") return SegmentKind::step;
  if (s == "spike") return SegmentKind::spike;
  if (s == "decay") return SegmentKind::decay;
  throw DataError("catalog: unknown segment kind: " + s);
}

std::string kind_to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::hold: return "hold";
    case SegmentKind::ramp: return "ramp";
    case SegmentKind::step: return "step";
    case SegmentKind::spike: return "spike";
    case SegmentKind::decay: return "decay";
  }
  return "?";
}

}  // namespace

std::vector<BehaviorSignature> load_catalog(const std::string& path, NoiseModel* noise_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad catalog json: ") + e.what());
  }
  if (!doc.contains("signatures")) throw DataError("catalog: missing signatures section");

  std::vector<BehaviorSignature> catalog;
  for (const auto& js : doc["signatures"]) {
    BehaviorSignature sig;
    sig.label = {js.at("label").at("id").get<int>(), js.at("label").at("name").get<std::string>()};
    sig.onset_jitter = js.value("onset_jitter", std::size_t{0});
    sig.amplitude_jitter = js.value("amplitude_jitter", 0.0);
    for (const auto& jt : js.at("tracks")) {
      FeatureTrack tr;
      tr.feature = {jt.at("feature").at("syscall").get<std::string>(),
                    jt.at("feature").at("field").get<std::string>()};
      tr.baseline = jt.value("baseline", 0.0);
      for (const auto& jseg : jt.at("segments"))
        tr.segments.push_back({kind_from_string(jseg.at("kind").get<std::string>()),
                               jseg.at("duration").get<std::size_t>(),
                               jseg.value("magnitude", 0.0)});
      sig.tracks.push_back(std::move(tr));
    }
    catalog.push_back(std::move(sig));
  }
  if (noise_out && doc.contains("noise")) {
    const auto& jn = doc["noise"];
    noise_out->ar1_rho = jn.value("ar1_rho", noise_out->ar1_rho);
    noise_out->sigma = jn.value("sigma", noise_out->sigma);
    noise_out->drift_per_sample = jn.value("drift_per_sample", noise_out->drift_per_sample);
    noise_out->baseline_jitter = jn.value("baseline_jitter", noise_out->baseline_jitter);
    noise_out->background_processes =
        jn.value("background_processes", noise_out->background_processes);
    noise_out->background_event_rate =
        jn.value("background_event_rate", noise_out->background_event_rate);
  }
  return catalog;
}

void save_catalog(const std::vector<BehaviorSignature>& catalog, const NoiseModel& noise,
                  const std::string& path) {
  json sigs = json::array();
  for (const auto& sig : catalog) {
    json tracks = json::array();
    for (const auto& tr : sig.tracks) {
      json segs = json::array();
      for (const auto& s : tr.segments)
        segs.push_back({{"kind", kind_to_string(s.kind)},
                        {"duration", s.duration},
                        {"magnitude", s.magnitude}});
      tracks.push_back({{"feature", {{"syscall", tr.feature.syscall}, {"field", tr.feature.field}}},
                        {"baseline", tr.baseline},
                        {"segments", segs}});
    }
    sigs.push_back({{"label", {{"id", sig.label.id}, {"name", sig.label.name}}},
                    {"onset_jitter", sig.onset_jitter},
                    {"amplitude_jitter", sig.amplitude_jitter},
                    {"tracks", tracks}});
  }
  json doc = {{"format_version", 1},
              {"signatures", sigs},
              {"noise",
               {{"ar1_rho", noise.ar1_rho},
                {"sigma", noise.sigma},
                {"drift_per_sample", noise.drift_per_sample},
                {"baseline_jitter", noise.baseline_jitter},
                {"background_processes", noise.background_processes},
                {"background_event_rate", noise.background_event_rate}}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write catalog: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace oscope::sim

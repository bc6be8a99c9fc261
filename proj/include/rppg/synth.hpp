#pragma once

#include <cstdint>
#include <vector>

#include "rppg/rng.hpp"
#include "rppg/stmap.hpp"

namespace rppg::synth {

// One sinusoid of a source's rhythm. phase_spread > 0 scrambles the phase
// independently per sub-ROI, destroying the spatial coherence a genuine pulse
// would have.
struct Fundamental {
    double freq_hz = 1.2;
    double amplitude = 1.0;
    double phase_spread = 0.0;  // radians
};

struct NoiseSpec {
    double drift_amplitude = 0.0;  // slow illumination swing, shared by ROIs
    double drift_period_s = 8.0;
    double white_sigma = 0.0;
    double quant_step = 0.0;  // 0 disables quantization
};

// Rhythmic fingerprint of one generation method. Source 0 plays the real
// camera: a single coherent pulse whose rate is drawn per video. Forgery
// sources mix two fixed sinusoids with scrambled per-ROI phases and their own
// channel gain profile.
struct SourceSignature {
    std::uint32_t source_id = 0;
    bool per_video_rate = false;  // fundamental drawn from [1.0, 1.7] Hz
    std::vector<Fundamental> fundamentals;
    double harmonic_ratio = 0.0;  // 2nd harmonic amplitude relative to each fundamental
    // Phase offset of the 2nd harmonic against the doubled fundamental phase.
    // Values off the odd axis skew the waveform vertically (sharp crests over
    // shallow troughs, like a systolic peak), a shape cue that survives
    // min-max normalization as a shifted mean.
    double harmonic_phase = 0.0;
    double mix_weight = 1.0;      // weight of the first fundamental in mixtures
    std::vector<double> channel_gains;
    NoiseSpec noise;
};

struct SynthSpec {
    std::size_t num_sources = 6;
    std::size_t videos_per_source = 60;
    std::size_t frames_per_video = 640;
    double fps = 30.0;
    std::size_t n_rois = 6;
    std::size_t channels = 3;
    std::uint64_t seed = 42;
    double noise_scale = 1.0;  // multiplies white_sigma, for harder variants

    void validate() const;
};

// Pairwise-distinct signatures for num_sources in [2, 16]; index 0 is the
// real source.
std::vector<SourceSignature> default_signatures(std::size_t num_sources);

// Deterministic trace of one video: per ROI and channel a baseline plus the
// signature's sinusoids, illumination drift, white noise, then quantization.
stmap::RoiTrace generate_trace(const SourceSignature& sig, std::uint32_t video_id,
                               std::size_t frames, double fps, std::size_t n_rois,
                               std::size_t channels, std::uint64_t seed);

// All traces of a spec; per-video seeds derive from the master seed, so any
// video regenerates identically in isolation.
std::vector<stmap::RoiTrace> generate_dataset(const SynthSpec& spec);

} // namespace rppg::synth

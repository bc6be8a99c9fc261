#include "rppg/synth.hpp"

#include <cmath>

namespace rppg::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
// Conjugate golden ratio; its multiples mod 1 stay pairwise well separated,
// which keeps per-source parameters distinct without a table.
constexpr double kGolden = 0.6180339887498948482;

double frac(double x) { return x - std::floor(x); }

double spread01(std::size_t s, double shift) {
    return frac(kGolden * static_cast<double>(s) + shift);
}

} // namespace

void SynthSpec::validate() const {
    if (num_sources < 2 || num_sources > 16)
        throw ConfigError("num_sources must be in [2, 16], got " +
                          std::to_string(num_sources));
    if (videos_per_source < 1)
        throw ConfigError("videos_per_source must be positive");
    if (frames_per_video < 1) throw ConfigError("frames_per_video must be positive");
    if (!(fps > 0.0)) throw ConfigError("fps must be positive");
    if (n_rois < 1 || n_rois > 12)
        throw ConfigError("n_rois must be in [1, 12], got " +
                          std::to_string(n_rois));
    if (channels < 1) throw ConfigError("channels must be positive");
    if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be >= 0");
}

std::vector<SourceSignature> default_signatures(std::size_t num_sources) {
    if (num_sources < 2 || num_sources > 16)
        throw ConfigError("default_signatures supports 2 to 16 sources, got " +
                          std::to_string(num_sources));

    std::vector<SourceSignature> sigs;
    sigs.reserve(num_sources);

    // The harmonic is split into an odd part (horizontal shape) and an even
    // part (vertical skew). The even part is the workhorse: each source gets
    // its own slot on a skew grid, so classes stay separated by waveform
    // shape even when their bands overlap after spatial averaging.
    auto shape = [](SourceSignature& g, double even, double odd) {
        g.harmonic_ratio = std::hypot(even, odd);
        g.harmonic_phase = std::atan2(even, odd);
    };

    SourceSignature real;
    real.source_id = 0;
    real.per_video_rate = true;
    real.fundamentals = {{1.35, 2.2, 0.0}};  // rate replaced per video
    shape(real, 0.42, 0.15);  // sharp systolic crest
    real.mix_weight = 1.0;
    real.channel_gains = {1.0, 0.65, 0.42, 0.3, 0.24, 0.2, 0.17, 0.15};
    real.noise = {0.5, 10.0, 0.3, 0.05};
    sigs.push_back(std::move(real));

    // Real skin pulses with the same polarity in every color channel; forged
    // frames lose that cross-channel agreement. Each forgery flips the
    // waveform in its own subset of channels, and with the vertical skew the
    // flip mirrors that channel's normalized mean to the other side of 0.5,
    // so every source lands on its own corner of the per-channel mean cube.
    static constexpr double kGainSign[5][3] = {
        {+1.0, -1.0, -1.0},
        {-1.0, +1.0, -1.0},
        {-1.0, -1.0, +1.0},
        {+1.0, +1.0, -1.0},
        {+1.0, -1.0, +1.0},
    };

    for (std::size_t s = 1; s < num_sources; ++s) {
        SourceSignature f;
        f.source_id = static_cast<std::uint32_t>(s);
        f.per_video_rate = false;
        // The dominant component sits above the pulse band on a fixed grid so
        // the band positions stay pairwise separated; the weaker second
        // component sits below it. Grid cycles keep everything in [0.5, 4].
        const std::size_t idx = (s - 1) % 5, cycle = (s - 1) / 5;
        double f1 = 2.2 + 0.36 * static_cast<double>(idx) +
                    0.12 * static_cast<double>(cycle);
        double f2 = 0.55 + 0.16 * static_cast<double>(idx) +
                    0.05 * static_cast<double>(cycle);
        f.mix_weight = 0.6 + 0.25 * spread01(s, 0.25);
        double spread =
            3.141592653589793 * (0.55 + 0.40 * spread01(s, 0.71));
        f.fundamentals = {{f1, 2.2 * f.mix_weight, spread},
                          {f2, 2.2 * (1.0 - f.mix_weight), spread}};
        shape(f, 0.45 + 0.02 * static_cast<double>(cycle), 0.25);
        f.channel_gains.resize(8);
        for (std::size_t ch = 0; ch < f.channel_gains.size(); ++ch)
            f.channel_gains[ch] =
                ch < 3 ? kGainSign[idx][ch] *
                             (1.0 - 0.06 * static_cast<double>(cycle))
                       : 0.35 + 0.65 * spread01(s, 0.29 * static_cast<double>(ch + 1));
        f.noise = {0.5, 10.0, 0.22 + 0.3 * spread01(s, 0.93), 0.05};
        sigs.push_back(std::move(f));
    }
    return sigs;
}

stmap::RoiTrace generate_trace(const SourceSignature& sig, std::uint32_t video_id,
                               std::size_t frames, double fps, std::size_t n_rois,
                               std::size_t channels, std::uint64_t seed) {
    if (frames < 1) throw ContractError("generate_trace needs at least one frame");
    if (n_rois < 1 || channels < 1)
        throw ContractError("generate_trace needs positive n_rois and channels");
    if (!(fps > 0.0)) throw ContractError("generate_trace needs positive fps");
    if (sig.fundamentals.empty())
        throw ContractError("source signature has no fundamentals");

    Rng rng(seed);

    // Draw order is part of the format: rate, base phases, per-ROI jitter,
    // baselines, drift phase, then white noise frame-major.
    std::vector<Fundamental> funds = sig.fundamentals;
    if (sig.per_video_rate) funds[0].freq_hz = rng.uniform(1.0, 1.7);

    std::vector<std::vector<double>> phases(funds.size(),
                                            std::vector<double>(n_rois));
    for (std::size_t fi = 0; fi < funds.size(); ++fi) {
        double base = rng.uniform(0.0, kTwoPi);
        for (std::size_t roi = 0; roi < n_rois; ++roi)
            phases[fi][roi] = base + funds[fi].phase_spread * rng.uniform(-1.0, 1.0);
    }

    // Patches of one face sit within a few intensity units of each other; a
    // wide spread here would turn the maps into baseline stripe patterns that
    // drown the rhythm after min-max normalization.
    const double face_level = rng.uniform(112.0, 128.0);
    std::vector<double> baseline(n_rois);
    for (std::size_t roi = 0; roi < n_rois; ++roi)
        baseline[roi] = face_level + rng.uniform(-3.0, 3.0);

    const double drift_phase = rng.uniform(0.0, kTwoPi);

    stmap::RoiTrace trace;
    trace.video_id = video_id;
    trace.source_id = sig.source_id;
    trace.fps = fps;
    trace.n_rois = n_rois;
    trace.channels = channels;
    trace.frames.resize(frames * n_rois * channels);

    auto gain = [&](std::size_t ch) {
        return sig.channel_gains.empty()
                   ? 1.0
                   : sig.channel_gains[ch % sig.channel_gains.size()];
    };
    const NoiseSpec& nz = sig.noise;

    std::size_t idx = 0;
    for (std::size_t t = 0; t < frames; ++t) {
        const double tt = static_cast<double>(t) / fps;
        const double drift =
            nz.drift_amplitude *
            std::sin(kTwoPi * tt / nz.drift_period_s + drift_phase);
        for (std::size_t roi = 0; roi < n_rois; ++roi) {
            double pulse = 0.0;
            for (std::size_t fi = 0; fi < funds.size(); ++fi) {
                const double arg = kTwoPi * funds[fi].freq_hz * tt + phases[fi][roi];
                pulse += funds[fi].amplitude *
                         (std::sin(arg) +
                          sig.harmonic_ratio *
                              std::sin(2.0 * kTwoPi * funds[fi].freq_hz * tt +
                                       2.0 * phases[fi][roi] +
                                       sig.harmonic_phase));
            }
            for (std::size_t ch = 0; ch < channels; ++ch) {
                double v = baseline[roi] + 7.0 * static_cast<double>(ch) +
                           gain(ch) * pulse + drift +
                           nz.white_sigma * rng.gaussian();
                if (nz.quant_step > 0.0)
                    v = std::round(v / nz.quant_step) * nz.quant_step;
                trace.frames[idx++] = v;
            }
        }
    }
    trace.validate();
    return trace;
}

std::vector<stmap::RoiTrace> generate_dataset(const SynthSpec& spec) {
    spec.validate();
    std::vector<SourceSignature> sigs = default_signatures(spec.num_sources);
    for (auto& s : sigs) s.noise.white_sigma *= spec.noise_scale;

    std::vector<stmap::RoiTrace> traces;
    traces.reserve(spec.num_sources * spec.videos_per_source);
    for (std::size_t s = 0; s < spec.num_sources; ++s) {
        for (std::size_t j = 0; j < spec.videos_per_source; ++j) {
            const auto vid = static_cast<std::uint32_t>(
                s * spec.videos_per_source + j);
            const std::uint64_t vseed = derive_seed(spec.seed, "video", vid);
            traces.push_back(generate_trace(sigs[s], vid, spec.frames_per_video,
                                            spec.fps, spec.n_rois, spec.channels,
                                            vseed));
        }
    }
    return traces;
}

} // namespace rppg::synth

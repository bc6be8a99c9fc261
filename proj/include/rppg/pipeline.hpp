#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rppg/eval.hpp"
#include "rppg/stmap.hpp"
#include "rppg/synth.hpp"
#include "rppg/train.hpp"

namespace rppg::pipeline {

// synth: generate traces, write the trace directory.
struct SynthOptions {
    synth::SynthSpec spec;
    std::filesystem::path out;
};
void run_synth(const SynthOptions& opt);

// extract: traces -> raw (unnormalized) maps on disk, one STMP per clip.
struct ExtractOptions {
    std::filesystem::path traces;
    std::filesystem::path out;
    stmap::ClipSpec clip;  // group_size unused here
};
struct ExtractSummary {
    std::size_t videos = 0;
    std::size_t clips = 0;
    std::vector<std::uint32_t> skipped_videos;  // shorter than one clip
};
ExtractSummary run_extract(const ExtractOptions& opt);

// Deterministic stratified-by-source video split; returns video ids.
struct VideoSplit {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> val;
};
VideoSplit split_videos(const std::vector<stmap::SpatioTemporalMap>& maps,
                        double split, std::uint64_t seed);

// Normalize and group one video-id subset of the maps.
std::vector<stmap::MapGroup> make_groups(
    const std::vector<stmap::SpatioTemporalMap>& maps,
    const std::vector<std::uint32_t>& videos, const stmap::ClipSpec& spec);

// train: maps dir -> checkpoint + history.json beside it. in_channels is
// taken from the maps; num_classes = 0 means highest stored source id + 1.
struct TrainOptions {
    std::filesystem::path maps;
    train::TrainConfig config;
    double split = 0.7;
    std::filesystem::path out_checkpoint;
    std::filesystem::path history;  // empty: <out dir>/history.json
    bool shuffle_labels = false;    // control runs: permute group labels
};
struct TrainSummary {
    std::size_t train_videos = 0;
    std::size_t val_videos = 0;
    std::size_t train_groups = 0;
    std::size_t val_groups = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    std::vector<train::EpochStats> history;
};
TrainSummary run_train(const TrainOptions& opt);

// eval: checkpoint + maps dir -> report.json (+ optional confusion.csv).
struct EvalOptions {
    std::filesystem::path model;
    std::filesystem::path maps;
    std::filesystem::path report;
    std::filesystem::path confusion_csv;  // empty: skip
};
eval::EvalResult run_eval(const EvalOptions& opt);

// blend-demo: elementwise convex mix of two stored maps.
struct BlendDemoOptions {
    std::filesystem::path map_a;
    std::filesystem::path map_b;
    std::filesystem::path out;
    double alpha = 0.5;
};
void run_blend_demo(const BlendDemoOptions& opt);

} // namespace rppg::pipeline

#include "rppg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rppg/augment.hpp"
#include "rppg/errors.hpp"
#include "rppg/rng.hpp"

namespace rppg::pipeline {

void run_synth(const SynthOptions& opt) {
    auto traces = synth::generate_dataset(opt.spec);
    std::filesystem::create_directories(opt.out);
    stmap::write_trace_dir(opt.out, traces);
}

ExtractSummary run_extract(const ExtractOptions& opt) {
    auto traces = stmap::read_trace_dir(opt.traces);
    ExtractSummary summary;
    std::vector<stmap::SpatioTemporalMap> maps;
    for (const auto& trace : traces) {
        auto starts = stmap::segment_clips(trace, opt.clip);
        if (starts.empty()) {
            summary.skipped_videos.push_back(trace.video_id);
            continue;
        }
        ++summary.videos;
        for (std::size_t s : starts) maps.push_back(stmap::build_map(trace, s, opt.clip));
    }
    if (maps.empty())
        throw ContractError("no trace is long enough for a single " +
                            std::to_string(opt.clip.clip_len) + "-frame clip");
    summary.clips = maps.size();
    std::filesystem::create_directories(opt.out);
    stmap::write_map_dir(opt.out, maps);
    return summary;
}

VideoSplit split_videos(const std::vector<stmap::SpatioTemporalMap>& maps,
                        double split, std::uint64_t seed) {
    if (!(split > 0.0 && split < 1.0))
        throw ConfigError("split fraction must lie in (0,1), got " +
                          std::to_string(split));
    std::map<std::uint32_t, std::set<std::uint32_t>> videos_by_source;
    for (const auto& m : maps) videos_by_source[m.source_id].insert(m.video_id);

    Rng rng(derive_seed(seed, "split"));
    VideoSplit out;
    for (const auto& [source, vids] : videos_by_source) {
        std::vector<std::uint32_t> pool(vids.begin(), vids.end());
        for (std::size_t i = pool.size(); i > 1; --i)
            std::swap(pool[i - 1], pool[rng.integer(i)]);
        auto n_train = static_cast<std::size_t>(
            std::llround(split * static_cast<double>(pool.size())));
        n_train = std::clamp<std::size_t>(n_train, 0, pool.size());
        out.train.insert(out.train.end(), pool.begin(), pool.begin() + n_train);
        out.val.insert(out.val.end(), pool.begin() + n_train, pool.end());
    }
    if (out.train.empty() || out.val.empty())
        throw ConfigError("split " + std::to_string(split) +
                          " leaves one side of the video split empty");
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

std::vector<stmap::MapGroup> make_groups(
    const std::vector<stmap::SpatioTemporalMap>& maps,
    const std::vector<std::uint32_t>& videos, const stmap::ClipSpec& spec) {
    std::set<std::uint32_t> wanted(videos.begin(), videos.end());
    std::map<std::uint32_t, std::vector<stmap::SpatioTemporalMap>> by_video;
    for (const auto& m : maps)
        if (wanted.count(m.video_id)) by_video[m.video_id].push_back(m);

    std::vector<stmap::MapGroup> groups;
    for (auto& [vid, vmaps] : by_video) {
        std::sort(vmaps.begin(), vmaps.end(), [](const auto& a, const auto& b) {
            return a.clip_index < b.clip_index;
        });
        for (auto& m : vmaps) m = stmap::normalize_map(m);
        auto g = stmap::group_adjacent(vmaps, spec.group_size);
        groups.insert(groups.end(), std::make_move_iterator(g.begin()),
                      std::make_move_iterator(g.end()));
    }
    return groups;
}

TrainSummary run_train(const TrainOptions& opt) {
    auto maps = stmap::read_map_dir(opt.maps);

    train::TrainConfig cfg = opt.config;
    cfg.model.in_channels = maps[0].channels;
    if (cfg.model.num_classes == 0) {
        std::uint32_t top = 0;
        for (const auto& m : maps) top = std::max(top, m.source_id);
        cfg.model.num_classes = top + 1;
    }
    if (cfg.clip.clip_len != maps[0].clip_len)
        throw ConfigError("clip length " + std::to_string(cfg.clip.clip_len) +
                          " does not match the stored maps (" +
                          std::to_string(maps[0].clip_len) + " frames)");

    VideoSplit split = split_videos(maps, opt.split, cfg.seed);
    auto train_groups = make_groups(maps, split.train, cfg.clip);
    auto val_groups = make_groups(maps, split.val, cfg.clip);
    if (train_groups.empty()) throw ContractError("the training split has no groups");
    if (val_groups.empty()) throw ContractError("the validation split has no groups");

    if (opt.shuffle_labels) {
        Rng rng(derive_seed(cfg.seed, "shuffle-labels"));
        std::vector<std::uint32_t> labels;
        labels.reserve(train_groups.size());
        for (const auto& g : train_groups) labels.push_back(g.label_t1);
        for (std::size_t i = labels.size(); i > 1; --i)
            std::swap(labels[i - 1], labels[rng.integer(i)]);
        for (std::size_t i = 0; i < train_groups.size(); ++i) {
            train_groups[i].label_t1 = labels[i];
            train_groups[i].label_t2 = labels[i];
        }
    }

    train::TrainResult result = train::train(cfg, train_groups, val_groups);

    std::filesystem::path ckpt = opt.out_checkpoint;
    if (ckpt.has_parent_path())
        std::filesystem::create_directories(ckpt.parent_path());
    model::write_checkpoint(ckpt, result.best_params, cfg.clip);
    std::filesystem::path history = opt.history;
    if (history.empty()) history = ckpt.parent_path() / "history.json";
    train::write_history(history, result.history);

    TrainSummary summary;
    summary.train_videos = split.train.size();
    summary.val_videos = split.val.size();
    summary.train_groups = train_groups.size();
    summary.val_groups = val_groups.size();
    summary.epochs_run = result.history.size();
    summary.best_epoch = result.best_epoch;
    summary.best_val_acc = result.history[result.best_epoch].val_acc;
    summary.history = result.history;
    return summary;
}

eval::EvalResult run_eval(const EvalOptions& opt) {
    model::Checkpoint ckpt = model::read_checkpoint(opt.model);
    auto maps = stmap::read_map_dir(opt.maps);
    eval::EvalResult result = eval::evaluate(ckpt.params, maps, ckpt.clip);
    if (opt.report.has_parent_path())
        std::filesystem::create_directories(opt.report.parent_path());
    eval::write_report(opt.report, result, ckpt.params.config, ckpt.clip);
    if (!opt.confusion_csv.empty())
        eval::write_confusion_csv(opt.confusion_csv, result.metrics.confusion);
    return result;
}

void run_blend_demo(const BlendDemoOptions& opt) {
    stmap::SpatioTemporalMap a = stmap::read_map(opt.map_a);
    stmap::SpatioTemporalMap b = stmap::read_map(opt.map_b);

    stmap::MapGroup ga, gb;
    ga.maps.push_back(std::make_shared<const stmap::SpatioTemporalMap>(std::move(a)));
    ga.label_t1 = ga.label_t2 = ga.maps[0]->source_id;
    gb.maps.push_back(std::make_shared<const stmap::SpatioTemporalMap>(std::move(b)));
    gb.label_t1 = gb.label_t2 = gb.maps[0]->source_id;

    augment::BlendedSample mixed = augment::blend(ga, gb, opt.alpha);
    if (opt.out.has_parent_path())
        std::filesystem::create_directories(opt.out.parent_path());
    stmap::write_map(mixed.group.map(0), opt.out);
}

} // namespace rppg::pipeline

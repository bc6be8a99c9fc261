#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rppg/errors.hpp"

namespace rppg::stmap {

// Per-frame mean color of every sub-ROI of one video. Everything upstream of
// this (face detection, landmarks, pixel averaging) is out of scope; traces
// enter through the directory format read by read_trace_dir.
struct RoiTrace {
    std::uint32_t video_id = 0;
    std::uint32_t source_id = 0;
    double fps = 30.0;
    std::size_t n_rois = 0;
    std::size_t channels = 0;
    // frames[(f * n_rois + roi) * channels + ch]
    std::vector<double> frames;

    std::size_t frame_count() const {
        return n_rois * channels == 0 ? 0 : frames.size() / (n_rois * channels);
    }
    double at(std::size_t frame, std::size_t roi, std::size_t ch) const {
        return frames[(frame * n_rois + roi) * channels + ch];
    }
    void validate() const;
};

// Clip geometry: T frames per clip, stride omega, k adjacent clips per group.
// The overlap between neighbours is T - omega frames.
struct ClipSpec {
    std::size_t clip_len = 64;
    std::size_t stride = 16;
    std::size_t group_size = 4;

    std::size_t overlap() const { return clip_len - stride; }
    void validate() const;
};

// T x R x c stack of subset-averaged signals, R = 2^n - 1. Row r holds the
// mean over the sub-ROIs whose bits are set in mask r+1; ascending mask order
// makes the layout canonical.
struct SpatioTemporalMap {
    std::uint32_t video_id = 0;
    std::uint32_t source_id = 0;
    std::uint32_t clip_index = 0;  // start frame / stride
    std::size_t clip_len = 0;
    std::size_t rows = 0;
    std::size_t channels = 0;
    std::vector<double> data;  // [(t * rows + row) * channels + ch]

    double at(std::size_t t, std::size_t row, std::size_t ch) const {
        return data[(t * rows + row) * channels + ch];
    }
    double& at(std::size_t t, std::size_t row, std::size_t ch) {
        return data[(t * rows + row) * channels + ch];
    }
    bool same_shape(const SpatioTemporalMap& o) const {
        return clip_len == o.clip_len && rows == o.rows && channels == o.channels;
    }
};

// k maps from consecutive clips of one video. Unblended groups carry
// t1 == t2 == source and alpha = 1. Maps are shared because stride-1 windows
// overlap; treat them as immutable.
struct MapGroup {
    std::vector<std::shared_ptr<const SpatioTemporalMap>> maps;
    std::uint32_t label_t1 = 0;
    std::uint32_t label_t2 = 0;
    double alpha = 1.0;

    std::size_t size() const { return maps.size(); }
    const SpatioTemporalMap& map(std::size_t i) const { return *maps[i]; }
};

// Start frames {0, omega, 2*omega, ...} of every complete clip; empty when the
// trace is shorter than one clip.
std::vector<std::size_t> segment_clips(const RoiTrace& trace, const ClipSpec& spec);

// Subset-mean map of the clip starting at start. Rows are raw means, not yet
// normalized.
SpatioTemporalMap build_map(const RoiTrace& trace, std::size_t start,
                            const ClipSpec& spec);

// Per-channel min-max rescale to [0,1]; a constant channel becomes 0.5.
SpatioTemporalMap normalize_map(const SpatioTemporalMap& map);

// Sliding windows of k consecutive clips, stride 1. Fewer than k maps yield
// no groups.
std::vector<MapGroup> group_adjacent(const std::vector<SpatioTemporalMap>& maps,
                                     std::size_t k);

// STMP container, bit-exact round trip.
void write_map(const SpatioTemporalMap& map, const std::filesystem::path& path);
SpatioTemporalMap read_map(const std::filesystem::path& path);

// Trace directory: manifest.json plus one CSV per video with header
// frame,roi,ch0,... sorted by (frame, roi).
void write_trace_dir(const std::filesystem::path& dir,
                     const std::vector<RoiTrace>& traces);
std::vector<RoiTrace> read_trace_dir(const std::filesystem::path& dir);

// Map directory: one STMP file per clip named v<video>_c<clip>.stmp, read
// back sorted by (video_id, clip_index).
void write_map_dir(const std::filesystem::path& dir,
                   const std::vector<SpatioTemporalMap>& maps);
std::vector<SpatioTemporalMap> read_map_dir(const std::filesystem::path& dir);

} // namespace rppg::stmap

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rppg/nd/ops.hpp"
#include "rppg/nd/tensor.hpp"
#include "rppg/stmap.hpp"

namespace rppg::model {

// Layer widths. The defaults are working sizes, every one is overridable from
// the outside; nothing downstream assumes them.
struct ModelConfig {
    std::size_t in_channels = 3;    // map channels c
    std::size_t num_classes = 6;    // K
    std::size_t stf_channels = 16;  // filter backbone width
    std::size_t feat_channels = 16; // feature stage 1 width
    std::size_t feat_dim = 64;      // D, feature vector per clip
    std::size_t lstm_hidden = 64;   // H per direction

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// All learnable tensors. Kept as plain (untracked) tensors; a training step
// registers them on its tape via tracked().
struct ModelParams {
    ModelConfig config;

    nd::Tensor stf_k1, stf_b1;  // [B,c,3,3], [B]
    nd::Tensor stf_k2, stf_b2;  // [c,B,3,3], [c]
    nd::Tensor stf_ks, stf_bs;  // [c,c,1,1], [c] shortcut
    nd::Tensor feat_k1, feat_b1;  // [F,c,3,3], [F]
    nd::Tensor feat_k2, feat_b2;  // [D,F,3,3], [D]
    nd::LstmWeights lstm_fwd, lstm_bwd;
    nd::Tensor head_w, head_b;  // [K,2H], [K]

    // Uniform +-sqrt(1/fan_in) from the given seed.
    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    // Visits every tensor with its canonical name, in a fixed order shared by
    // the optimizer and the checkpoint format.
    void for_each(const std::function<void(const std::string&, nd::Tensor&)>& fn);
    void for_each(
        const std::function<void(const std::string&, const nd::Tensor&)>& fn) const;

    // Copy whose tensors are leaves of the active tape.
    ModelParams tracked() const;
};

// STFNet outputs, one filtered signal per clip, same layout as the inputs.
struct FilteredSignalGroup {
    std::vector<nd::Tensor> signals;  // each [c, T, R]
};

// Channels-first view of a map for the conv stack.
nd::Tensor map_to_tensor(const stmap::SpatioTemporalMap& map);

// Residual filter: conv(c->B) tanh conv(B->c) plus a 1x1 shortcut, elementwise
// added, shape preserved. Expects normalized maps.
FilteredSignalGroup stfnet_forward(const stmap::MapGroup& group,
                                   const ModelParams& params);

// Per clip: two conv+tanh+2x2 meanpool stages, spatial mean to a D vector;
// the k vectors run through one forward and one backward LSTM; each step's
// [h_fwd; h_bwd] goes through the shared linear head to K logits.
std::vector<nd::Tensor> stinet_forward(const FilteredSignalGroup& filtered,
                                       const ModelParams& params);

// Mean negative log-softmax of the target class over the k steps.
nd::Tensor clip_ce_loss(const std::vector<nd::Tensor>& logits, std::size_t target);

// 1 minus the mean adjacent-pair correlation of the overlapping windows,
// where a pair's score is the mean guarded Pearson r over (row, channel)
// series. Ranges over [0, 2].
nd::Tensor adjacency_loss(const FilteredSignalGroup& filtered,
                          const stmap::ClipSpec& spec);

// alpha*ce(t1) + (1-alpha)*ce(t2) + beta*adjacency; collapses to
// ce(t1) + beta*adjacency when t1 == t2, bit-exactly.
nd::Tensor total_loss(const std::vector<nd::Tensor>& logits, std::size_t t1,
                      std::size_t t2, double alpha, const nd::Tensor& adjacency,
                      double beta);

// Classification probability of a group: mean of the k per-step softmaxes.
std::vector<double> group_probability(const std::vector<nd::Tensor>& logits);

// Checkpoint container, bit-exact round trip. Carries the clip geometry so
// evaluation can regroup maps consistently.
struct Checkpoint {
    ModelParams params;
    stmap::ClipSpec clip;
};

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const stmap::ClipSpec& clip);
Checkpoint read_checkpoint(const std::filesystem::path& path);

} // namespace rppg::model

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rppg/model.hpp"
#include "rppg/stmap.hpp"

namespace rppg::eval {

struct VideoPrediction {
    std::uint32_t video_id = 0;
    std::uint32_t true_source = 0;
    std::vector<std::vector<double>> group_probs;
    std::vector<double> aggregate;  // elementwise sum over groups
    std::size_t predicted = 0;      // argmax, ties to the lowest index
};

struct SkippedVideo {
    std::uint32_t video_id = 0;
    std::uint32_t true_source = 0;
    std::string reason;
};

// row = true class, column = predicted
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;  // [row * classes + col]

    std::size_t at(std::size_t row, std::size_t col) const {
        return counts[row * classes + col];
    }
    std::size_t total() const;
};

std::size_t argmax_lowest(const std::vector<double>& v);

// Summation and argmax over already-computed group probabilities.
VideoPrediction aggregate_prediction(std::uint32_t video_id,
                                     std::uint32_t true_source,
                                     std::vector<std::vector<double>> group_probs);

// One video's maps (raw, ascending clip_index) -> normalize, group, run the
// model, aggregate. Throws on a video that yields no group; evaluate() turns
// that into a skip record instead.
VideoPrediction predict_video(const model::ModelParams& params,
                              const std::vector<stmap::SpatioTemporalMap>& maps,
                              const stmap::ClipSpec& spec);

struct Metrics {
    ConfusionMatrix confusion;
    std::vector<double> per_class;  // diagonal / row-sum; NaN for empty classes
    double average_accuracy = 0.0;  // mean over non-empty classes
};

Metrics confusion_and_metrics(const std::vector<VideoPrediction>& predictions,
                              std::size_t classes);

struct EvalResult {
    std::vector<VideoPrediction> predictions;
    std::vector<SkippedVideo> skipped;
    Metrics metrics;
    double clip_accuracy = 0.0;  // per-group argmax vs true source
    std::size_t classes = 0;
};

// Whole-dataset evaluation: bucket raw maps by video, predict each, tally.
EvalResult evaluate(const model::ModelParams& params,
                    const std::vector<stmap::SpatioTemporalMap>& maps,
                    const stmap::ClipSpec& spec);

void write_report(const std::filesystem::path& path, const EvalResult& result,
                  const model::ModelConfig& config, const stmap::ClipSpec& spec);
void write_confusion_csv(const std::filesystem::path& path,
                         const ConfusionMatrix& confusion);

} // namespace rppg::eval

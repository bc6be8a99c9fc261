#include "rppg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "rppg/errors.hpp"

namespace rppg::eval {

std::size_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t argmax_lowest(const std::vector<double>& v) {
    if (v.empty()) throw ContractError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

VideoPrediction aggregate_prediction(std::uint32_t video_id,
                                     std::uint32_t true_source,
                                     std::vector<std::vector<double>> group_probs) {
    if (group_probs.empty())
        throw ContractError("video " + std::to_string(video_id) +
                            " yields no groups");
    const std::size_t classes = group_probs[0].size();
    VideoPrediction pred;
    pred.video_id = video_id;
    pred.true_source = true_source;
    pred.aggregate.assign(classes, 0.0);
    for (const auto& p : group_probs) {
        if (p.size() != classes)
            throw ContractError("inconsistent probability vector lengths for video " +
                                std::to_string(video_id));
        for (std::size_t i = 0; i < classes; ++i) pred.aggregate[i] += p[i];
    }
    pred.group_probs = std::move(group_probs);
    pred.predicted = argmax_lowest(pred.aggregate);
    return pred;
}

VideoPrediction predict_video(const model::ModelParams& params,
                              const std::vector<stmap::SpatioTemporalMap>& maps,
                              const stmap::ClipSpec& spec) {
    if (maps.empty()) throw ContractError("video yields no groups: no maps");
    std::vector<stmap::SpatioTemporalMap> normalized;
    normalized.reserve(maps.size());
    for (const auto& m : maps) normalized.push_back(stmap::normalize_map(m));
    auto groups = stmap::group_adjacent(normalized, spec.group_size);
    if (groups.empty())
        throw ContractError("video " + std::to_string(maps[0].video_id) +
                            " yields no groups: " + std::to_string(maps.size()) +
                            " clips for group size " +
                            std::to_string(spec.group_size));

    std::vector<std::vector<double>> probs;
    probs.reserve(groups.size());
    for (const auto& g : groups) {
        auto filtered = model::stfnet_forward(g, params);
        auto logits = model::stinet_forward(filtered, params);
        probs.push_back(model::group_probability(logits));
    }
    return aggregate_prediction(maps[0].video_id, maps[0].source_id,
                                std::move(probs));
}

Metrics confusion_and_metrics(const std::vector<VideoPrediction>& predictions,
                              std::size_t classes) {
    if (predictions.empty()) throw ContractError("metrics over zero predictions");
    Metrics m;
    m.confusion.classes = classes;
    m.confusion.counts.assign(classes * classes, 0);
    for (const auto& p : predictions) {
        if (p.true_source >= classes || p.predicted >= classes)
            throw ContractError("prediction outside the " + std::to_string(classes) +
                                "-class range");
        ++m.confusion.counts[p.true_source * classes + p.predicted];
    }
    m.per_class.assign(classes, std::nan(""));
    double sum = 0.0;
    std::size_t populated = 0;
    for (std::size_t r = 0; r < classes; ++r) {
        std::size_t row_total = 0;
        for (std::size_t c = 0; c < classes; ++c) row_total += m.confusion.at(r, c);
        if (row_total == 0) continue;
        m.per_class[r] = static_cast<double>(m.confusion.at(r, r)) /
                         static_cast<double>(row_total);
        sum += m.per_class[r];
        ++populated;
    }
    m.average_accuracy = sum / static_cast<double>(populated);
    return m;
}

EvalResult evaluate(const model::ModelParams& params,
                    const std::vector<stmap::SpatioTemporalMap>& maps,
                    const stmap::ClipSpec& spec) {
    if (maps.empty()) throw ContractError("nothing to evaluate: no maps");

    std::map<std::uint32_t, std::vector<stmap::SpatioTemporalMap>> by_video;
    for (const auto& m : maps) by_video[m.video_id].push_back(m);

    EvalResult result;
    result.classes = params.config.num_classes;
    std::size_t clip_correct = 0, clip_total = 0;

    for (auto& [vid, vmaps] : by_video) {
        std::sort(vmaps.begin(), vmaps.end(),
                  [](const auto& a, const auto& b) {
                      return a.clip_index < b.clip_index;
                  });
        if (vmaps.size() < spec.group_size) {
            result.skipped.push_back(
                {vid, vmaps[0].source_id,
                 std::to_string(vmaps.size()) + " clips, need " +
                     std::to_string(spec.group_size) + " per group"});
            continue;
        }
        VideoPrediction pred = predict_video(params, vmaps, spec);
        for (const auto& p : pred.group_probs) {
            if (argmax_lowest(p) == pred.true_source) ++clip_correct;
            ++clip_total;
        }
        result.predictions.push_back(std::move(pred));
    }

    if (result.predictions.empty())
        throw ContractError("every video was skipped; nothing to evaluate");
    result.metrics = confusion_and_metrics(result.predictions, result.classes);
    result.clip_accuracy =
        static_cast<double>(clip_correct) / static_cast<double>(clip_total);
    return result;
}

void write_report(const std::filesystem::path& path, const EvalResult& result,
                  const model::ModelConfig& config, const stmap::ClipSpec& spec) {
    nlohmann::ordered_json report;
    report["note"] =
        "group-level probabilities are summed as-is; overlapping windows "
        "reweight interior clips uniformly, which cannot change the argmax";
    report["config"] = {
        {"in_channels", config.in_channels},
        {"num_classes", config.num_classes},
        {"stf_channels", config.stf_channels},
        {"feat_channels", config.feat_channels},
        {"feat_dim", config.feat_dim},
        {"lstm_hidden", config.lstm_hidden},
        {"clip_len", spec.clip_len},
        {"stride", spec.stride},
        {"group_size", spec.group_size},
    };

    nlohmann::ordered_json preds = nlohmann::ordered_json::array();
    for (const auto& p : result.predictions)
        preds.push_back({{"video_id", p.video_id},
                         {"true_source", p.true_source},
                         {"predicted", p.predicted},
                         {"groups", p.group_probs.size()},
                         {"aggregate", p.aggregate}});
    report["videos"] = std::move(preds);

    nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
    for (const auto& s : result.skipped)
        skipped.push_back({{"video_id", s.video_id},
                           {"true_source", s.true_source},
                           {"reason", s.reason}});
    report["skipped"] = std::move(skipped);

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < result.classes; ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t c = 0; c < result.classes; ++c)
            row.push_back(result.metrics.confusion.at(r, c));
        rows.push_back(std::move(row));
    }
    report["confusion"] = std::move(rows);

    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (double v : result.metrics.per_class) {
        if (std::isnan(v))
            per_class.push_back(nullptr);
        else
            per_class.push_back(v);
    }
    report["per_class_accuracy"] = std::move(per_class);
    report["average_accuracy"] = result.metrics.average_accuracy;
    report["clip_accuracy"] = result.clip_accuracy;

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << report.dump(2) << '\n';
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

void write_confusion_csv(const std::filesystem::path& path,
                         const ConfusionMatrix& confusion) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t r = 0; r < confusion.classes; ++r) {
        for (std::size_t c = 0; c < confusion.classes; ++c) {
            if (c) os << ',';
            os << confusion.at(r, c);
        }
        os << '\n';
    }
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

} // namespace rppg::eval

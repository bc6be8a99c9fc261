#include "rppg/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rppg/binio.hpp"
#include "rppg/rng.hpp"

namespace rppg::model {

using nd::Tensor;

void ModelConfig::validate() const {
    if (in_channels < 1) throw ConfigError("model needs at least one input channel");
    if (num_classes < 2)
        throw ConfigError("model needs at least 2 classes, got " +
                          std::to_string(num_classes));
    if (stf_channels < 1 || feat_channels < 1 || feat_dim < 1 || lstm_hidden < 1)
        throw ConfigError("model layer widths must be positive");
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t c = config.in_channels, b = config.stf_channels,
                      f = config.feat_channels, d = config.feat_dim,
                      h = config.lstm_hidden, k = config.num_classes;

    ModelParams p;
    p.config = config;
    p.stf_k1 = Tensor::zeros({b, c, 3, 3});
    p.stf_b1 = Tensor::zeros({b});
    p.stf_k2 = Tensor::zeros({c, b, 3, 3});
    p.stf_b2 = Tensor::zeros({c});
    p.stf_ks = Tensor::zeros({c, c, 1, 1});
    p.stf_bs = Tensor::zeros({c});
    p.feat_k1 = Tensor::zeros({f, c, 3, 3});
    p.feat_b1 = Tensor::zeros({f});
    p.feat_k2 = Tensor::zeros({d, f, 3, 3});
    p.feat_b2 = Tensor::zeros({d});
    p.lstm_fwd = {Tensor::zeros({4 * h, d}), Tensor::zeros({4 * h, h}),
                  Tensor::zeros({4 * h})};
    p.lstm_bwd = {Tensor::zeros({4 * h, d}), Tensor::zeros({4 * h, h}),
                  Tensor::zeros({4 * h})};
    p.head_w = Tensor::zeros({k, 2 * h});
    p.head_b = Tensor::zeros({k});

    // fan_in per tensor: kernels see Cin*kh*kw, LSTM blocks their input width,
    // biases the same fan as their layer.
    std::map<std::string, std::size_t> fan = {
        {"stf_k1", c * 9},   {"stf_b1", c * 9},   {"stf_k2", b * 9},
        {"stf_b2", b * 9},   {"stf_ks", c},       {"stf_bs", c},
        {"feat_k1", c * 9},  {"feat_b1", c * 9},  {"feat_k2", f * 9},
        {"feat_b2", f * 9},  {"lstm_fwd_wx", d},  {"lstm_fwd_wh", h},
        {"lstm_fwd_b", h},   {"lstm_bwd_wx", d},  {"lstm_bwd_wh", h},
        {"lstm_bwd_b", h},   {"head_w", 2 * h},   {"head_b", 2 * h},
    };

    Rng rng(seed);
    p.for_each([&](const std::string& name, Tensor& t) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan.at(name)));
        std::vector<double> v(t.size());
        for (double& x : v) x = rng.uniform(-bound, bound);
        t = Tensor::from(t.shape(), std::move(v));
    });
    return p;
}

void ModelParams::for_each(
    const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("stf_k1", stf_k1);
    fn("stf_b1", stf_b1);
    fn("stf_k2", stf_k2);
    fn("stf_b2", stf_b2);
    fn("stf_ks", stf_ks);
    fn("stf_bs", stf_bs);
    fn("feat_k1", feat_k1);
    fn("feat_b1", feat_b1);
    fn("feat_k2", feat_k2);
    fn("feat_b2", feat_b2);
    fn("lstm_fwd_wx", lstm_fwd.wx);
    fn("lstm_fwd_wh", lstm_fwd.wh);
    fn("lstm_fwd_b", lstm_fwd.b);
    fn("lstm_bwd_wx", lstm_bwd.wx);
    fn("lstm_bwd_wh", lstm_bwd.wh);
    fn("lstm_bwd_b", lstm_bwd.b);
    fn("head_w", head_w);
    fn("head_b", head_b);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, Tensor& t) {
            fn(name, static_cast<const Tensor&>(t));
        });
}

ModelParams ModelParams::tracked() const {
    ModelParams copy = *this;
    copy.for_each([&](const std::string&, Tensor& t) { t = nd::track(t); });
    return copy;
}

nd::Tensor map_to_tensor(const stmap::SpatioTemporalMap& map) {
    const std::size_t t = map.clip_len, r = map.rows, c = map.channels;
    std::vector<double> v(c * t * r);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t row = 0; row < r; ++row)
                v[(ch * t + ti) * r + row] = map.at(ti, row, ch);
    return Tensor::from({c, t, r}, std::move(v));
}

namespace {

Tensor stfnet_one(const Tensor& x, const ModelParams& p) {
    Tensor mid = nd::tanh(nd::conv2d(x, p.stf_k1, p.stf_b1, nd::Padding::same));
    Tensor backbone = nd::conv2d(mid, p.stf_k2, p.stf_b2, nd::Padding::same);
    Tensor shortcut = nd::conv2d(x, p.stf_ks, p.stf_bs, nd::Padding::same);
    return nd::add(backbone, shortcut);
}

} // namespace

FilteredSignalGroup stfnet_forward(const stmap::MapGroup& group,
                                   const ModelParams& params) {
    if (group.maps.empty()) throw ContractError("stfnet_forward on an empty group");
    FilteredSignalGroup out;
    out.signals.reserve(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
        const auto& m = group.map(i);
        if (m.channels != params.config.in_channels)
            throw ContractError("map has " + std::to_string(m.channels) +
                                " channels but the model expects " +
                                std::to_string(params.config.in_channels));
        out.signals.push_back(stfnet_one(map_to_tensor(m), params));
    }
    return out;
}

std::vector<Tensor> stinet_forward(const FilteredSignalGroup& filtered,
                                   const ModelParams& params) {
    const std::size_t k = filtered.signals.size();
    if (k < 2)
        throw ContractError("stinet_forward needs k >= 2 clips, got " +
                            std::to_string(k));
    const std::size_t h = params.config.lstm_hidden;

    std::vector<Tensor> feats;
    feats.reserve(k);
    for (const Tensor& sig : filtered.signals) {
        Tensor a = nd::tanh(
            nd::conv2d(sig, params.feat_k1, params.feat_b1, nd::Padding::same));
        a = nd::meanpool2(a);
        a = nd::tanh(
            nd::conv2d(a, params.feat_k2, params.feat_b2, nd::Padding::same));
        a = nd::meanpool2(a);
        feats.push_back(nd::spatial_mean(a));
    }

    std::vector<Tensor> h_fwd(k), h_bwd(k);
    Tensor hs = Tensor::zeros({h}), cs = Tensor::zeros({h});
    for (std::size_t i = 0; i < k; ++i) {
        auto [hn, cn] = nd::lstm_cell(feats[i], hs, cs, params.lstm_fwd);
        h_fwd[i] = hn;
        hs = hn;
        cs = cn;
    }
    hs = Tensor::zeros({h});
    cs = Tensor::zeros({h});
    for (std::size_t i = k; i-- > 0;) {
        auto [hn, cn] = nd::lstm_cell(feats[i], hs, cs, params.lstm_bwd);
        h_bwd[i] = hn;
        hs = hn;
        cs = cn;
    }

    std::vector<Tensor> logits;
    logits.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        logits.push_back(nd::add(
            nd::matvec(params.head_w, nd::concat(h_fwd[i], h_bwd[i])),
            params.head_b));
    return logits;
}

Tensor clip_ce_loss(const std::vector<Tensor>& logits, std::size_t target) {
    if (logits.empty()) throw ContractError("clip_ce_loss on no logits");
    const std::size_t k = logits.size();
    const std::size_t classes = logits[0].size();
    if (target >= classes)
        throw ContractError("target class " + std::to_string(target) +
                            " outside [0, " + std::to_string(classes) + ")");
    Tensor acc = Tensor::scalar(0.0);
    for (const Tensor& x : logits)
        acc = nd::add(acc, nd::pick(nd::softmax_log(x), target));
    return nd::scale(acc, -1.0 / static_cast<double>(k));
}

Tensor adjacency_loss(const FilteredSignalGroup& filtered,
                      const stmap::ClipSpec& spec) {
    const std::size_t k = filtered.signals.size();
    if (k < 2) throw ContractError("adjacency_loss needs k >= 2 clips");
    spec.validate();
    const std::size_t t = filtered.signals[0].shape()[1];
    if (spec.clip_len != t)
        throw ContractError("clip spec length " + std::to_string(spec.clip_len) +
                            " does not match filtered signals of length " +
                            std::to_string(t));
    const std::size_t ov = spec.overlap();

    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        Tensor tail = nd::time_slice(filtered.signals[i], spec.stride, ov);
        Tensor head = nd::time_slice(filtered.signals[i + 1], 0, ov);
        acc = nd::add(acc, nd::pearson_mean(tail, head, 1e-8));
    }
    // 1 - mean pair score
    return nd::offset(nd::scale(acc, -1.0 / static_cast<double>(k - 1)), 1.0);
}

Tensor total_loss(const std::vector<Tensor>& logits, std::size_t t1,
                  std::size_t t2, double alpha, const Tensor& adjacency,
                  double beta) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ContractError("alpha " + std::to_string(alpha) + " outside [0,1]");
    if (beta < 0.0) throw ContractError("beta must be >= 0");
    Tensor weighted_adj = nd::scale(adjacency, beta);
    if (t1 == t2 || alpha == 1.0)
        return nd::add(clip_ce_loss(logits, t1), weighted_adj);
    if (alpha == 0.0) return nd::add(clip_ce_loss(logits, t2), weighted_adj);
    Tensor ce = nd::add(nd::scale(clip_ce_loss(logits, t1), alpha),
                        nd::scale(clip_ce_loss(logits, t2), 1.0 - alpha));
    return nd::add(ce, weighted_adj);
}

std::vector<double> group_probability(const std::vector<Tensor>& logits) {
    if (logits.empty()) throw ContractError("group_probability on no logits");
    const std::size_t classes = logits[0].size();
    std::vector<double> mean(classes, 0.0);
    for (const Tensor& x : logits) {
        Tensor p = nd::softmax(x);
        for (std::size_t i = 0; i < classes; ++i) mean[i] += p[i];
    }
    for (double& v : mean) v /= static_cast<double>(logits.size());
    return mean;
}

namespace {
constexpr char kCkptMagic[4] = {'R', 'P', 'P', 'G'};
constexpr std::uint32_t kCkptVersion = 1;
} // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const ModelParams& params, const stmap::ClipSpec& clip) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::Writer w(os, path.string());
    w.bytes(kCkptMagic, 4);
    w.u32(kCkptVersion);

    nlohmann::ordered_json config = {
        {"in_channels", params.config.in_channels},
        {"num_classes", params.config.num_classes},
        {"stf_channels", params.config.stf_channels},
        {"feat_channels", params.config.feat_channels},
        {"feat_dim", params.config.feat_dim},
        {"lstm_hidden", params.config.lstm_hidden},
        {"clip_len", clip.clip_len},
        {"stride", clip.stride},
        {"group_size", clip.group_size},
    };
    const std::string cfg = config.dump();
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.bytes(cfg.data(), cfg.size());

    params.for_each([&](const std::string& name, const Tensor& t) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        w.f64_array(t.values().data(), t.size());
    });
    os.flush();
    if (!os) throw IoError("flush failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string() + " for reading");
    binio::Reader r(is, path.string());
    r.magic(kCkptMagic, "model checkpoint");
    const std::uint32_t version = r.u32("version");
    if (version != kCkptVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version) + " at offset 4");

    const std::uint32_t cfg_len = r.u32("config length");
    if (cfg_len > (1u << 20))
        throw FormatError(path.string() + ": implausible config block of " +
                          std::to_string(cfg_len) + " bytes");
    std::string cfg_text(cfg_len, '\0');
    r.bytes(cfg_text.data(), cfg_len, "config block");

    Checkpoint ckpt;
    try {
        auto cfg = nlohmann::json::parse(cfg_text);
        ckpt.params.config.in_channels = cfg.at("in_channels").get<std::size_t>();
        ckpt.params.config.num_classes = cfg.at("num_classes").get<std::size_t>();
        ckpt.params.config.stf_channels = cfg.at("stf_channels").get<std::size_t>();
        ckpt.params.config.feat_channels =
            cfg.at("feat_channels").get<std::size_t>();
        ckpt.params.config.feat_dim = cfg.at("feat_dim").get<std::size_t>();
        ckpt.params.config.lstm_hidden = cfg.at("lstm_hidden").get<std::size_t>();
        ckpt.clip.clip_len = cfg.at("clip_len").get<std::size_t>();
        ckpt.clip.stride = cfg.at("stride").get<std::size_t>();
        ckpt.clip.group_size = cfg.at("group_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": config block: " + e.what());
    }
    ckpt.params.config.validate();
    ckpt.clip.validate();

    // Template with the shapes the config dictates; records must match.
    ModelParams expect = ModelParams::init(ckpt.params.config, 0);
    std::map<std::string, Tensor*> remaining;
    expect.for_each(
        [&](const std::string& name, Tensor& t) { remaining[name] = &t; });

    while (!r.at_eof()) {
        const std::uint16_t name_len = r.u16("parameter name length");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len, "parameter name");
        auto it = remaining.find(name);
        if (it == remaining.end())
            throw FormatError(path.string() + ": unexpected or repeated parameter '" +
                              name + "'");
        const std::uint32_t rank = r.u32("parameter rank");
        if (rank > 8)
            throw FormatError(path.string() + ": implausible rank " +
                              std::to_string(rank) + " for '" + name + "'");
        nd::Shape shape(rank);
        for (auto& d : shape) d = r.u32("parameter dimension");
        if (shape != it->second->shape())
            throw FormatError(path.string() + ": parameter '" + name +
                              "' has shape " + nd::shape_str(shape) +
                              ", config implies " +
                              nd::shape_str(it->second->shape()));
        std::vector<double> vals(nd::shape_size(shape));
        r.f64_array(vals.data(), vals.size(), "parameter values");
        *it->second = Tensor::from(shape, std::move(vals));
        remaining.erase(it);
    }
    if (!remaining.empty())
        throw FormatError(path.string() + ": missing parameter '" +
                          remaining.begin()->first + "'");
    ckpt.params = std::move(expect);
    return ckpt;
}

} // namespace rppg::model

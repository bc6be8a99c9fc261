#include "rppg/augment.hpp"

#include <algorithm>

namespace rppg::augment {

BlendMode parse_blend_mode(const std::string& s) {
    if (s == "none") return BlendMode::none;
    if (s == "intra") return BlendMode::intra;
    if (s == "inter") return BlendMode::inter;
    throw ConfigError("unknown blend mode '" + s + "', expected none|intra|inter");
}

const char* to_string(BlendMode mode) {
    switch (mode) {
        case BlendMode::none: return "none";
        case BlendMode::intra: return "intra";
        case BlendMode::inter: return "inter";
    }
    return "?";
}

BlendedSample blend(const stmap::MapGroup& g1, const stmap::MapGroup& g2,
                    double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ContractError("blend coefficient " + std::to_string(alpha) +
                            " outside [0,1]");
    if (g1.size() != g2.size())
        throw ContractError("blending groups of " + std::to_string(g1.size()) +
                            " and " + std::to_string(g2.size()) + " maps");
    for (std::size_t i = 0; i < g1.size(); ++i)
        if (!g1.map(i).same_shape(g2.map(i)))
            throw ContractError("blending maps of different shapes at clip " +
                                std::to_string(i));

    BlendedSample out;
    out.t1 = g1.label_t1;
    out.t2 = g2.label_t1;
    out.alpha = alpha;
    out.group.label_t1 = out.t1;
    out.group.label_t2 = out.t2;
    out.group.alpha = alpha;
    out.group.maps.reserve(g1.size());

    for (std::size_t i = 0; i < g1.size(); ++i) {
        if (alpha == 1.0) {
            out.group.maps.push_back(g1.maps[i]);
            continue;
        }
        if (alpha == 0.0) {
            out.group.maps.push_back(g2.maps[i]);
            continue;
        }
        // 1-alpha is a rounded value; re-deriving the first weight from it
        // gives the exact same weight pair to blend(g2, g1, 1-alpha), which
        // makes the swap symmetry hold bit-exactly for every alpha, not just
        // the ones whose complement happens to round-trip.
        const double w2 = 1.0 - alpha;
        const double w1 = 1.0 - w2;
        auto m = std::make_shared<stmap::SpatioTemporalMap>(g1.map(i));
        const auto& b = g2.map(i).data;
        for (std::size_t j = 0; j < m->data.size(); ++j) {
            double x = m->data[j], y = b[j];
            double v = w1 * x + w2 * y;
            // rounding can push the mix a final bit outside the parent
            // interval; the convexity contract wants it inside
            v = std::clamp(v, std::min(x, y), std::max(x, y));
            m->data[j] = v;
        }
        out.group.maps.push_back(std::move(m));
    }
    return out;
}

PairSample sample_pair(const std::vector<stmap::MapGroup>& dataset,
                       std::size_t anchor, BlendMode mode, Rng& rng) {
    if (anchor >= dataset.size())
        throw ContractError("anchor index " + std::to_string(anchor) +
                            " outside dataset of " +
                            std::to_string(dataset.size()) + " groups");
    PairSample s;
    if (mode == BlendMode::none) {
        s.partner = anchor;
        s.alpha = 1.0;
        return s;
    }
    const std::uint32_t source = dataset[anchor].label_t1;
    std::vector<std::size_t> pool;
    pool.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        bool same = dataset[i].label_t1 == source;
        if (mode == BlendMode::intra ? same : !same) pool.push_back(i);
    }
    if (pool.empty())
        throw ConfigError(
            "inter-source blending needs at least two sources in the dataset");
    s.partner = pool[rng.integer(pool.size())];
    s.alpha = rng.uniform();
    return s;
}

} // namespace rppg::augment

#pragma once

#include <string>

#include "rppg/rng.hpp"
#include "rppg/stmap.hpp"

namespace rppg::augment {

enum class BlendMode { none, intra, inter };

BlendMode parse_blend_mode(const std::string& s);
const char* to_string(BlendMode mode);

// Convex mix of two groups with the anchor's and partner's labels attached.
// The invariant: every blended value lies within the interval spanned by its
// two parents; intra-source blends have t1 == t2.
struct BlendedSample {
    stmap::MapGroup group;
    std::uint32_t t1 = 0;
    std::uint32_t t2 = 0;
    double alpha = 1.0;
};

// Elementwise alpha*g1 + (1-alpha)*g2 over all k maps. The endpoints alpha=1
// and alpha=0 reproduce the respective parent bit for bit.
BlendedSample blend(const stmap::MapGroup& g1, const stmap::MapGroup& g2,
                    double alpha);

// Partner choice for one anchor, by dataset index, plus the blend coefficient.
// The partner is drawn first, then alpha, so streams stay reproducible.
struct PairSample {
    std::size_t partner = 0;
    double alpha = 1.0;
};

// mode none: the anchor itself with alpha 1. intra: uniform over groups with
// the anchor's source. inter: uniform over groups of any other source, which
// requires a second source to exist.
PairSample sample_pair(const std::vector<stmap::MapGroup>& dataset,
                       std::size_t anchor, BlendMode mode, Rng& rng);

} // namespace rppg::augment

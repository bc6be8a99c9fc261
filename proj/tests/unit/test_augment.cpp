#include <doctest.h>

#include <cmath>
#include <memory>

#include "rppg/augment.hpp"
#include "rppg/rng.hpp"

using namespace rppg;
using augment::BlendMode;

namespace {

stmap::MapGroup random_group(std::uint32_t source, std::size_t k,
                             std::uint64_t seed) {
    Rng rng(seed);
    stmap::MapGroup g;
    g.label_t1 = g.label_t2 = source;
    for (std::size_t i = 0; i < k; ++i) {
        auto m = std::make_shared<stmap::SpatioTemporalMap>();
        m->video_id = source * 100;
        m->source_id = source;
        m->clip_index = static_cast<std::uint32_t>(i);
        m->clip_len = 6;
        m->rows = 3;
        m->channels = 2;
        m->data.resize(6 * 3 * 2);
        for (double& v : m->data) v = rng.uniform(0.0, 1.0);
        g.maps.push_back(std::move(m));
    }
    return g;
}

stmap::MapGroup constant_group(std::uint32_t source, double value) {
    auto g = random_group(source, 2, 1);
    for (auto& mp : g.maps) {
        auto m = std::make_shared<stmap::SpatioTemporalMap>(*mp);
        for (double& v : m->data) v = value;
        mp = m;
    }
    return g;
}

} // namespace

TEST_CASE("blend mode names round trip") {
    CHECK(augment::parse_blend_mode("none") == BlendMode::none);
    CHECK(augment::parse_blend_mode("intra") == BlendMode::intra);
    CHECK(augment::parse_blend_mode("inter") == BlendMode::inter);
    CHECK_THROWS_AS(augment::parse_blend_mode("both"), ConfigError);
    CHECK(std::string(to_string(BlendMode::inter)) == "inter");
}

TEST_CASE("blend endpoints reproduce the parents exactly") {
    auto g1 = random_group(0, 3, 2);
    auto g2 = random_group(1, 3, 3);

    auto at1 = augment::blend(g1, g2, 1.0);
    CHECK(at1.t1 == 0);
    CHECK(at1.t2 == 1);
    for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(at1.group.maps[i] == g1.maps[i]);  // shared, not copied
        CHECK(at1.group.map(i).data == g1.map(i).data);
    }

    auto at0 = augment::blend(g1, g2, 0.0);
    for (std::size_t i = 0; i < g2.size(); ++i)
        CHECK(at0.group.maps[i] == g2.maps[i]);
}

TEST_CASE("blend midpoint of constant groups") {
    auto zeros = constant_group(0, 0.0);
    auto ones = constant_group(1, 1.0);
    auto mid = augment::blend(zeros, ones, 0.5);
    for (std::size_t i = 0; i < mid.group.size(); ++i)
        for (double v : mid.group.map(i).data) CHECK(v == 0.5);
}

TEST_CASE("blend matches the elementwise oracle") {
    auto g1 = random_group(0, 4, 4);
    auto g2 = random_group(2, 4, 5);
    const double alpha = 0.3;
    auto out = augment::blend(g1, g2, alpha);
    CHECK(out.t1 == 0);
    CHECK(out.t2 == 2);
    CHECK(out.alpha == alpha);
    for (std::size_t i = 0; i < g1.size(); ++i) {
        const auto& a = g1.map(i).data;
        const auto& b = g2.map(i).data;
        const auto& o = out.group.map(i).data;
        for (std::size_t j = 0; j < a.size(); ++j)
            CHECK(o[j] == doctest::Approx(alpha * a[j] + (1 - alpha) * b[j])
                              .epsilon(1e-15));
    }
}

TEST_CASE("blend convexity for random coefficients") {
    auto g1 = random_group(0, 2, 6);
    auto g2 = random_group(1, 2, 7);
    Rng rng(8);
    for (int it = 0; it < 200; ++it) {
        const double alpha = rng.uniform();
        auto out = augment::blend(g1, g2, alpha);
        for (std::size_t i = 0; i < g1.size(); ++i) {
            const auto& a = g1.map(i).data;
            const auto& b = g2.map(i).data;
            const auto& o = out.group.map(i).data;
            for (std::size_t j = 0; j < a.size(); ++j) {
                CHECK(o[j] >= std::min(a[j], b[j]));
                CHECK(o[j] <= std::max(a[j], b[j]));
            }
        }
    }
}

TEST_CASE("blend symmetry") {
    auto g1 = random_group(0, 2, 9);
    auto g2 = random_group(1, 2, 10);
    Rng rng(11);
    // the canonicalized weights must make the swapped call bit-exact even
    // when 1-alpha does not round-trip (0.3 famously does not)
    std::vector<double> alphas{0.3, 0.7, 1e-300, 1.0 - 1e-16};
    for (int it = 0; it < 50; ++it) alphas.push_back(rng.uniform());
    for (int it = 0; it < 50; ++it)
        alphas.push_back(static_cast<double>(rng.integer(1025)) / 1024.0);
    for (double alpha : alphas) {
        auto ab = augment::blend(g1, g2, alpha);
        auto ba = augment::blend(g2, g1, 1.0 - alpha);
        for (std::size_t i = 0; i < g1.size(); ++i)
            CHECK(ab.group.map(i).data == ba.group.map(i).data);
    }
}

TEST_CASE("blend rejects bad inputs") {
    auto g1 = random_group(0, 2, 12);
    auto g2 = random_group(1, 3, 13);
    CHECK_THROWS_AS(augment::blend(g1, g2, 0.5), ContractError);  // k mismatch
    auto g3 = random_group(1, 2, 14);
    CHECK_THROWS_AS(augment::blend(g1, g3, 1.5), ContractError);
    CHECK_THROWS_AS(augment::blend(g1, g3, -0.1), ContractError);

    auto g4 = random_group(1, 2, 15);
    auto small = std::make_shared<stmap::SpatioTemporalMap>(*g4.maps[0]);
    small->rows = 1;
    small->data.resize(6 * 1 * 2);
    g4.maps[0] = small;
    CHECK_THROWS_AS(augment::blend(g1, g4, 0.5), ContractError);
}

TEST_CASE("sample_pair modes") {
    std::vector<stmap::MapGroup> dataset;
    for (std::uint32_t s = 0; s < 3; ++s)
        for (int j = 0; j < 5; ++j)
            dataset.push_back(random_group(s, 2, 16 + s * 5 + j));

    Rng rng(17);
    SUBCASE("none returns the anchor at alpha one") {
        for (std::size_t a = 0; a < dataset.size(); ++a) {
            auto p = augment::sample_pair(dataset, a, BlendMode::none, rng);
            CHECK(p.partner == a);
            CHECK(p.alpha == 1.0);
        }
    }
    SUBCASE("intra partners share the anchor's source") {
        for (int it = 0; it < 300; ++it) {
            const std::size_t a = rng.integer(dataset.size());
            auto p = augment::sample_pair(dataset, a, BlendMode::intra, rng);
            CHECK(dataset[p.partner].label_t1 == dataset[a].label_t1);
            CHECK(p.alpha >= 0.0);
            CHECK(p.alpha <= 1.0);
        }
    }
    SUBCASE("inter partners never share the anchor's source") {
        for (int it = 0; it < 300; ++it) {
            const std::size_t a = rng.integer(dataset.size());
            auto p = augment::sample_pair(dataset, a, BlendMode::inter, rng);
            CHECK(dataset[p.partner].label_t1 != dataset[a].label_t1);
        }
    }
}

TEST_CASE("inter blending needs a second source") {
    std::vector<stmap::MapGroup> dataset;
    for (int j = 0; j < 4; ++j) dataset.push_back(random_group(2, 2, 30 + j));
    Rng rng(18);
    CHECK_THROWS_AS(augment::sample_pair(dataset, 0, BlendMode::inter, rng),
                    ConfigError);
    // intra still works
    auto p = augment::sample_pair(dataset, 0, BlendMode::intra, rng);
    CHECK(p.partner < dataset.size());
}

TEST_CASE("alpha draws are uniform in the mean") {
    std::vector<stmap::MapGroup> dataset;
    dataset.push_back(random_group(0, 2, 40));
    dataset.push_back(random_group(1, 2, 41));
    Rng rng(19);
    double sum = 0.0;
    const int draws = 10000;
    for (int it = 0; it < draws; ++it)
        sum += augment::sample_pair(dataset, 0, BlendMode::inter, rng).alpha;
    CHECK(sum / draws == doctest::Approx(0.5).epsilon(0.04));
}

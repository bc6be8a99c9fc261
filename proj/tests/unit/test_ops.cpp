#include <doctest.h>

#include <cmath>
#include <vector>

#include "rppg/nd/ops.hpp"
#include "rppg/rng.hpp"

using namespace rppg;
using nd::Tensor;

namespace {

Tensor random_tensor(nd::Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(nd::shape_size(s));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(s), std::move(v));
}

// Six nested loops straight from the definition, used as the conv oracle.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& k,
                                const Tensor& b, bool same) {
    std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::size_t co = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
    std::size_t ph = same ? (kh - 1) / 2 : 0, pw = same ? (kw - 1) / 2 : 0;
    std::size_t oh = same ? h : h - kh + 1, ow = same ? w : w - kw + 1;
    std::vector<double> out(co * oh * ow, 0.0);
    for (std::size_t c = 0; c < co; ++c)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double s = b[c];
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t r = 0; r < kh; ++r)
                        for (std::size_t q = 0; q < kw; ++q) {
                            std::ptrdiff_t iy = (std::ptrdiff_t)(y + r) - (std::ptrdiff_t)ph;
                            std::ptrdiff_t ix = (std::ptrdiff_t)(xx + q) - (std::ptrdiff_t)pw;
                            if (iy < 0 || iy >= (std::ptrdiff_t)h) continue;
                            if (ix < 0 || ix >= (std::ptrdiff_t)w) continue;
                            s += x[(ic * h + iy) * w + ix] *
                                 k[((c * ci + ic) * kh + r) * kw + q];
                        }
                out[(c * oh + y) * ow + xx] = s;
            }
    return out;
}

} // namespace

TEST_CASE("elementwise binaries with broadcast") {
    Tensor a = Tensor::from({3}, {1, 2, 3});
    Tensor b = Tensor::from({3}, {4, 5, 6});
    Tensor s = Tensor::scalar(2.0);

    CHECK(nd::add(a, b).values() == std::vector<double>{5, 7, 9});
    CHECK(nd::sub(a, b).values() == std::vector<double>{-3, -3, -3});
    CHECK(nd::mul(a, b).values() == std::vector<double>{4, 10, 18});
    CHECK(nd::div(b, a).values() == std::vector<double>{4, 2.5, 2});
    CHECK(nd::add(a, s).values() == std::vector<double>{3, 4, 5});
    CHECK(nd::sub(s, a).values() == std::vector<double>{1, 0, -1});
    CHECK(nd::mul(s, b).values() == std::vector<double>{8, 10, 12});
    CHECK(nd::div(a, s).values() == std::vector<double>{0.5, 1, 1.5});
    CHECK(nd::scale(a, -1.0).values() == std::vector<double>{-1, -2, -3});
    CHECK(nd::offset(a, 10.0).values() == std::vector<double>{11, 12, 13});

    CHECK_THROWS_AS(nd::add(a, Tensor::zeros({4})), DimensionError);
    CHECK_THROWS_AS(nd::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})),
                    DimensionError);
}

TEST_CASE("unaries") {
    Tensor a = Tensor::from({3}, {-1.0, 0.0, 2.0});
    auto t = nd::tanh(a);
    CHECK(t[0] == doctest::Approx(std::tanh(-1.0)).epsilon(1e-15));
    CHECK(t[1] == 0.0);
    auto sg = nd::sigmoid(a);
    CHECK(sg[1] == 0.5);
    CHECK(sg[2] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
    CHECK(nd::sigmoid(Tensor::scalar(-800.0)).value() == 0.0);
    CHECK(nd::sigmoid(Tensor::scalar(800.0)).value() == 1.0);
    CHECK(nd::sigmoid(Tensor::scalar(-50.0)).value() > 0.0);
    auto sq = nd::sqrt(Tensor::from({2}, {4.0, 9.0}));
    CHECK(sq.values() == std::vector<double>{2, 3});
}

TEST_CASE("reductions") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(nd::sum(a).value() == 10.0);
    CHECK(nd::mean(a).value() == 2.5);
    CHECK(nd::sum(a).rank() == 0);
}

TEST_CASE("matvec, concat, slice, pick, reshape") {
    Tensor w = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor x = Tensor::from({3}, {1, 0, -1});
    CHECK(nd::matvec(w, x).values() == std::vector<double>{-2, -2});
    CHECK_THROWS_AS(nd::matvec(w, Tensor::zeros({2})), DimensionError);

    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = Tensor::from({3}, {3, 4, 5});
    CHECK(nd::concat(a, b).values() == std::vector<double>{1, 2, 3, 4, 5});

    Tensor v = Tensor::from({5}, {10, 11, 12, 13, 14});
    CHECK(nd::slice(v, 1, 3).values() == std::vector<double>{11, 12, 13});
    CHECK_THROWS_AS(nd::slice(v, 3, 3), ContractError);
    CHECK(nd::pick(v, 4).value() == 14.0);
    CHECK_THROWS_AS(nd::pick(v, 5), ContractError);

    Tensor r = nd::reshape(v, {5, 1});
    CHECK(r.shape() == nd::Shape{5, 1});
    CHECK_THROWS_AS(nd::reshape(v, {2, 2}), DimensionError);
}

TEST_CASE("softmax_log uniform and saturated cases") {
    Tensor z = Tensor::zeros({6});
    auto ls = nd::softmax_log(z);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(ls[i] == doctest::Approx(-std::log(6.0)).epsilon(1e-14));

    auto hot = nd::softmax_log(Tensor::from({2}, {1000.0, 0.0}));
    CHECK(hot[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hot[1] == doctest::Approx(-1000.0).epsilon(1e-12));
}

TEST_CASE("softmax_log exponentials sum to one on random logits") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor logits = random_tensor({6}, rng, -30.0, 30.0);
        auto ls = nd::softmax_log(logits);
        double s = 0.0;
        for (std::size_t i = 0; i < 6; ++i) s += std::exp(ls[i]);
        CHECK(std::abs(s - 1.0) < 1e-12);
        auto p = nd::softmax(logits);
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(p[i] == doctest::Approx(std::exp(ls[i])).epsilon(1e-12));
    }
}

TEST_CASE("conv2d scalar scaling example") {
    Tensor x = Tensor::full({1, 3, 3}, 1.0);
    Tensor k = Tensor::from({1, 1, 1, 1}, {2.0});
    Tensor b = Tensor::zeros({1});
    auto out = nd::conv2d(x, k, b, nd::Padding::same);
    CHECK(out.shape() == nd::Shape{1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == 2.0);
}

TEST_CASE("conv2d tap counting example") {
    Tensor x = Tensor::full({1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    auto out = nd::conv2d(x, k, b, nd::Padding::same);
    CHECK(out[4] == 9.0);
    CHECK(out[0] == 4.0);
    CHECK(out[2] == 4.0);
    CHECK(out[6] == 4.0);
    CHECK(out[8] == 4.0);
    CHECK(out[1] == 6.0);
}

TEST_CASE("conv2d matches the brute-force oracle") {
    Rng rng(5);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    for (bool same : {true, false}) {
        auto out = nd::conv2d(x, k, b, same ? nd::Padding::same : nd::Padding::valid);
        auto want = conv_oracle(x, k, b, same);
        REQUIRE(out.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d contract failures") {
    Tensor x = Tensor::zeros({2, 4, 4});
    Tensor b = Tensor::zeros({3});
    CHECK_THROWS_AS(nd::conv2d(x, Tensor::zeros({3, 1, 3, 3}), b, nd::Padding::same),
                    DimensionError);
    CHECK_THROWS_AS(nd::conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor::zeros({2}),
                               nd::Padding::same),
                    DimensionError);
    CHECK_THROWS_AS(nd::conv2d(x, Tensor::zeros({3, 2, 2, 2}), b, nd::Padding::same),
                    ContractError);
    CHECK_THROWS_AS(nd::conv2d(x, Tensor::zeros({3, 2, 5, 5}), b, nd::Padding::valid),
                    DimensionError);
}

TEST_CASE("meanpool2 and spatial_mean") {
    Tensor x = Tensor::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto p = nd::meanpool2(x);
    CHECK(p.shape() == nd::Shape{1, 1, 1});
    CHECK(p[0] == 3.0);

    // a size-1 axis passes through; the window shrinks to 1 on that side
    auto row = nd::meanpool2(Tensor::from({1, 1, 4}, {1, 3, 5, 7}));
    CHECK(row.shape() == nd::Shape{1, 1, 2});
    CHECK(row.values() == std::vector<double>{2.0, 6.0});
    auto col = nd::meanpool2(Tensor::from({1, 4, 1}, {1, 3, 5, 7}));
    CHECK(col.shape() == nd::Shape{1, 2, 1});
    CHECK(col.values() == std::vector<double>{2.0, 6.0});
    auto dot = nd::meanpool2(Tensor::from({2, 1, 1}, {4.0, -2.0}));
    CHECK(dot.shape() == nd::Shape{2, 1, 1});
    CHECK(dot.values() == std::vector<double>{4.0, -2.0});

    Tensor y = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    auto m = nd::spatial_mean(y);
    CHECK(m.values() == std::vector<double>{2.5, 25.0});
}

TEST_CASE("time_slice windows the middle axis") {
    // [1, 4, 2]: rows change fastest within a time step
    Tensor x = Tensor::from({1, 4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
    auto w = nd::time_slice(x, 1, 2);
    CHECK(w.shape() == nd::Shape{1, 2, 2});
    CHECK(w.values() == std::vector<double>{10, 11, 20, 21});
    CHECK_THROWS_AS(nd::time_slice(x, 3, 2), ContractError);
}

TEST_CASE("pearson_mean endpoints and guards") {
    Rng rng(17);
    Tensor a = random_tensor({2, 8, 3}, rng);

    SUBCASE("identical blocks correlate to one") {
        double r = nd::pearson_mean(a, a, 1e-8).value();
        CHECK(r > 1.0 - 1e-6);
        CHECK(r <= 1.0);
    }
    SUBCASE("negated blocks correlate to minus one") {
        double r = nd::pearson_mean(a, nd::scale(a, -1.0), 1e-8).value();
        CHECK(r < -1.0 + 1e-6);
        CHECK(r >= -1.0);
    }
    SUBCASE("positive affine transform keeps correlation") {
        Tensor t = nd::offset(nd::scale(a, 3.7), 0.9);
        double r = nd::pearson_mean(a, t, 1e-8).value();
        CHECK(r > 1.0 - 1e-6);
    }
    SUBCASE("constant series contribute zero") {
        Tensor c = Tensor::full({2, 8, 3}, 4.0);
        CHECK(nd::pearson_mean(a, c, 1e-8).value() == 0.0);
        CHECK(nd::pearson_mean(c, c, 1e-8).value() == 0.0);
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(nd::pearson_mean(a, Tensor::zeros({2, 8, 2}), 1e-8),
                        DimensionError);
    }
}

TEST_CASE("lstm_cell zero-parameter fixed points") {
    std::size_t d = 3, h = 4;
    nd::LstmWeights w{Tensor::zeros({4 * h, d}), Tensor::zeros({4 * h, h}),
                      Tensor::zeros({4 * h})};
    Tensor x = Tensor::from({d}, {1, -2, 3});

    SUBCASE("zero cell stays zero") {
        auto [hn, cn] = nd::lstm_cell(x, Tensor::zeros({h}), Tensor::zeros({h}), w);
        for (std::size_t i = 0; i < h; ++i) {
            CHECK(cn[i] == 0.0);
            CHECK(hn[i] == 0.0);
        }
    }
    SUBCASE("cell halves through the forget gate") {
        Tensor c = Tensor::from({h}, {2.0, -4.0, 0.5, 8.0});
        auto [hn, cn] = nd::lstm_cell(x, Tensor::zeros({h}), c, w);
        for (std::size_t i = 0; i < h; ++i) {
            CHECK(cn[i] == doctest::Approx(0.5 * c[i]).epsilon(1e-15));
            CHECK(hn[i] == doctest::Approx(0.5 * std::tanh(0.5 * c[i])).epsilon(1e-15));
        }
    }
}

TEST_CASE("lstm_cell matches the gate-equation oracle") {
    Rng rng(23);
    std::size_t d = 3, h = 4;
    nd::LstmWeights w{random_tensor({4 * h, d}, rng), random_tensor({4 * h, h}, rng),
                      random_tensor({4 * h}, rng)};
    Tensor x = random_tensor({d}, rng);
    Tensor h0 = random_tensor({h}, rng);
    Tensor c0 = random_tensor({h}, rng);
    auto [hn, cn] = nd::lstm_cell(x, h0, c0, w);

    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t i = 0; i < h; ++i) {
        auto pre = [&](std::size_t gate) {
            double s = w.b[gate * h + i];
            for (std::size_t j = 0; j < d; ++j)
                s += w.wx[(gate * h + i) * d + j] * x[j];
            for (std::size_t j = 0; j < h; ++j)
                s += w.wh[(gate * h + i) * h + j] * h0[j];
            return s;
        };
        double gi = sig(pre(0)), gf = sig(pre(1)), gg = std::tanh(pre(2)),
               go = sig(pre(3));
        double c_want = gf * c0[i] + gi * gg;
        CHECK(cn[i] == doctest::Approx(c_want).epsilon(1e-12));
        CHECK(hn[i] == doctest::Approx(go * std::tanh(c_want)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(nd::lstm_cell(Tensor::zeros({d + 1}), h0, c0, w), DimensionError);
    CHECK_THROWS_AS(nd::lstm_cell(x, Tensor::zeros({h + 1}), c0, w), DimensionError);
}

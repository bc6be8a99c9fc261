#include <doctest.h>

#include <cmath>
#include <limits>

#include "rppg/nd/ops.hpp"
#include "rppg/nd/tape.hpp"
#include "rppg/nd/tensor.hpp"

using namespace rppg;
using nd::Tape;
using nd::Tensor;

TEST_CASE("tensor construction and accessors") {
    Tensor s = Tensor::scalar(2.5);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.value() == 2.5);

    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.size() == 6);
    CHECK(z.shape() == nd::Shape{2, 3});
    for (std::size_t i = 0; i < 6; ++i) CHECK(z[i] == 0.0);

    Tensor f = Tensor::full({4}, -1.25);
    CHECK(f[3] == -1.25);

    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(m[2] == 3.0);
    CHECK_THROWS_AS((void)m.value(), ContractError);
    CHECK_FALSE(m.tracked());
    CHECK_THROWS_AS((void)m.node(), ContractError);
}

TEST_CASE("tensor rejects bad shapes and non-finite values") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::from({0}, {}), DimensionError);
    double nan = std::numeric_limits<double>::quiet_NaN();
    double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, nan}), ContractError);
    CHECK_THROWS_AS(Tensor::from({2}, {inf, 1.0}), ContractError);
    CHECK_THROWS_AS(Tensor::full({2}, -inf), ContractError);
    CHECK_THROWS_AS(Tensor::scalar(nan), ContractError);
}

TEST_CASE("sum gradient is all ones") {
    Tensor w = Tensor::from({3}, {1, 2, 3});
    Tape tape;
    Tensor tw = tape.track(w);
    Tensor loss = nd::sum(tw);
    tape.backward(loss);
    auto g = tape.grad_of(tw);
    for (double v : g) CHECK(v == 1.0);
}

TEST_CASE("mean of squares gradient") {
    Tensor w = Tensor::from({3}, {1, 2, 3});
    Tape tape;
    Tensor tw = tape.track(w);
    Tensor loss = nd::mean(nd::mul(tw, tw));
    tape.backward(loss);
    auto g = tape.grad_of(tw);
    CHECK(g[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("backward contract violations") {
    Tensor w = Tensor::from({3}, {1, 2, 3});

    SUBCASE("non-scalar loss") {
        Tape tape;
        Tensor tw = tape.track(w);
        Tensor out = nd::mul(tw, tw);
        CHECK_THROWS_AS(tape.backward(out), ContractError);
    }
    SUBCASE("untracked loss") {
        Tape tape;
        Tensor loss = nd::sum(w);
        CHECK_THROWS_AS(tape.backward(loss), ContractError);
    }
    SUBCASE("second sweep rejected") {
        Tape tape;
        Tensor tw = tape.track(w);
        Tensor loss = nd::sum(tw);
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), ContractError);
    }
}

TEST_CASE("constants receive no gradient, unused leaves read as zero") {
    Tensor w = Tensor::from({2}, {1, 2});
    Tensor c = Tensor::from({2}, {5, 7});
    Tape tape;
    Tensor tw = tape.track(w);
    Tensor unused = tape.track(c);
    Tensor loss = nd::sum(nd::mul(tw, c));
    tape.backward(loss);
    auto gw = tape.grad_of(tw);
    CHECK(gw[0] == 5.0);
    CHECK(gw[1] == 7.0);
    auto gu = tape.grad_of(unused);
    CHECK(gu[0] == 0.0);
    CHECK(gu[1] == 0.0);
    CHECK_THROWS_AS((void)tape.grad_of(c), ContractError);
}

TEST_CASE("ops without a tape stay untracked") {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor t = nd::track(a);
    CHECK_FALSE(t.tracked());
    Tensor out = nd::add(a, a);
    CHECK_FALSE(out.tracked());
    CHECK(out[1] == 4.0);
}

TEST_CASE("nested tapes ignore tensors from other tapes") {
    Tensor w = Tensor::from({2}, {1, 2});
    Tape outer;
    Tensor tw = outer.track(w);
    {
        Tape inner;
        CHECK(Tape::active() == &inner);
        Tensor out = nd::mul(tw, tw);
        CHECK_FALSE(inner.tracks(out));
        Tensor ti = inner.track(w);
        Tensor loss = nd::sum(ti);
        inner.backward(loss);
        CHECK(inner.grad_of(ti)[0] == 1.0);
    }
    CHECK(Tape::active() == &outer);
}

TEST_CASE("replay determinism, identical graphs give identical bits") {
    auto run = [] {
        Tensor w = Tensor::from({4}, {0.3, -1.7, 2.9, 0.001});
        Tape tape;
        Tensor tw = tape.track(w);
        Tensor y = nd::tanh(nd::mul(tw, tw));
        Tensor loss = nd::mean(nd::sigmoid(y));
        tape.backward(loss);
        auto g = tape.grad_of(tw);
        return std::pair<double, std::vector<double>>(loss.value(), g);
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

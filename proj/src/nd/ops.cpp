#include "rppg/nd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rppg::nd {

namespace {

using Data = std::shared_ptr<const std::vector<double>>;

// Input descriptor captured into backward closures. node < 0 means the input
// is a constant and receives no gradient.
struct Src {
    std::ptrdiff_t node = -1;
    Data vals;
};

Src src_of(const Tape* tp, const Tensor& t) {
    Src s;
    s.vals = t.data();
    if (tp && tp->tracks(t)) s.node = static_cast<std::ptrdiff_t>(t.node());
    return s;
}

bool any_tracked(const Tape* tp, std::initializer_list<const Tensor*> ts) {
    if (!tp) return false;
    for (const Tensor* t : ts)
        if (tp->tracks(*t)) return true;
    return false;
}

Tensor finish(Tensor out, Tape::BackwardFn back) {
    Tape* tp = Tape::active();
    std::size_t id = tp->record(out.size(), std::move(back));
    return out.with_node(id, tp->id());
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw DimensionError(std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank,
                  const char* role) {
    if (t.rank() != rank) {
        std::ostringstream os;
        os << role << " must have rank " << rank << ", got shape "
           << shape_str(t.shape());
        shape_fail(op, os.str());
    }
}

// Elementwise binary with single-element broadcast on either side. f computes
// the value, dfda/dfdb the partials at one element.
template <class F, class DA, class DB>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f,
                 DA dfda, DB dfdb) {
    const std::size_t na = a.size(), nb = b.size();
    const bool bcast = na == 1 || nb == 1;
    if ((na != nb && !bcast) || (!bcast && a.shape() != b.shape()))
        shape_fail(op, "shapes " + shape_str(a.shape()) + " and " +
                           shape_str(b.shape()) + " do not match");
    const Shape& oshape = (nb == 1 && na != 1) ? a.shape()
                          : (na == 1 && nb != 1) ? b.shape()
                                                 : a.shape();
    const std::size_t n = std::max(na, nb);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = f(av[na == 1 ? 0 : i], bv[nb == 1 ? 0 : i]);
    Tensor res = Tensor::from(oshape, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a, &b})) return res;
    Src sa = src_of(tp, a), sb = src_of(tp, b);
    Data ov = res.data();
    return finish(res, [sa, sb, ov, na, nb, n, dfda, dfdb](Tape& t,
                                                           std::size_t self) {
        const auto& go = t.grad(self);
        const double* av = sa.vals->data();
        const double* bv = sb.vals->data();
        const double* o = ov->data();
        if (sa.node >= 0) {
            auto& ga = t.grad(static_cast<std::size_t>(sa.node));
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t ia = na == 1 ? 0 : i, ib = nb == 1 ? 0 : i;
                ga[ia] += go[i] * dfda(av[ia], bv[ib], o[i]);
            }
        }
        if (sb.node >= 0) {
            auto& gb = t.grad(static_cast<std::size_t>(sb.node));
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t ia = na == 1 ? 0 : i, ib = nb == 1 ? 0 : i;
                gb[ib] += go[i] * dfdb(av[ia], bv[ib], o[i]);
            }
        }
    });
}

// Elementwise unary. df receives (input, output) of one element.
template <class F, class DF>
Tensor ew_unary(const Tensor& a, F f, DF df) {
    const std::size_t n = a.size();
    const double* av = a.values().data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
    Tensor res = Tensor::from(a.shape(), std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    Data ov = res.data();
    return finish(res, [sa, ov, n, df](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        if (sa.node < 0) return;
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        const double* av = sa.vals->data();
        const double* o = ov->data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * df(av[i], o[i]);
    });
}

} // namespace

Tensor track(const Tensor& t) {
    Tape* tp = Tape::active();
    if (!tp) return t;
    return tp->track(t);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Tensor scale(const Tensor& a, double c) {
    return ew_unary(
        a, [c](double x) { return x * c; },
        [c](double, double) { return c; });
}

Tensor offset(const Tensor& a, double c) {
    return ew_unary(
        a, [c](double x) { return x + c; },
        [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
    return ew_unary(
        a, [](double x) { return std::tanh(x); },
        [](double, double o) { return 1.0 - o * o; });
}

Tensor sigmoid(const Tensor& a) {
    return ew_unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double o) { return o * (1.0 - o); });
}

Tensor sqrt(const Tensor& a) {
    return ew_unary(
        a, [](double x) { return std::sqrt(x); },
        [](double, double o) { return 0.5 / o; });
}

Tensor sum(const Tensor& a) {
    const std::size_t n = a.size();
    const double* av = a.values().data();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += av[i];
    Tensor res = Tensor::scalar(s);

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, n](Tape& t, std::size_t self) {
        double g = t.grad(self)[0];
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    const std::size_t n = a.size();
    const double* av = a.values().data();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += av[i];
    Tensor res = Tensor::scalar(s / static_cast<double>(n));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, n](Tape& t, std::size_t self) {
        double g = t.grad(self)[0] / static_cast<double>(n);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    require_rank("matvec", w, 2, "matrix");
    require_rank("matvec", x, 1, "vector");
    const std::size_t m = w.shape()[0], n = w.shape()[1];
    if (x.shape()[0] != n)
        shape_fail("matvec", "matrix " + shape_str(w.shape()) +
                                 " against vector " + shape_str(x.shape()));
    const double* wv = w.values().data();
    const double* xv = x.values().data();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = wv + i * n;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * xv[j];
        out[i] = s;
    }
    Tensor res = Tensor::from({m}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&w, &x})) return res;
    Src sw = src_of(tp, w), sx = src_of(tp, x);
    return finish(res, [sw, sx, m, n](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        const double* wv = sw.vals->data();
        const double* xv = sx.vals->data();
        if (sw.node >= 0) {
            auto& gw = t.grad(static_cast<std::size_t>(sw.node));
            for (std::size_t i = 0; i < m; ++i) {
                double g = go[i];
                double* grow = gw.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) grow[j] += g * xv[j];
            }
        }
        if (sx.node >= 0) {
            auto& gx = t.grad(static_cast<std::size_t>(sx.node));
            for (std::size_t i = 0; i < m; ++i) {
                double g = go[i];
                const double* row = wv + i * n;
                for (std::size_t j = 0; j < n; ++j) gx[j] += g * row[j];
            }
        }
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    require_rank("concat", a, 1, "left operand");
    require_rank("concat", b, 1, "right operand");
    const std::size_t na = a.size(), nb = b.size();
    std::vector<double> out;
    out.reserve(na + nb);
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    Tensor res = Tensor::from({na + nb}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a, &b})) return res;
    Src sa = src_of(tp, a), sb = src_of(tp, b);
    return finish(res, [sa, sb, na, nb](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        if (sa.node >= 0) {
            auto& ga = t.grad(static_cast<std::size_t>(sa.node));
            for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
        }
        if (sb.node >= 0) {
            auto& gb = t.grad(static_cast<std::size_t>(sb.node));
            for (std::size_t i = 0; i < nb; ++i) gb[i] += go[na + i];
        }
    });
}

Tensor slice(const Tensor& a, std::size_t start, std::size_t len) {
    require_rank("slice", a, 1, "operand");
    if (len == 0 || start + len > a.size()) {
        std::ostringstream os;
        os << "window [" << start << ", " << start + len
           << ") outside vector of length " << a.size();
        throw ContractError("slice: " + os.str());
    }
    const double* av = a.values().data();
    std::vector<double> out(av + start, av + start + len);
    Tensor res = Tensor::from({len}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, start, len](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t i = 0; i < len; ++i) ga[start + i] += go[i];
    });
}

Tensor pick(const Tensor& a, std::size_t index) {
    require_rank("pick", a, 1, "operand");
    if (index >= a.size()) {
        std::ostringstream os;
        os << "index " << index << " outside vector of length " << a.size();
        throw ContractError("pick: " + os.str());
    }
    Tensor res = Tensor::scalar(a[index]);

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, index](Tape& t, std::size_t self) {
        double g = t.grad(self)[0];
        t.grad(static_cast<std::size_t>(sa.node))[index] += g;
    });
}

Tensor reshape(const Tensor& a, Shape s) {
    if (shape_size(s) != a.size())
        shape_fail("reshape", "cannot view " + shape_str(a.shape()) + " as " +
                                  shape_str(s));
    Tensor res = Tensor::from(std::move(s), a.values());

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    const std::size_t n = a.size();
    return finish(res, [sa, n](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
    });
}

namespace {

// Shared softmax core: returns probabilities for rank-1 logits.
std::vector<double> softmax_values(const Tensor& logits) {
    const std::size_t k = logits.size();
    const double* lv = logits.values().data();
    double mx = lv[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, lv[i]);
    std::vector<double> p(k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        p[i] = std::exp(lv[i] - mx);
        z += p[i];
    }
    for (std::size_t i = 0; i < k; ++i) p[i] /= z;
    return p;
}

} // namespace

Tensor softmax_log(const Tensor& logits) {
    require_rank("softmax_log", logits, 1, "logits");
    if (logits.size() < 2)
        throw ContractError("softmax_log: needs at least 2 classes, got " +
                            std::to_string(logits.size()));
    const std::size_t k = logits.size();
    const double* lv = logits.values().data();
    double mx = lv[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, lv[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += std::exp(lv[i] - mx);
    const double logz = std::log(z);
    std::vector<double> out(k);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = lv[i] - mx - logz;
        p[i] = std::exp(lv[i] - mx) / z;
    }
    Tensor res = Tensor::from({k}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&logits})) return res;
    Src sl = src_of(tp, logits);
    auto probs = std::make_shared<const std::vector<double>>(std::move(p));
    return finish(res, [sl, probs, k](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& gl = t.grad(static_cast<std::size_t>(sl.node));
        double gsum = 0.0;
        for (std::size_t i = 0; i < k; ++i) gsum += go[i];
        const double* pv = probs->data();
        for (std::size_t i = 0; i < k; ++i) gl[i] += go[i] - pv[i] * gsum;
    });
}

Tensor softmax(const Tensor& logits) {
    require_rank("softmax", logits, 1, "logits");
    if (logits.size() < 2)
        throw ContractError("softmax: needs at least 2 classes, got " +
                            std::to_string(logits.size()));
    std::vector<double> p = softmax_values(logits);
    const std::size_t k = logits.size();
    Tensor res = Tensor::from({k}, std::vector<double>(p));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&logits})) return res;
    Src sl = src_of(tp, logits);
    auto probs = std::make_shared<const std::vector<double>>(std::move(p));
    return finish(res, [sl, probs, k](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& gl = t.grad(static_cast<std::size_t>(sl.node));
        const double* pv = probs->data();
        double dot = 0.0;
        for (std::size_t i = 0; i < k; ++i) dot += go[i] * pv[i];
        for (std::size_t i = 0; i < k; ++i) gl[i] += pv[i] * (go[i] - dot);
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding padding) {
    require_rank("conv2d", input, 3, "input");
    require_rank("conv2d", kernel, 4, "kernel");
    require_rank("conv2d", bias, 1, "bias");
    const std::size_t ci = input.shape()[0], h = input.shape()[1],
                      w = input.shape()[2];
    const std::size_t co = kernel.shape()[0], kci = kernel.shape()[1],
                      kh = kernel.shape()[2], kw = kernel.shape()[3];
    if (kci != ci)
        shape_fail("conv2d", "kernel expects " + std::to_string(kci) +
                                 " input channels, input has " +
                                 std::to_string(ci) + " (input " +
                                 shape_str(input.shape()) + ", kernel " +
                                 shape_str(kernel.shape()) + ")");
    if (bias.shape()[0] != co)
        shape_fail("conv2d", "bias " + shape_str(bias.shape()) +
                                 " against " + std::to_string(co) +
                                 " output channels");
    std::size_t ph = 0, pw = 0, oh = 0, ow = 0;
    if (padding == Padding::same) {
        if (kh % 2 == 0 || kw % 2 == 0)
            throw ContractError(
                "conv2d: same padding requires odd kernel sides, got " +
                shape_str(kernel.shape()));
        ph = (kh - 1) / 2;
        pw = (kw - 1) / 2;
        oh = h;
        ow = w;
    } else {
        if (kh > h || kw > w)
            shape_fail("conv2d", "valid padding with kernel " +
                                     shape_str(kernel.shape()) +
                                     " larger than input " +
                                     shape_str(input.shape()));
        oh = h - kh + 1;
        ow = w - kw + 1;
    }

    const double* xv = input.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();

    // Patches unrolled into a (ci*kh*kw) x (oh*ow) matrix so the kernel acts
    // by plain matrix product; every inner loop below runs contiguously over
    // the output positions.
    const std::size_t taps = ci * kh * kw, pos = oh * ow;
    const auto fill_col = [ci, h, w, kh, kw, ph, pw, oh,
                           ow](const double* src, double* col) {
        const std::size_t pos = oh * ow;
        for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t r = 0; r < kh; ++r)
                for (std::size_t s = 0; s < kw; ++s) {
                    double* row = col + ((ic * kh + r) * kw + s) * pos;
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(s) -
                                               static_cast<std::ptrdiff_t>(pw);
                    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -off);
                    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(
                        static_cast<std::ptrdiff_t>(ow),
                        static_cast<std::ptrdiff_t>(w) - off);
                    for (std::size_t y = 0; y < oh; ++y) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + r) -
                            static_cast<std::ptrdiff_t>(ph);
                        double* dst = row + y * ow;
                        std::fill(dst, dst + ow, 0.0);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                            continue;
                        const double* srow =
                            src + (ic * h + static_cast<std::size_t>(iy)) * w;
                        for (std::ptrdiff_t x = x0; x < x1; ++x)
                            dst[x] = srow[x + off];
                    }
                }
    };

    std::vector<double> col(taps * pos);
    fill_col(xv, col.data());
    std::vector<double> out(co * pos);
    for (std::size_t c = 0; c < co; ++c) {
        double* oc = out.data() + c * pos;
        std::fill(oc, oc + pos, bv[c]);
        const double* kc = kv + c * taps;
        for (std::size_t r = 0; r < taps; ++r) {
            const double kval = kc[r];
            if (kval == 0.0) continue;
            const double* cr = col.data() + r * pos;
            for (std::size_t p = 0; p < pos; ++p) oc[p] += kval * cr[p];
        }
    }
    Tensor res = Tensor::from({co, oh, ow}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&input, &kernel, &bias})) return res;
    Src sx = src_of(tp, input), sk = src_of(tp, kernel), sb = src_of(tp, bias);
    return finish(res, [sx, sk, sb, fill_col, ci, h, w, co, kh, kw, ph, pw, oh,
                        ow](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        const std::size_t taps = ci * kh * kw, pos = oh * ow;
        std::vector<double>* gx =
            sx.node >= 0 ? &t.grad(static_cast<std::size_t>(sx.node)) : nullptr;
        std::vector<double>* gk =
            sk.node >= 0 ? &t.grad(static_cast<std::size_t>(sk.node)) : nullptr;
        std::vector<double>* gb =
            sb.node >= 0 ? &t.grad(static_cast<std::size_t>(sb.node)) : nullptr;
        if (gb) {
            for (std::size_t c = 0; c < co; ++c) {
                double s = 0.0;
                const double* gc = go.data() + c * pos;
                for (std::size_t i = 0; i < pos; ++i) s += gc[i];
                (*gb)[c] += s;
            }
        }
        if (gk) {
            std::vector<double> col(taps * pos);
            fill_col(sx.vals->data(), col.data());
            for (std::size_t c = 0; c < co; ++c) {
                const double* gc = go.data() + c * pos;
                double* gkc = gk->data() + c * taps;
                for (std::size_t r = 0; r < taps; ++r) {
                    const double* cr = col.data() + r * pos;
                    // four partial sums keep the reduction off the FP add
                    // latency chain and let the compiler vectorize it
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                    std::size_t p = 0;
                    for (; p + 4 <= pos; p += 4) {
                        s0 += gc[p] * cr[p];
                        s1 += gc[p + 1] * cr[p + 1];
                        s2 += gc[p + 2] * cr[p + 2];
                        s3 += gc[p + 3] * cr[p + 3];
                    }
                    for (; p < pos; ++p) s0 += gc[p] * cr[p];
                    gkc[r] += (s0 + s1) + (s2 + s3);
                }
            }
        }
        if (gx) {
            const double* kv = sk.vals->data();
            std::vector<double> gcol(taps * pos, 0.0);
            for (std::size_t c = 0; c < co; ++c) {
                const double* gc = go.data() + c * pos;
                const double* kc = kv + c * taps;
                for (std::size_t r = 0; r < taps; ++r) {
                    const double kval = kc[r];
                    if (kval == 0.0) continue;
                    double* gr = gcol.data() + r * pos;
                    for (std::size_t p = 0; p < pos; ++p) gr[p] += kval * gc[p];
                }
            }
            // scatter the unrolled gradient back onto the input pixels
            for (std::size_t ic = 0; ic < ci; ++ic)
                for (std::size_t r = 0; r < kh; ++r)
                    for (std::size_t s = 0; s < kw; ++s) {
                        const double* grow =
                            gcol.data() + ((ic * kh + r) * kw + s) * pos;
                        const std::ptrdiff_t off =
                            static_cast<std::ptrdiff_t>(s) -
                            static_cast<std::ptrdiff_t>(pw);
                        const std::ptrdiff_t x0 =
                            std::max<std::ptrdiff_t>(0, -off);
                        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(
                            static_cast<std::ptrdiff_t>(ow),
                            static_cast<std::ptrdiff_t>(w) - off);
                        for (std::size_t y = 0; y < oh; ++y) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y + r) -
                                static_cast<std::ptrdiff_t>(ph);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                                continue;
                            const double* gr = grow + y * ow;
                            double* gxrow =
                                gx->data() +
                                (ic * h + static_cast<std::size_t>(iy)) * w;
                            for (std::ptrdiff_t x = x0; x < x1; ++x)
                                gxrow[x + off] += gr[x];
                        }
                    }
        }
    });
}

Tensor meanpool2(const Tensor& a) {
    require_rank("meanpool2", a, 3, "input");
    const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
    // an axis of size 1 cannot be halved; the window degenerates to 1 there
    // and the axis passes through, so tiny maps still flow through the net
    const std::size_t wy = h >= 2 ? 2 : 1, wx = w >= 2 ? 2 : 1;
    const std::size_t oh = h >= 2 ? h / 2 : 1, ow = w >= 2 ? w / 2 : 1;
    const double scale = 1.0 / static_cast<double>(wy * wx);
    const double* av = a.values().data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* ac = av + ch * h * w;
        double* oc = out.data() + ch * oh * ow;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < wy; ++dy)
                    for (std::size_t dx = 0; dx < wx; ++dx)
                        s += ac[(wy * y + dy) * w + wx * x + dx];
                oc[y * ow + x] = scale * s;
            }
    }
    Tensor res = Tensor::from({c, oh, ow}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, c, w, oh, ow, wy, wx, scale, h](Tape& t,
                                                            std::size_t self) {
        const auto& go = t.grad(self);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* gc = go.data() + ch * oh * ow;
            double* gac = ga.data() + ch * h * w;
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double g = scale * gc[y * ow + x];
                    for (std::size_t dy = 0; dy < wy; ++dy)
                        for (std::size_t dx = 0; dx < wx; ++dx)
                            gac[(wy * y + dy) * w + wx * x + dx] += g;
                }
        }
    });
}

Tensor spatial_mean(const Tensor& a) {
    require_rank("spatial_mean", a, 3, "input");
    const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
    const double inv = 1.0 / static_cast<double>(h * w);
    const double* av = a.values().data();
    std::vector<double> out(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* ac = av + ch * h * w;
        for (std::size_t i = 0; i < h * w; ++i) s += ac[i];
        out[ch] = s * inv;
    }
    Tensor res = Tensor::from({c}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, c, h, w, inv](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t ch = 0; ch < c; ++ch) {
            double g = go[ch] * inv;
            double* gac = ga.data() + ch * h * w;
            for (std::size_t i = 0; i < h * w; ++i) gac[i] += g;
        }
    });
}

Tensor time_slice(const Tensor& a, std::size_t t0, std::size_t len) {
    require_rank("time_slice", a, 3, "input");
    const std::size_t c = a.shape()[0], tt = a.shape()[1], r = a.shape()[2];
    if (len == 0 || t0 + len > tt) {
        std::ostringstream os;
        os << "window [" << t0 << ", " << t0 + len << ") outside time axis of "
           << shape_str(a.shape());
        throw ContractError("time_slice: " + os.str());
    }
    const double* av = a.values().data();
    std::vector<double> out(c * len * r);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* ac = av + (ch * tt + t0) * r;
        std::copy(ac, ac + len * r, out.begin() + ch * len * r);
    }
    Tensor res = Tensor::from({c, len, r}, std::move(out));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a})) return res;
    Src sa = src_of(tp, a);
    return finish(res, [sa, c, tt, r, t0, len](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        auto& ga = t.grad(static_cast<std::size_t>(sa.node));
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* gc = go.data() + ch * len * r;
            double* gac = ga.data() + (ch * tt + t0) * r;
            for (std::size_t i = 0; i < len * r; ++i) gac[i] += gc[i];
        }
    });
}

namespace {

// Moments of one (channel,row) series pair along the time axis; elements sit
// r apart within a channel block of l*r values.
void pearson_stats(const double* av, const double* bv, std::size_t l,
                   std::size_t r, std::size_t ch, std::size_t row, double& ma,
                   double& mb, double& cov, double& va, double& vb) {
    const double* as = av + ch * l * r + row;
    const double* bs = bv + ch * l * r + row;
    ma = mb = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        ma += as[i * r];
        mb += bs[i * r];
    }
    ma /= static_cast<double>(l);
    mb /= static_cast<double>(l);
    cov = va = vb = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        double da = as[i * r] - ma, db = bs[i * r] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    cov /= static_cast<double>(l);
    va /= static_cast<double>(l);
    vb /= static_cast<double>(l);
}

} // namespace

Tensor pearson_mean(const Tensor& a, const Tensor& b, double eps) {
    require_rank("pearson_mean", a, 3, "left block");
    require_rank("pearson_mean", b, 3, "right block");
    if (a.shape() != b.shape())
        shape_fail("pearson_mean", "blocks " + shape_str(a.shape()) + " and " +
                                       shape_str(b.shape()) + " differ");
    const std::size_t c = a.shape()[0], l = a.shape()[1], r = a.shape()[2];
    const std::size_t series = c * r;
    const double* av = a.values().data();
    const double* bv = b.values().data();

    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t row = 0; row < r; ++row) {
            double ma, mb, cov, va, vb;
            pearson_stats(av, bv, l, r, ch, row, ma, mb, cov, va, vb);
            double sa = std::sqrt(va), sb = std::sqrt(vb);
            if (sa * sb == 0.0) continue;
            acc += cov / (sa * sb + eps);
        }
    }
    Tensor res = Tensor::scalar(acc / static_cast<double>(series));

    Tape* tp = Tape::active();
    if (!any_tracked(tp, {&a, &b})) return res;
    Src sa_ = src_of(tp, a), sb_ = src_of(tp, b);
    return finish(res, [sa_, sb_, c, l, r, series, eps](Tape& t,
                                                        std::size_t self) {
        double g = t.grad(self)[0] / static_cast<double>(series);
        const double* av = sa_.vals->data();
        const double* bv = sb_.vals->data();
        std::vector<double>* ga =
            sa_.node >= 0 ? &t.grad(static_cast<std::size_t>(sa_.node)) : nullptr;
        std::vector<double>* gb =
            sb_.node >= 0 ? &t.grad(static_cast<std::size_t>(sb_.node)) : nullptr;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t row = 0; row < r; ++row) {
                double ma, mb, cov, va, vb;
                pearson_stats(av, bv, l, r, ch, row, ma, mb, cov, va, vb);
                double sa = std::sqrt(va), sb = std::sqrt(vb);
                if (sa * sb == 0.0) continue;
                double denom = sa * sb + eps;
                double rr = cov / denom;
                const std::size_t base = ch * l * r + row;
                // d r / d a_i = (db_i - r (sb/sa) da_i) / (l denom), and
                // symmetrically for b.
                double ca = rr * sb / sa / (static_cast<double>(l) * denom);
                double cb = rr * sa / sb / (static_cast<double>(l) * denom);
                double cd = 1.0 / (static_cast<double>(l) * denom);
                for (std::size_t i = 0; i < l; ++i) {
                    double da = av[base + i * r] - ma;
                    double db = bv[base + i * r] - mb;
                    if (ga) (*ga)[base + i * r] += g * (db * cd - ca * da);
                    if (gb) (*gb)[base + i * r] += g * (da * cd - cb * db);
                }
            }
        }
    });
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c, const LstmWeights& w) {
    require_rank("lstm_cell", x, 1, "input");
    require_rank("lstm_cell", h, 1, "hidden state");
    require_rank("lstm_cell", c, 1, "cell state");
    require_rank("lstm_cell", w.wx, 2, "input weights");
    require_rank("lstm_cell", w.wh, 2, "recurrent weights");
    require_rank("lstm_cell", w.b, 1, "bias");
    const std::size_t hid = h.size();
    if (c.size() != hid || w.wx.shape()[0] != 4 * hid ||
        w.wx.shape()[1] != x.size() || w.wh.shape()[0] != 4 * hid ||
        w.wh.shape()[1] != hid || w.b.size() != 4 * hid) {
        std::ostringstream os;
        os << "inconsistent shapes: x " << shape_str(x.shape()) << ", h "
           << shape_str(h.shape()) << ", c " << shape_str(c.shape()) << ", wx "
           << shape_str(w.wx.shape()) << ", wh " << shape_str(w.wh.shape())
           << ", b " << shape_str(w.b.shape());
        shape_fail("lstm_cell", os.str());
    }
    Tensor pre = add(add(matvec(w.wx, x), matvec(w.wh, h)), w.b);
    Tensor gi = sigmoid(slice(pre, 0, hid));
    Tensor gf = sigmoid(slice(pre, hid, hid));
    Tensor gg = tanh(slice(pre, 2 * hid, hid));
    Tensor go = sigmoid(slice(pre, 3 * hid, hid));
    Tensor cn = add(mul(gf, c), mul(gi, gg));
    Tensor hn = mul(go, tanh(cn));
    return {hn, cn};
}

} // namespace rppg::nd

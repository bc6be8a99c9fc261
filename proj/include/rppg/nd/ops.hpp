#pragma once

#include <cstddef>
#include <utility>

#include "rppg/nd/tape.hpp"
#include "rppg/nd/tensor.hpp"

namespace rppg::nd {

enum class Padding { same, valid };

// Registers t as a differentiable leaf on the active tape. Identity when no
// tape is active.
Tensor track(const Tensor& t);

// Elementwise binaries. Shapes must match exactly, except that either operand
// may be a single-element tensor, which broadcasts over the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise against a plain constant.
Tensor scale(const Tensor& a, double c);
Tensor offset(const Tensor& a, double c);

// Elementwise unaries.
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Full reductions to a scalar tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Rank-1 linear algebra and shuffling.
Tensor matvec(const Tensor& w, const Tensor& x);                    // [m,n]x[n] -> [m]
Tensor concat(const Tensor& a, const Tensor& b);                    // rank-1
Tensor slice(const Tensor& a, std::size_t start, std::size_t len);  // rank-1
Tensor pick(const Tensor& a, std::size_t index);                    // rank-1 -> scalar
Tensor reshape(const Tensor& a, Shape s);

// Stable log-softmax / softmax over a rank-1 tensor (max subtraction).
Tensor softmax_log(const Tensor& logits);
Tensor softmax(const Tensor& logits);

// 2-d ops on channels-first [C,H,W] tensors, stride 1. Same padding requires
// odd kernel sides and preserves H,W; valid requires the kernel to fit.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding padding);
Tensor meanpool2(const Tensor& a);     // [C,H,W] -> [C,max(1,H/2),max(1,W/2)]; size-1 axes pass through
Tensor spatial_mean(const Tensor& a);  // [C,H,W] -> [C]

// Contiguous window along the middle (time) axis: [C,T,R] -> [C,len,R].
Tensor time_slice(const Tensor& a, std::size_t t0, std::size_t len);

// Mean over all (channel,row) series of the variance-guarded Pearson
// correlation between a and b along the middle axis; both shaped [C,L,R].
// r = cov/(sigma_a*sigma_b + eps); a pair with sigma_a*sigma_b == 0
// contributes r = 0 and no gradient.
Tensor pearson_mean(const Tensor& a, const Tensor& b, double eps);

// Gate blocks stacked along the first axis in order i, f, g, o.
struct LstmWeights {
    Tensor wx;  // [4H, D]
    Tensor wh;  // [4H, H]
    Tensor b;   // [4H]
};

// One LSTM step: i,f,o = sigmoid, g = tanh, c' = f*c + i*g, h' = o*tanh(c').
// Composed from the primitives above, so its gradient needs no bespoke code.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c, const LstmWeights& w);

} // namespace rppg::nd

#pragma once

// Hand-written forward/backward for the small conv trunk shared by the
// classifier and embedding scorers. Tensor order in `params`:
//   0 conv1.w [C1,1,3,3]  1 conv1.b [C1]
//   2 conv2.w [C2,C1,3,3] 3 conv2.b [C2]
//   4 fc1.w   [H,F]       5 fc1.b   [H]
//   6 fc2.w   [O,H]       7 fc2.b   [O]

#include <cstdint>
#include <span>
#include <vector>

#include "strokescope/scorer.hpp"

namespace strokescope::detail {

struct ConvShape {
  int in_w = 0, in_h = 0;
  int c1 = 8, c2 = 16, hidden = 64, out = 0;
  int w1 = 0, h1 = 0;  // after conv1
  int w2 = 0, h2 = 0;  // after conv2
  int features() const { return c2 * w2 * h2; }
};

ConvShape conv_shape(int w, int h, int out);

std::vector<Tensor> conv_init(const ConvShape& shape, std::uint64_t seed);

struct ConvActivations {
  std::vector<double> a1;   // conv1 after ReLU
  std::vector<double> a2;   // conv2 after ReLU
  std::vector<double> a3;   // fc1 after ReLU
  std::vector<double> out;  // fc2 output (raw)
};

void conv_forward(const ConvShape& s, const std::vector<Tensor>& params, std::span<const double> input,
                  ConvActivations& acts);

// Back-propagates d_out (w.r.t. the raw fc2 output). Either sink may be null.
void conv_backward(const ConvShape& s, const std::vector<Tensor>& params, std::span<const double> input,
                   const ConvActivations& acts, std::span<const double> d_out,
                   std::vector<std::vector<double>>* param_grads, std::vector<double>* d_input);

} // namespace strokescope::detail

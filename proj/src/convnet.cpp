#include "convnet.hpp"

#include <cmath>
#include <random>

namespace strokescope::detail {

namespace {

int strided(int n) { return (n + 1) / 2; }  // 3x3, stride 2, padding 1

// out[co][oy][ox] = b[co] + sum w[co][ci][ky][kx] * in[ci][2oy+ky-1][2ox+kx-1]
void conv3x3s2_forward(std::span<const double> in, int cin, int iw, int ih, const std::vector<double>& w,
                       const std::vector<double>& b, int cout, int ow, int oh, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(cout) * ow * oh, 0.0);
  for (int co = 0; co < cout; ++co) {
    double* o = out.data() + static_cast<std::size_t>(co) * ow * oh;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          const double* src = in.data() + static_cast<std::size_t>(ci) * iw * ih;
          const double* k = w.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= iw) continue;
              acc += k[ky * 3 + kx] * src[iy * iw + ix];
            }
          }
        }
        o[oy * ow + ox] = acc;
      }
    }
  }
}

void conv3x3s2_backward(std::span<const double> in, int cin, int iw, int ih, const std::vector<double>& w,
                        int cout, int ow, int oh, const std::vector<double>& d_out, std::vector<double>* d_w,
                        std::vector<double>* d_b, std::vector<double>* d_in) {
  if (d_in) d_in->assign(static_cast<std::size_t>(cin) * iw * ih, 0.0);
  for (int co = 0; co < cout; ++co) {
    const double* g = d_out.data() + static_cast<std::size_t>(co) * ow * oh;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double go = g[oy * ow + ox];
        if (go == 0.0) continue;
        if (d_b) (*d_b)[co] += go;
        for (int ci = 0; ci < cin; ++ci) {
          const std::size_t kbase = (static_cast<std::size_t>(co) * cin + ci) * 9;
          const std::size_t ibase = static_cast<std::size_t>(ci) * iw * ih;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= iw) continue;
              const std::size_t ii = ibase + iy * iw + ix;
              if (d_w) (*d_w)[kbase + ky * 3 + kx] += go * in[ii];
              if (d_in) (*d_in)[ii] += go * w[kbase + ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

void relu(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

// Zeroes gradient entries whose post-ReLU activation is not positive.
void relu_mask(std::vector<double>& grad, const std::vector<double>& post) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(post[i] > 0.0)) grad[i] = 0.0;
}

void dense_forward(std::span<const double> in, const std::vector<double>& w, const std::vector<double>& b,
                   int n_out, std::vector<double>& out) {
  const std::size_t n_in = in.size();
  out.assign(n_out, 0.0);
  for (int o = 0; o < n_out; ++o) {
    const double* row = w.data() + static_cast<std::size_t>(o) * n_in;
    double acc = b[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(std::span<const double> in, const std::vector<double>& w, std::span<const double> d_out,
                    std::vector<double>* d_w, std::vector<double>* d_b, std::vector<double>* d_in) {
  const std::size_t n_in = in.size();
  if (d_in) d_in->assign(n_in, 0.0);
  for (std::size_t o = 0; o < d_out.size(); ++o) {
    const double g = d_out[o];
    if (g == 0.0) continue;
    if (d_b) (*d_b)[o] += g;
    const double* row = w.data() + o * n_in;
    if (d_w) {
      double* grow = d_w->data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) grow[i] += g * in[i];
    }
    if (d_in)
      for (std::size_t i = 0; i < n_in; ++i) (*d_in)[i] += g * row[i];
  }
}

Tensor he_tensor(std::string name, std::vector<int> shape, int fan_in, double gain, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  Tensor t{std::move(name), std::move(shape), std::vector<double>(n)};
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor zeros(std::string name, int n) { return {std::move(name), {n}, std::vector<double>(n, 0.0)}; }

} // namespace

ConvShape conv_shape(int w, int h, int out) {
  ConvShape s;
  s.in_w = w;
  s.in_h = h;
  s.out = out;
  s.w1 = strided(w);
  s.h1 = strided(h);
  s.w2 = strided(s.w1);
  s.h2 = strided(s.h1);
  return s;
}

std::vector<Tensor> conv_init(const ConvShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> t;
  t.push_back(he_tensor("conv1.w", {s.c1, 1, 3, 3}, 9, 1.0, rng));
  t.push_back(zeros("conv1.b", s.c1));
  t.push_back(he_tensor("conv2.w", {s.c2, s.c1, 3, 3}, 9 * s.c1, 1.0, rng));
  t.push_back(zeros("conv2.b", s.c2));
  t.push_back(he_tensor("fc1.w", {s.hidden, s.features()}, s.features(), 1.0, rng));
  t.push_back(zeros("fc1.b", s.hidden));
  t.push_back(he_tensor("fc2.w", {s.out, s.hidden}, s.hidden, 0.5, rng));
  t.push_back(zeros("fc2.b", s.out));
  return t;
}

void conv_forward(const ConvShape& s, const std::vector<Tensor>& p, std::span<const double> input,
                  ConvActivations& a) {
  conv3x3s2_forward(input, 1, s.in_w, s.in_h, p[0].data, p[1].data, s.c1, s.w1, s.h1, a.a1);
  relu(a.a1);
  conv3x3s2_forward(a.a1, s.c1, s.w1, s.h1, p[2].data, p[3].data, s.c2, s.w2, s.h2, a.a2);
  relu(a.a2);
  dense_forward(a.a2, p[4].data, p[5].data, s.hidden, a.a3);
  relu(a.a3);
  dense_forward(a.a3, p[6].data, p[7].data, s.out, a.out);
}

void conv_backward(const ConvShape& s, const std::vector<Tensor>& p, std::span<const double> input,
                   const ConvActivations& a, std::span<const double> d_out,
                   std::vector<std::vector<double>>* pg, std::vector<double>* d_input) {
  auto grad = [&](int i) { return pg ? &(*pg)[i] : nullptr; };
  std::vector<double> d3, d2, d1;
  dense_backward(a.a3, p[6].data, d_out, grad(6), grad(7), &d3);
  relu_mask(d3, a.a3);
  dense_backward(a.a2, p[4].data, d3, grad(4), grad(5), &d2);
  relu_mask(d2, a.a2);
  conv3x3s2_backward(a.a1, s.c1, s.w1, s.h1, p[2].data, s.c2, s.w2, s.h2, d2, grad(2), grad(3), &d1);
  relu_mask(d1, a.a1);
  conv3x3s2_backward(input, 1, s.in_w, s.in_h, p[0].data, s.c1, s.w1, s.h1, d1, grad(0), grad(1), d_input);
}

} // namespace strokescope::detail

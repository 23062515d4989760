#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "ladder/autodiff.hpp"

namespace ladder::ops {
namespace {

constexpr float kProbFloor = 1e-12f;

void accumulate(Tensor* slot, const Tensor& g) {
    if (!slot) return;
    float* dst = slot->ptr();
    const float* src = g.ptr();
    for (std::size_t i = 0, n = g.size(); i < n; ++i) dst[i] += src[i];
}

// Row-major GEMM kernels, all accumulating into C.
// nn: C[m,n] += A[m,k] B[k,n];  nt: C[m,k] += G[m,n] B[k,n]^T;  tn: C[k,n] += A[m,k]^T G[m,n]
void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = a[i * k + p];
            const float* brow = b + p * n;
            float* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
}

void gemm_nt(const float* g, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const float* brow = b + p * n;
            const float* grow = g + i * n;
            // eight partial sums so the dot product vectorises
            float acc[8] = {};
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8)
                for (std::size_t l = 0; l < 8; ++l) acc[l] += grow[j + l] * brow[j + l];
            float total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
            for (; j < n; ++j) total += grow[j] * brow[j];
            c[i * k + p] += total;
        }
}

void gemm_tn(const float* a, const float* g, float* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = a[i * k + p];
            const float* grow = g + i * n;
            float* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
        }
}

template <typename F>
Var unary(const Var& x, F&& f, BackwardFn backward) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return x.tape().record(std::move(out), {x}, std::move(backward));
}

struct ConvGeometry {
    std::size_t n, ci, h, w, co, kh, kw, oh, ow, sh, sw, ph, pw;
};

// Source offset inside one input sample for every (c, a, b) row and output
// position of the im2col matrix; -1 marks padding.
std::vector<long> im2col_table(const ConvGeometry& g) {
    const std::size_t positions = g.oh * g.ow;
    std::vector<long> table(g.ci * g.kh * g.kw * positions, -1);
    for (std::size_t c = 0; c < g.ci; ++c)
        for (std::size_t a = 0; a < g.kh; ++a)
            for (std::size_t b = 0; b < g.kw; ++b) {
                long* row = table.data() + ((c * g.kh + a) * g.kw + b) * positions;
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const long iy = static_cast<long>(y * g.sh + a) - static_cast<long>(g.ph);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    for (std::size_t xx = 0; xx < g.ow; ++xx) {
                        const long ix = static_cast<long>(xx * g.sw + b) - static_cast<long>(g.pw);
                        if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                        row[y * g.ow + xx] = (static_cast<long>(c) * static_cast<long>(g.h) + iy) *
                                                 static_cast<long>(g.w) + ix;
                    }
                }
            }
    return table;
}

void gather_cols(const std::vector<long>& table, const float* sample, float* cols) {
    for (std::size_t i = 0; i < table.size(); ++i) cols[i] = table[i] < 0 ? 0.0f : sample[table[i]];
}

// Cross-correlation core shared by conv2d and conv1d (as H = 1): out = W cols per sample.
void conv_forward(const ConvGeometry& g, const std::vector<long>& table, const float* x, const float* wt, float* out) {
    const std::size_t in_size = g.ci * g.h * g.w, out_size = g.co * g.oh * g.ow, taps = g.ci * g.kh * g.kw;
    std::vector<float> cols(table.size());
    for (std::size_t n = 0; n < g.n; ++n) {
        gather_cols(table, x + n * in_size, cols.data());
        gemm_nn(wt, cols.data(), out + n * out_size, g.co, taps, g.oh * g.ow);
    }
}

void conv_backward(const ConvGeometry& g, const std::vector<long>& table, const float* x, const float* wt,
                   const float* gout, float* gx, float* gw) {
    const std::size_t in_size = g.ci * g.h * g.w, out_size = g.co * g.oh * g.ow, taps = g.ci * g.kh * g.kw;
    const std::size_t positions = g.oh * g.ow;
    std::vector<float> cols(table.size()), gcols(gx ? table.size() : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
        const float* go = gout + n * out_size;
        if (gw) {
            gather_cols(table, x + n * in_size, cols.data());
            gemm_nt(go, cols.data(), gw, g.co, taps, positions);
        }
        if (gx) {
            std::fill(gcols.begin(), gcols.end(), 0.0f);
            gemm_tn(wt, go, gcols.data(), g.co, taps, positions);
            float* dst = gx + n * in_size;
            for (std::size_t i = 0; i < table.size(); ++i)
                if (table[i] >= 0) dst[table[i]] += gcols[i];
        }
    }
}

Var conv_generic(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g, Shape out_shape) {
    Tensor out(std::move(out_shape));
    auto table = std::make_shared<const std::vector<long>>(im2col_table(g));
    conv_forward(g, *table, x.value().ptr(), weight.value().ptr(), out.ptr());
    if (bias.valid()) {
        const Tensor& bv = bias.value();
        for (std::size_t n = 0; n < g.n; ++n)
            for (std::size_t o = 0; o < g.co; ++o) {
                float* dst = out.ptr() + ((n * g.co + o) * g.oh) * g.ow;
                for (std::size_t i = 0; i < g.oh * g.ow; ++i) dst[i] += bv[o];
            }
    }
    return x.tape().record(std::move(out), {x, weight, bias},
                           [g, x, weight, table](const Tensor&, const Tensor& gout, std::span<Tensor* const> slots) {
                               float* gx = slots[0] ? slots[0]->ptr() : nullptr;
                               float* gw = slots[1] ? slots[1]->ptr() : nullptr;
                               if (gx || gw)
                                   conv_backward(g, *table, x.value().ptr(), weight.value().ptr(), gout.ptr(), gx, gw);
                               if (slots[2]) {
                                   float* gb = slots[2]->ptr();
                                   for (std::size_t n = 0; n < g.n; ++n)
                                       for (std::size_t o = 0; o < g.co; ++o) {
                                           const float* go = gout.ptr() + ((n * g.co + o) * g.oh) * g.ow;
                                           float acc = 0.0f;
                                           for (std::size_t i = 0; i < g.oh * g.ow; ++i) acc += go[i];
                                           gb[o] += acc;
                                       }
                               }
                           });
}

void check_bias(const Var& bias, std::size_t channels, const char* op) {
    if (!bias.valid()) return;
    require(bias.shape() == Shape{channels}, ErrorKind::dimension,
            std::string(op) + ": bias shape " + shape_string(bias.shape()) + " != [" + std::to_string(channels) + "]");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), ErrorKind::dimension,
            "matmul: incompatible shapes " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    gemm_nn(av.ptr(), bv.ptr(), out.ptr(), m, k, n);
    return a.tape().record(std::move(out), {a, b},
                           [a, b, m, k, n](const Tensor&, const Tensor& g, std::span<Tensor* const> slots) {
                               if (slots[0]) gemm_nt(g.ptr(), b.value().ptr(), slots[0]->ptr(), m, k, n);
                               if (slots[1]) gemm_tn(a.value().ptr(), g.ptr(), slots[1]->ptr(), m, k, n);
                           });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        accumulate(s[0], g);
        accumulate(s[1], g);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        accumulate(s[0], g);
        if (s[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*s[1])[i] -= g[i];
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        if (s[0])
            for (std::size_t i = 0; i < g.size(); ++i) (*s[0])[i] += g[i] * b.value()[i];
        if (s[1])
            for (std::size_t i = 0; i < g.size(); ++i) (*s[1])[i] += g[i] * a.value()[i];
    });
}

Var scale(const Var& a, float factor) {
    Tensor out = a.value();
    for (float& v : out.data()) v *= factor;
    return a.tape().record(std::move(out), {a}, [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        for (std::size_t i = 0; i < g.size(); ++i) (*s[0])[i] += g[i] * factor;
    });
}

Var add_bias(const Var& x, const Var& bias) {
    const Tensor& xv = x.value();
    require(xv.rank() >= 2 && bias.value().rank() == 1 && bias.value().size() == xv.dim(1), ErrorKind::dimension,
            "add_bias: bias " + shape_string(bias.shape()) + " does not match axis 1 of " + shape_string(xv.shape()));
    const std::size_t batch = xv.dim(0), channels = xv.dim(1), inner = xv.size() / (batch * channels);
    Tensor out = xv;
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            float* dst = out.ptr() + (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += bias.value()[c];
        }
    return x.tape().record(std::move(out), {x, bias},
                           [batch, channels, inner](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                               accumulate(s[0], g);
                               if (s[1])
                                   for (std::size_t n = 0; n < batch; ++n)
                                       for (std::size_t c = 0; c < channels; ++c) {
                                           const float* src = g.ptr() + (n * channels + c) * inner;
                                           float acc = 0.0f;
                                           for (std::size_t i = 0; i < inner; ++i) acc += src[i];
                                           (*s[1])[c] += acc;
                                       }
                           });
}

Var relu(const Var& x) {
    return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; },
                 [](const Tensor& out, const Tensor& g, std::span<Tensor* const> s) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                         if (out[i] > 0.0f) (*s[0])[i] += g[i];
                 });
}

Var tanh(const Var& x) {
    return unary(x, [](float v) { return std::tanh(v); },
                 [](const Tensor& out, const Tensor& g, std::span<Tensor* const> s) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*s[0])[i] += g[i] * (1.0f - out[i] * out[i]);
                 });
}

Var sigmoid(const Var& x) {
    return unary(x,
                 [](float v) {
                     return v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
                 },
                 [](const Tensor& out, const Tensor& g, std::span<Tensor* const> s) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*s[0])[i] += g[i] * out[i] * (1.0f - out[i]);
                 });
}

Var softmax(const Var& x, std::size_t axis) {
    const Tensor& xv = x.value();
    require(axis < xv.rank(), ErrorKind::dimension, "softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
    for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
    const std::size_t len = xv.dim(axis);
    Tensor out(xv.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            float total = 0.0f;
            for (std::size_t j = 0; j < len; ++j) {
                const float e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
        }
    return x.tape().record(std::move(out), {x},
                           [outer, inner, len](const Tensor& y, const Tensor& g, std::span<Tensor* const> s) {
                               for (std::size_t o = 0; o < outer; ++o)
                                   for (std::size_t in = 0; in < inner; ++in) {
                                       const std::size_t base = o * len * inner + in;
                                       float dot = 0.0f;
                                       for (std::size_t j = 0; j < len; ++j)
                                           dot += g[base + j * inner] * y[base + j * inner];
                                       for (std::size_t j = 0; j < len; ++j) {
                                           const std::size_t idx = base + j * inner;
                                           (*s[0])[idx] += y[idx] * (g[idx] - dot);
                                       }
                                   }
                           });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.tape().record(std::move(out), {x},
                           [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) { accumulate(s[0], g); });
}

Var sum(const Var& x) {
    float total = 0.0f;
    for (float v : x.value().data()) total += v;
    return x.tape().record(Tensor::scalar(total), {x}, [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        for (float& v : s[0]->data()) v += g[0];
    });
}

Var mean(const Var& x) { return scale(sum(x), 1.0f / static_cast<float>(x.value().size())); }

Var mse_loss(const Var& pred, const Var& target) {
    require_same_shape(pred.value(), target.value(), "mse_loss");
    const std::size_t n = pred.value().size();
    float total = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const float d = pred.value()[i] - target.value()[i];
        total += d * d;
    }
    const float inv = 1.0f / static_cast<float>(n);
    return pred.tape().record(Tensor::scalar(total * inv), {pred, target},
                              [pred, target, n, inv](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const float d = 2.0f * inv * g[0] * (pred.value()[i] - target.value()[i]);
                                      if (s[0]) (*s[0])[i] += d;
                                      if (s[1]) (*s[1])[i] -= d;
                                  }
                              });
}

Var mae_loss(const Var& pred, const Var& target) {
    require_same_shape(pred.value(), target.value(), "mae_loss");
    const std::size_t n = pred.value().size();
    float total = 0.0f;
    for (std::size_t i = 0; i < n; ++i) total += std::fabs(pred.value()[i] - target.value()[i]);
    const float inv = 1.0f / static_cast<float>(n);
    return pred.tape().record(Tensor::scalar(total * inv), {pred, target},
                              [pred, target, n, inv](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const float diff = pred.value()[i] - target.value()[i];
                                      const float sign = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
                                      if (s[0]) (*s[0])[i] += inv * g[0] * sign;
                                      if (s[1]) (*s[1])[i] -= inv * g[0] * sign;
                                  }
                              });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    require(lv.rank() == 2 && lv.dim(0) == labels.size(), ErrorKind::dimension,
            "cross_entropy: logits " + shape_string(lv.shape()) + " vs " + std::to_string(labels.size()) + " labels");
    const std::size_t batch = lv.dim(0), classes = lv.dim(1);
    Tensor probs({batch, classes});
    float total = 0.0f;
    for (std::size_t n = 0; n < batch; ++n) {
        const int y = labels[n];
        require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorKind::contract, "cross_entropy: label out of range");
        const float* row = lv.ptr() + n * classes;
        const float mx = *std::max_element(row, row + classes);
        float z = 0.0f;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        const float log_z = std::log(z) + mx;
        for (std::size_t c = 0; c < classes; ++c) probs[n * classes + c] = std::exp(row[c] - log_z);
        total += log_z - row[y];
    }
    std::vector<int> ys(labels.begin(), labels.end());
    const float inv = 1.0f / static_cast<float>(batch);
    return logits.tape().record(
        Tensor::scalar(total * inv), {logits},
        [probs = std::move(probs), ys = std::move(ys), batch, classes, inv](const Tensor&, const Tensor& g,
                                                                            std::span<Tensor* const> s) {
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < classes; ++c) {
                    float d = probs[n * classes + c] - (static_cast<int>(c) == ys[n] ? 1.0f : 0.0f);
                    (*s[0])[n * classes + c] += g[0] * inv * d;
                }
        });
}

Var hinge_loss(const Var& scores, std::span<const float> signs) {
    const Tensor& sv = scores.value();
    require(sv.size() == signs.size() && sv.shape()[0] == signs.size(), ErrorKind::dimension,
            "hinge_loss: scores " + shape_string(sv.shape()) + " vs " + std::to_string(signs.size()) + " labels");
    const std::size_t n = sv.size();
    float total = 0.0f;
    std::vector<float> ys(signs.begin(), signs.end());
    for (std::size_t i = 0; i < n; ++i) {
        require(ys[i] == 1.0f || ys[i] == -1.0f, ErrorKind::contract, "hinge_loss: labels must be -1 or +1");
        total += std::max(0.0f, 1.0f - ys[i] * sv[i]);
    }
    const float inv = 1.0f / static_cast<float>(n);
    return scores.tape().record(Tensor::scalar(total * inv), {scores},
                                [scores, ys = std::move(ys), n, inv](const Tensor&, const Tensor& g,
                                                                     std::span<Tensor* const> s) {
                                    for (std::size_t i = 0; i < n; ++i)
                                        if (1.0f - ys[i] * scores.value()[i] > 0.0f) (*s[0])[i] -= g[0] * inv * ys[i];
                                });
}

Var l1(const Var& x) {
    float total = 0.0f;
    for (float v : x.value().data()) total += std::fabs(v);
    return x.tape().record(Tensor::scalar(total), {x}, [x](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        const Tensor& xv = x.value();
        for (std::size_t i = 0; i < xv.size(); ++i)
            (*s[0])[i] += g[0] * (xv[i] > 0.0f ? 1.0f : (xv[i] < 0.0f ? -1.0f : 0.0f));
    });
}

Var l2(const Var& x) {
    float total = 0.0f;
    for (float v : x.value().data()) total += v * v;
    return x.tape().record(Tensor::scalar(total), {x}, [x](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        const Tensor& xv = x.value();
        for (std::size_t i = 0; i < xv.size(); ++i) (*s[0])[i] += 2.0f * g[0] * xv[i];
    });
}

Var kl_divergence(const Var& p_logits, const Var& q_logits) {
    require_same_shape(p_logits.value(), q_logits.value(), "kl_divergence");
    require(p_logits.value().rank() == 2, ErrorKind::dimension, "kl_divergence expects [B, C] logits");
    const std::size_t batch = p_logits.value().dim(0), classes = p_logits.value().dim(1);
    auto softmax_rows = [&](const Tensor& t) {
        Tensor out(t.shape());
        for (std::size_t n = 0; n < batch; ++n) {
            const float* row = t.ptr() + n * classes;
            const float mx = *std::max_element(row, row + classes);
            float z = 0.0f;
            for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
            for (std::size_t c = 0; c < classes; ++c) out[n * classes + c] = std::exp(row[c] - mx) / z;
        }
        return out;
    };
    Tensor p = softmax_rows(p_logits.value());
    Tensor q = softmax_rows(q_logits.value());
    const float inv = 1.0f / static_cast<float>(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pf = std::max(p[i], kProbFloor), qf = std::max(q[i], kProbFloor);
        total += p[i] * (std::log(pf) - std::log(qf));
    }
    // rounding can leave a tiny negative sum when p and q nearly agree
    return p_logits.tape().record(
        Tensor::scalar(static_cast<float>(std::max(total, 0.0)) * inv), {p_logits, q_logits},
        [p = std::move(p), q = std::move(q), batch, classes, inv](const Tensor&, const Tensor& g,
                                                                  std::span<Tensor* const> s) {
            for (std::size_t n = 0; n < batch; ++n) {
                const std::size_t base = n * classes;
                if (s[0]) {
                    // d/dp_logit of sum_c p_c (log p_c - log q_c), with the floor's zero derivative below 1e-12.
                    float mean_term = 0.0f;
                    std::vector<float> t(classes);
                    for (std::size_t c = 0; c < classes; ++c) {
                        const float pc = p[base + c];
                        const float dlog = pc > kProbFloor ? 1.0f : 0.0f;
                        t[c] = std::log(std::max(pc, kProbFloor)) - std::log(std::max(q[base + c], kProbFloor)) + dlog;
                        mean_term += pc * t[c];
                    }
                    for (std::size_t c = 0; c < classes; ++c)
                        (*s[0])[base + c] += g[0] * inv * p[base + c] * (t[c] - mean_term);
                }
                if (s[1]) {
                    // d/dq_logit_c of -sum_k p_k log q_k = q_c * sum_k p_k - p_c (floor-aware).
                    float mass = 0.0f;
                    for (std::size_t k = 0; k < classes; ++k)
                        if (q[base + k] > kProbFloor) mass += p[base + k];
                    for (std::size_t c = 0; c < classes; ++c) {
                        const float own = q[base + c] > kProbFloor ? p[base + c] : 0.0f;
                        (*s[1])[base + c] += g[0] * inv * (q[base + c] * mass - own);
                    }
                }
            }
        });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require(xv.rank() == 4 && wv.rank() == 4 && wv.dim(1) == xv.dim(1) && wv.dim(2) == wv.dim(3), ErrorKind::dimension,
            "conv2d: input " + shape_string(xv.shape()) + " incompatible with weight " + shape_string(wv.shape()));
    require(stride >= 1, ErrorKind::dimension, "conv2d: stride must be >= 1");
    ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), 0, 0,
                   stride,    stride,    padding,   padding};
    require(g.h + 2 * padding >= g.kh && g.w + 2 * padding >= g.kw, ErrorKind::dimension, "conv2d: kernel larger than input");
    g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
    g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
    check_bias(bias, g.co, "conv2d");
    return conv_generic(x, weight, bias, g, {g.n, g.co, g.oh, g.ow});
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, std::size_t padding) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require(xv.rank() == 3 && wv.rank() == 3 && wv.dim(1) == xv.dim(1), ErrorKind::dimension,
            "conv1d: input " + shape_string(xv.shape()) + " incompatible with weight " + shape_string(wv.shape()));
    ConvGeometry g{xv.dim(0), xv.dim(1), 1, xv.dim(2), wv.dim(0), 1, wv.dim(2), 1, 0, 1, 1, 0, padding};
    require(g.w + 2 * padding >= g.kw, ErrorKind::dimension, "conv1d: kernel larger than input");
    g.ow = g.w + 2 * padding - g.kw + 1;
    check_bias(bias, g.co, "conv1d");
    return conv_generic(x, weight, bias, g, {g.n, g.co, g.ow});
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require(xv.rank() == 4 && wv.rank() == 4 && wv.dim(0) == xv.dim(1) && wv.dim(2) == wv.dim(3), ErrorKind::dimension,
            "conv_transpose2d: input " + shape_string(xv.shape()) + " incompatible with weight " +
                shape_string(wv.shape()));
    const std::size_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const std::size_t co = wv.dim(1), k = wv.dim(2);
    require(stride >= 1 && (h - 1) * stride + k > 2 * padding && (w - 1) * stride + k > 2 * padding,
            ErrorKind::dimension, "conv_transpose2d: padding consumes the whole output");
    const std::size_t oh = (h - 1) * stride + k - 2 * padding;
    const std::size_t ow = (w - 1) * stride + k - 2 * padding;
    check_bias(bias, co, "conv_transpose2d");

    // Each input pixel contributes a [co, k, k] patch: cols = X^T W, then scatter (col2im).
    const std::size_t hw = h * w, rows = n * hw, patch = co * k * k;
    auto to_rows = [=](const float* src, float* dst) {  // NCHW -> [n*h*w, ci]
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t c = 0; c < ci; ++c)
                for (std::size_t p = 0; p < hw; ++p) dst[(b * hw + p) * ci + c] = src[(b * ci + c) * hw + p];
    };
    // (col index, output index) within one sample for every tap landing inside the output
    std::vector<std::pair<std::size_t, std::size_t>> taps;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t a = 0; a < k; ++a) {
                    const long oy = static_cast<long>(y * stride + a) - static_cast<long>(padding);
                    if (oy < 0 || oy >= static_cast<long>(oh)) continue;
                    for (std::size_t e = 0; e < k; ++e) {
                        const long ox = static_cast<long>(xx * stride + e) - static_cast<long>(padding);
                        if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                        taps.emplace_back((y * w + xx) * patch + (o * k + a) * k + e, (o * oh + oy) * ow + ox);
                    }
                }
    const std::size_t out_size = co * oh * ow;
    auto for_each_tap = [n, hw, patch, out_size, taps = std::move(taps)](auto&& visit) {
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t col0 = b * hw * patch, out0 = b * out_size;
            for (const auto& [col, oi] : taps) visit(col0 + col, out0 + oi);
        }
    };

    std::vector<float> xrows(rows * ci), cols(rows * patch, 0.0f);
    to_rows(xv.ptr(), xrows.data());
    gemm_nn(xrows.data(), wv.ptr(), cols.data(), rows, ci, patch);
    Tensor out({n, co, oh, ow});
    float* op = out.ptr();
    for_each_tap([&](std::size_t col, std::size_t oi) { op[oi] += cols[col]; });
    if (bias.valid()) {
        const Tensor& bv = bias.value();
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t i = 0; i < oh * ow; ++i) op[((b * co + o) * oh) * ow + i] += bv[o];
    }

    return x.tape().record(std::move(out), {x, weight, bias},
                           [=, xrows = std::move(xrows)](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                               if (s[0] || s[1]) {
                                   std::vector<float> gcols(rows * patch, 0.0f);
                                   const float* gp = g.ptr();
                                   for_each_tap([&](std::size_t col, std::size_t oi) { gcols[col] = gp[oi]; });
                                   if (s[0]) {
                                       std::vector<float> gx(rows * ci, 0.0f);
                                       gemm_nt(gcols.data(), weight.value().ptr(), gx.data(), rows, ci, patch);
                                       float* dst = s[0]->ptr();
                                       for (std::size_t b = 0; b < n; ++b)
                                           for (std::size_t c = 0; c < ci; ++c)
                                               for (std::size_t p = 0; p < hw; ++p)
                                                   dst[(b * ci + c) * hw + p] += gx[(b * hw + p) * ci + c];
                                   }
                                   if (s[1]) gemm_tn(xrows.data(), gcols.data(), s[1]->ptr(), rows, ci, patch);
                               }
                               if (s[2])
                                   for (std::size_t b = 0; b < n; ++b)
                                       for (std::size_t o = 0; o < co; ++o) {
                                           float acc = 0.0f;
                                           for (std::size_t i = 0; i < oh * ow; ++i) acc += g[((b * co + o) * oh) * ow + i];
                                           (*s[2])[o] += acc;
                                       }
                           });
}

Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4 && kernel >= 1 && stride >= 1 && xv.dim(2) >= kernel && xv.dim(3) >= kernel,
            ErrorKind::dimension, "max_pool2d: bad input " + shape_string(xv.shape()));
    const std::size_t n = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
    Tensor out({xv.dim(0), xv.dim(1), oh, ow});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                std::size_t best = p * h * w + (y * stride) * w + xx * stride;
                for (std::size_t a = 0; a < kernel; ++a)
                    for (std::size_t b = 0; b < kernel; ++b) {
                        const std::size_t idx = p * h * w + (y * stride + a) * w + xx * stride + b;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const std::size_t oi = (p * oh + y) * ow + xx;
                out[oi] = xv[best];
                argmax[oi] = best;
            }
    return x.tape().record(std::move(out), {x},
                           [argmax = std::move(argmax)](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*s[0])[argmax[i]] += g[i];
                           });
}

}  // namespace ladder::ops

namespace ladder {

Var forward_op(OpKind kind, std::span<const Var> in, const OpParams& p) {
    auto need = [&](std::size_t count) {
        require(in.size() >= count, ErrorKind::contract, "forward_op: missing inputs");
    };
    auto opt = [&](std::size_t i) { return i < in.size() ? in[i] : Var(); };
    switch (kind) {
        case OpKind::matmul: need(2); return ops::matmul(in[0], in[1]);
        case OpKind::conv2d: need(2); return ops::conv2d(in[0], in[1], opt(2), p.stride, p.padding);
        case OpKind::conv1d: need(2); return ops::conv1d(in[0], in[1], opt(2), p.padding);
        case OpKind::transpose_conv2d: need(2); return ops::conv_transpose2d(in[0], in[1], opt(2), p.stride, p.padding);
        case OpKind::add: need(2); return ops::add(in[0], in[1]);
        case OpKind::mul: need(2); return ops::mul(in[0], in[1]);
        case OpKind::relu: need(1); return ops::relu(in[0]);
        case OpKind::tanh: need(1); return ops::tanh(in[0]);
        case OpKind::sigmoid: need(1); return ops::sigmoid(in[0]);
        case OpKind::softmax: need(1); return ops::softmax(in[0], p.axis);
        case OpKind::mean_squared_error: need(2); return ops::mse_loss(in[0], in[1]);
        case OpKind::cross_entropy_with_logits: need(1); return ops::cross_entropy(in[0], p.labels);
        case OpKind::hinge: need(1); return ops::hinge_loss(in[0], p.signs);
        case OpKind::l1: need(1); return ops::l1(in[0]);
        case OpKind::l2: need(1); return ops::l2(in[0]);
        case OpKind::reshape: need(1); return ops::reshape(in[0], p.shape);
        case OpKind::max_pool: need(1); return ops::max_pool2d(in[0], p.kernel, p.stride);
    }
    fail(ErrorKind::contract, "forward_op: unknown op kind");
}

}  // namespace ladder

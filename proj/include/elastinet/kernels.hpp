#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "elastinet/tensor.hpp"

// Shape-checked reference kernels. Every forward has a matching backward,
// and both are templated on the scalar so gradient checks can run the exact
// same code in double precision.

namespace elastinet::nn {

inline int conv_out_extent(int in, int k, int stride, int pad) {
    int out = (in + 2 * pad - k) / stride + 1;
    if (out <= 0) {
        throw std::invalid_argument("conv: output extent would be nonpositive (in=" + std::to_string(in) +
                                    " k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                                    " pad=" + std::to_string(pad) + ")");
    }
    return out;
}

// ---------------------------------------------------------------- fully connected

template <typename S>
BasicTensor<S> fc_forward(const BasicTensor<S>& x, const BasicTensor<S>& w, const BasicTensor<S>* b) {
    if (x.rank() != 2) throw std::invalid_argument("fc: input must be [N,in]");
    if (w.rank() != 2) throw std::invalid_argument("fc: weight must be [out,in]");
    int n = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in) throw std::invalid_argument("fc: weight expects in=" + std::to_string(w.dim(1)) +
                                                    " but input has " + std::to_string(in));
    if (b && (b->rank() != 1 || b->dim(0) != out)) throw std::invalid_argument("fc: bias must be [out]");
    BasicTensor<S> y({n, out});
    for (int i = 0; i < n; ++i) {
        const S* xr = x.data.data() + static_cast<std::size_t>(i) * in;
        S* yr = y.data.data() + static_cast<std::size_t>(i) * out;
        for (int o = 0; o < out; ++o) {
            S acc = b ? b->data[o] : S(0);
            const S* wr = w.data.data() + static_cast<std::size_t>(o) * in;
            for (int j = 0; j < in; ++j) acc += xr[j] * wr[j];
            yr[o] = acc;
        }
    }
    return y;
}

template <typename S>
struct FcGrads {
    BasicTensor<S> gx, gw, gb;
};

template <typename S>
FcGrads<S> fc_backward(const BasicTensor<S>& x, const BasicTensor<S>& w, bool has_bias,
                       const BasicTensor<S>& gy) {
    int n = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (gy.rank() != 2 || gy.dim(0) != n || gy.dim(1) != out) {
        throw std::invalid_argument("fc backward: upstream gradient shape mismatch");
    }
    FcGrads<S> g;
    g.gx = BasicTensor<S>({n, in});
    g.gw = BasicTensor<S>({out, in});
    if (has_bias) g.gb = BasicTensor<S>({out});
    for (int i = 0; i < n; ++i) {
        const S* xr = x.data.data() + static_cast<std::size_t>(i) * in;
        const S* gyr = gy.data.data() + static_cast<std::size_t>(i) * out;
        S* gxr = g.gx.data.data() + static_cast<std::size_t>(i) * in;
        for (int o = 0; o < out; ++o) {
            S go = gyr[o];
            const S* wr = w.data.data() + static_cast<std::size_t>(o) * in;
            S* gwr = g.gw.data.data() + static_cast<std::size_t>(o) * in;
            for (int j = 0; j < in; ++j) {
                gxr[j] += go * wr[j];
                gwr[j] += go * xr[j];
            }
            if (has_bias) g.gb.data[o] += go;
        }
    }
    return g;
}

// ---------------------------------------------------------------- grouped conv2d

template <typename S>
void conv2d_check(const BasicTensor<S>& x, const BasicTensor<S>& w, const BasicTensor<S>* b, int stride,
                  int pad, int groups) {
    if (x.rank() != 4) throw std::invalid_argument("conv: input must be [N,C,H,W]");
    if (w.rank() != 4) throw std::invalid_argument("conv: weight must be [F,C/groups,k,k]");
    if (stride < 1 || pad < 0 || groups < 1) throw std::invalid_argument("conv: bad stride/pad/groups");
    int c = x.dim(1), f = w.dim(0);
    if (c % groups != 0 || f % groups != 0) {
        throw std::invalid_argument("conv: channels not divisible by groups (C=" + std::to_string(c) +
                                    " F=" + std::to_string(f) + " groups=" + std::to_string(groups) + ")");
    }
    if (w.dim(1) != c / groups) {
        throw std::invalid_argument("conv: weight expects C/groups=" + std::to_string(w.dim(1)) +
                                    " but input gives " + std::to_string(c / groups));
    }
    if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv: kernel must be square");
    if (b && (b->rank() != 1 || b->dim(0) != f)) throw std::invalid_argument("conv: bias must be [F]");
}

template <typename S>
BasicTensor<S> conv2d_forward(const BasicTensor<S>& x, const BasicTensor<S>& w, const BasicTensor<S>* b,
                              int stride, int pad, int groups) {
    conv2d_check(x, w, b, stride, pad, groups);
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int f = w.dim(0), k = w.dim(2);
    int oh = conv_out_extent(h, k, stride, pad);
    int ow = conv_out_extent(wd, k, stride, pad);
    int cg = c / groups, fg = f / groups;
    BasicTensor<S> y({n, f, oh, ow});
    for (int ni = 0; ni < n; ++ni) {
        for (int fi = 0; fi < f; ++fi) {
            int c0 = (fi / fg) * cg;
            const S* wf = w.data.data() + static_cast<std::size_t>(fi) * cg * k * k;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    S acc = b ? b->data[fi] : S(0);
                    for (int cc = 0; cc < cg; ++cc) {
                        const S* xc = x.data.data() + ((static_cast<std::size_t>(ni) * c + c0 + cc) * h) * wd;
                        const S* wc = wf + static_cast<std::size_t>(cc) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= wd) continue;
                                acc += xc[static_cast<std::size_t>(iy) * wd + ix] * wc[ky * k + kx];
                            }
                        }
                    }
                    y.data[((static_cast<std::size_t>(ni) * f + fi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

template <typename S>
struct ConvGrads {
    BasicTensor<S> gx, gw, gb;
};

template <typename S>
ConvGrads<S> conv2d_backward(const BasicTensor<S>& x, const BasicTensor<S>& w, bool has_bias, int stride,
                             int pad, int groups, const BasicTensor<S>& gy) {
    conv2d_check(x, w, static_cast<const BasicTensor<S>*>(nullptr), stride, pad, groups);
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int f = w.dim(0), k = w.dim(2);
    int oh = conv_out_extent(h, k, stride, pad);
    int ow = conv_out_extent(wd, k, stride, pad);
    if (gy.rank() != 4 || gy.dim(0) != n || gy.dim(1) != f || gy.dim(2) != oh || gy.dim(3) != ow) {
        throw std::invalid_argument("conv backward: upstream gradient shape mismatch");
    }
    int cg = c / groups, fg = f / groups;
    ConvGrads<S> g;
    g.gx = BasicTensor<S>({n, c, h, wd});
    g.gw = BasicTensor<S>({f, cg, k, k});
    if (has_bias) g.gb = BasicTensor<S>({f});
    for (int ni = 0; ni < n; ++ni) {
        for (int fi = 0; fi < f; ++fi) {
            int c0 = (fi / fg) * cg;
            const S* wf = w.data.data() + static_cast<std::size_t>(fi) * cg * k * k;
            S* gwf = g.gw.data.data() + static_cast<std::size_t>(fi) * cg * k * k;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    S go = gy.data[((static_cast<std::size_t>(ni) * f + fi) * oh + oy) * ow + ox];
                    if (has_bias) g.gb.data[fi] += go;
                    for (int cc = 0; cc < cg; ++cc) {
                        std::size_t xoff = ((static_cast<std::size_t>(ni) * c + c0 + cc) * h) * wd;
                        const S* xc = x.data.data() + xoff;
                        S* gxc = g.gx.data.data() + xoff;
                        const S* wc = wf + static_cast<std::size_t>(cc) * k * k;
                        S* gwc = gwf + static_cast<std::size_t>(cc) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= wd) continue;
                                gxc[static_cast<std::size_t>(iy) * wd + ix] += go * wc[ky * k + kx];
                                gwc[ky * k + kx] += go * xc[static_cast<std::size_t>(iy) * wd + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------- elementwise and pooling

template <typename S>
BasicTensor<S> relu_forward(const BasicTensor<S>& x) {
    BasicTensor<S> y = x;
    for (S& v : y.data) v = v > S(0) ? v : S(0);
    return y;
}

template <typename S>
BasicTensor<S> relu_backward(const BasicTensor<S>& x, const BasicTensor<S>& gy) {
    if (!x.same_shape(gy)) throw std::invalid_argument("relu backward: shape mismatch");
    BasicTensor<S> gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
        if (!(x.data[i] > S(0))) gx.data[i] = S(0);
    }
    return gx;
}

// Adaptive average pool with a 1x1 target: collapses each channel plane.
template <typename S>
BasicTensor<S> global_avgpool_forward(const BasicTensor<S>& x) {
    if (x.rank() != 4) throw std::invalid_argument("avgpool: input must be [N,C,H,W]");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    BasicTensor<S> y({n, c, 1, 1});
    S inv = S(1) / static_cast<S>(h * w);
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const S* p = x.data.data() + ((static_cast<std::size_t>(ni) * c + ci) * h) * w;
            S acc = S(0);
            for (int i = 0; i < h * w; ++i) acc += p[i];
            y.data[static_cast<std::size_t>(ni) * c + ci] = acc * inv;
        }
    }
    return y;
}

template <typename S>
BasicTensor<S> global_avgpool_backward(const std::vector<int>& in_shape, const BasicTensor<S>& gy) {
    if (in_shape.size() != 4) throw std::invalid_argument("avgpool backward: input shape must be rank 4");
    int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
    if (gy.rank() != 4 || gy.dim(0) != n || gy.dim(1) != c || gy.dim(2) != 1 || gy.dim(3) != 1) {
        throw std::invalid_argument("avgpool backward: upstream gradient shape mismatch");
    }
    BasicTensor<S> gx({n, c, h, w});
    S inv = S(1) / static_cast<S>(h * w);
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            S go = gy.data[static_cast<std::size_t>(ni) * c + ci] * inv;
            S* p = gx.data.data() + ((static_cast<std::size_t>(ni) * c + ci) * h) * w;
            for (int i = 0; i < h * w; ++i) p[i] = go;
        }
    }
    return gx;
}

// ---------------------------------------------------------------- dropout

inline std::vector<std::uint8_t> make_dropout_mask(std::int64_t numel, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(numel));
    for (auto& m : mask) m = rng.uniform() >= p ? 1 : 0;
    return mask;
}

// Inverted dropout: kept units are scaled by 1/(1-p) so eval needs no rescale.
template <typename S>
BasicTensor<S> dropout_forward(const BasicTensor<S>& x, const std::vector<std::uint8_t>& mask, double p) {
    if (static_cast<std::int64_t>(mask.size()) != x.numel()) {
        throw std::invalid_argument("dropout: mask size mismatch");
    }
    BasicTensor<S> y = x;
    S scale = S(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = mask[i] ? y.data[i] * scale : S(0);
    return y;
}

template <typename S>
BasicTensor<S> dropout_backward(const BasicTensor<S>& gy, const std::vector<std::uint8_t>& mask, double p) {
    if (static_cast<std::int64_t>(mask.size()) != gy.numel()) {
        throw std::invalid_argument("dropout backward: mask size mismatch");
    }
    BasicTensor<S> gx = gy;
    S scale = S(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] = mask[i] ? gx.data[i] * scale : S(0);
    return gx;
}

// ---------------------------------------------------------------- channel shuffle

// Reorders channels by transposing a (groups, C/groups) view. Its inverse is
// a shuffle with C/groups groups, which is exactly what backward uses.
template <typename S>
BasicTensor<S> channel_shuffle_forward(const BasicTensor<S>& x, int groups) {
    if (x.rank() != 4) throw std::invalid_argument("shuffle: input must be [N,C,H,W]");
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (groups < 1 || c % groups != 0) {
        throw std::invalid_argument("shuffle: C=" + std::to_string(c) + " not divisible by groups=" +
                                    std::to_string(groups));
    }
    int m = c / groups;
    BasicTensor<S> y({n, c, h, w});
    std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
        for (int gi = 0; gi < groups; ++gi) {
            for (int mi = 0; mi < m; ++mi) {
                int src = gi * m + mi;
                int dst = mi * groups + gi;
                const S* ps = x.data.data() + (static_cast<std::size_t>(ni) * c + src) * plane;
                S* pd = y.data.data() + (static_cast<std::size_t>(ni) * c + dst) * plane;
                std::copy(ps, ps + plane, pd);
            }
        }
    }
    return y;
}

template <typename S>
BasicTensor<S> channel_shuffle_backward(const BasicTensor<S>& gy, int groups) {
    int c = gy.dim(1);
    if (groups < 1 || c % groups != 0) throw std::invalid_argument("shuffle backward: bad groups");
    return channel_shuffle_forward(gy, c / groups);
}

// ---------------------------------------------------------------- softmax cross entropy

template <typename S>
struct XentResult {
    double loss = 0.0;                    // mean over the batch
    BasicTensor<S> dlogits;               // gradient of the mean loss
    std::vector<double> confidence;       // max softmax probability per sample
    std::vector<int> predicted;           // argmax class per sample
};

template <typename S>
XentResult<S> softmax_cross_entropy(const BasicTensor<S>& logits, const std::vector<int>& labels,
                                    bool want_grad = true) {
    if (logits.rank() != 2) throw std::invalid_argument("xent: logits must be [N,K]");
    int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("xent: label count mismatch");
    XentResult<S> r;
    if (want_grad) r.dlogits = BasicTensor<S>({n, k});
    r.confidence.resize(n);
    r.predicted.resize(n);
    double total = 0.0;
    std::vector<double> prob(k);
    for (int i = 0; i < n; ++i) {
        int label = labels[i];
        if (label < 0 || label >= k) throw std::invalid_argument("xent: label out of range");
        const S* row = logits.data.data() + static_cast<std::size_t>(i) * k;
        double mx = row[0];
        int arg = 0;
        for (int j = 1; j < k; ++j) {
            if (row[j] > mx) {
                mx = row[j];
                arg = j;
            }
        }
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
            prob[j] = std::exp(static_cast<double>(row[j]) - mx);
            z += prob[j];
        }
        double conf = 0.0;
        for (int j = 0; j < k; ++j) {
            prob[j] /= z;
            if (prob[j] > conf) conf = prob[j];
        }
        r.confidence[i] = conf;
        r.predicted[i] = arg;
        total += -std::log(std::max(prob[label], 1e-300));
        if (want_grad) {
            S* drow = r.dlogits.data.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) {
                drow[j] = static_cast<S>((prob[j] - (j == label ? 1.0 : 0.0)) / n);
            }
        }
    }
    r.loss = total / n;
    return r;
}

}  // namespace elastinet::nn

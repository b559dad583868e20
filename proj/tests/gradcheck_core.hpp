#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "elastinet/kernels.hpp"

// Central finite-difference gradient checks over the double-precision
// kernels, one block per layer kind. Shared by the unit suite (few random
// instances) and the acceptance run (many).

namespace gradcheck {

using elastinet::nn::BasicTensor;
using elastinet::nn::Rng;
using DT = BasicTensor<double>;

inline DT rand_t(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DT t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero so ReLU's kink never sits inside the
// finite-difference stencil.
inline DT rand_off_zero(std::vector<int> shape, Rng& rng) {
    DT t(std::move(shape));
    for (double& v : t.data) {
        double mag = rng.uniform(0.1, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline int check_fd(std::vector<double>& x, const std::vector<double>& analytic,
                    const std::function<double()>& loss, const std::string& what, std::string* detail,
                    double h = 1e-3, double tol = 1e-4) {
    int bad = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + h;
        double lp = loss();
        x[i] = orig - h;
        double lm = loss();
        x[i] = orig;
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
        double re = std::abs(analytic[i] - fd) / denom;
        if (re >= tol) {
            ++bad;
            if (detail && detail->empty()) {
                std::ostringstream os;
                os << what << " coord " << i << ": analytic " << analytic[i] << " vs finite-diff " << fd;
                *detail = os.str();
            }
        }
    }
    return bad;
}

// Runs `instances` random instances per layer kind. Returns the number of
// failing coordinates (0 = all pass); `detail` receives the first offender.
inline int run_gradchecks(int instances, std::string* detail = nullptr) {
    namespace nn = elastinet::nn;
    int bad = 0;

    for (int inst = 0; inst < instances; ++inst) {
        {  // fc
            Rng rng(1000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({2, 5}, rng), w = rand_t({3, 5}, rng), b = rand_t({3}, rng);
            DT r = rand_t({2, 3}, rng);
            auto loss = [&]() {
                DT y = nn::fc_forward(x, w, &b);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            auto g = nn::fc_backward(x, w, true, r);
            bad += check_fd(x.data, g.gx.data, loss, "fc.x", detail);
            bad += check_fd(w.data, g.gw.data, loss, "fc.w", detail);
            bad += check_fd(b.data, g.gb.data, loss, "fc.b", detail);
        }
        {  // relu
            Rng rng(2000 + static_cast<std::uint64_t>(inst));
            DT x = rand_off_zero({2, 7}, rng);
            DT r = rand_t({2, 7}, rng);
            auto loss = [&]() {
                DT y = nn::relu_forward(x);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            DT gx = nn::relu_backward(x, r);
            bad += check_fd(x.data, gx.data, loss, "relu.x", detail);
        }
        {  // conv2d, stride/pad randomized
            Rng rng(3000 + static_cast<std::uint64_t>(inst));
            int stride = rng.uniform() < 0.5 ? 1 : 2;
            int pad = rng.uniform() < 0.5 ? 0 : 1;
            DT x = rand_t({1, 3, 5, 5}, rng), w = rand_t({2, 3, 3, 3}, rng), b = rand_t({2}, rng);
            int oh = nn::conv_out_extent(5, 3, stride, pad);
            DT r = rand_t({1, 2, oh, oh}, rng);
            auto loss = [&]() {
                DT y = nn::conv2d_forward(x, w, &b, stride, pad, 1);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            auto g = nn::conv2d_backward(x, w, true, stride, pad, 1, r);
            bad += check_fd(x.data, g.gx.data, loss, "conv.x", detail);
            bad += check_fd(w.data, g.gw.data, loss, "conv.w", detail);
            bad += check_fd(b.data, g.gb.data, loss, "conv.b", detail);
        }
        {  // depthwise separable: depthwise conv then 1x1 pointwise
            Rng rng(4000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({1, 3, 4, 4}, rng);
            DT wd = rand_t({3, 1, 3, 3}, rng), bd = rand_t({3}, rng);
            DT wp = rand_t({4, 3, 1, 1}, rng), bp = rand_t({4}, rng);
            DT r = rand_t({1, 4, 4, 4}, rng);
            auto loss = [&]() {
                DT mid = nn::conv2d_forward(x, wd, &bd, 1, 1, 3);
                DT y = nn::conv2d_forward(mid, wp, &bp, 1, 0, 1);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            DT mid = nn::conv2d_forward(x, wd, &bd, 1, 1, 3);
            auto gp = nn::conv2d_backward(mid, wp, true, 1, 0, 1, r);
            auto gd = nn::conv2d_backward(x, wd, true, 1, 1, 3, gp.gx);
            bad += check_fd(x.data, gd.gx.data, loss, "dwsep.x", detail);
            bad += check_fd(wd.data, gd.gw.data, loss, "dwsep.w_dw", detail);
            bad += check_fd(bd.data, gd.gb.data, loss, "dwsep.b_dw", detail);
            bad += check_fd(wp.data, gp.gw.data, loss, "dwsep.w_pw", detail);
            bad += check_fd(bp.data, gp.gb.data, loss, "dwsep.b_pw", detail);
        }
        {  // grouped conv + channel shuffle
            Rng rng(5000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({1, 4, 4, 4}, rng);
            DT w = rand_t({4, 2, 3, 3}, rng), b = rand_t({4}, rng);
            DT r = rand_t({1, 4, 4, 4}, rng);
            auto loss = [&]() {
                DT y = nn::conv2d_forward(x, w, &b, 1, 1, 2);
                DT z = nn::channel_shuffle_forward(y, 2);
                double s = 0.0;
                for (std::size_t i = 0; i < z.data.size(); ++i) s += z.data[i] * r.data[i];
                return s;
            };
            DT gy = nn::channel_shuffle_backward(r, 2);
            auto g = nn::conv2d_backward(x, w, true, 1, 1, 2, gy);
            bad += check_fd(x.data, g.gx.data, loss, "grouped.x", detail);
            bad += check_fd(w.data, g.gw.data, loss, "grouped.w", detail);
            bad += check_fd(b.data, g.gb.data, loss, "grouped.b", detail);
        }
        {  // low-rank fc: two stacked fc layers
            Rng rng(6000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({2, 6}, rng);
            DT w1 = rand_t({2, 6}, rng);            // rank 2, no bias
            DT w2 = rand_t({4, 2}, rng), b2 = rand_t({4}, rng);
            DT r = rand_t({2, 4}, rng);
            auto loss = [&]() {
                DT mid = nn::fc_forward(x, w1, static_cast<const DT*>(nullptr));
                DT y = nn::fc_forward(mid, w2, &b2);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            DT mid = nn::fc_forward(x, w1, static_cast<const DT*>(nullptr));
            auto g2 = nn::fc_backward(mid, w2, true, r);
            auto g1 = nn::fc_backward(x, w1, false, g2.gx);
            bad += check_fd(x.data, g1.gx.data, loss, "lowrank_fc.x", detail);
            bad += check_fd(w1.data, g1.gw.data, loss, "lowrank_fc.w1", detail);
            bad += check_fd(w2.data, g2.gw.data, loss, "lowrank_fc.w2", detail);
            bad += check_fd(b2.data, g2.gb.data, loss, "lowrank_fc.b2", detail);
        }
        {  // adaptive average pool
            Rng rng(7000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({1, 3, 4, 4}, rng);
            DT r = rand_t({1, 3, 1, 1}, rng);
            auto loss = [&]() {
                DT y = nn::global_avgpool_forward(x);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            DT gx = nn::global_avgpool_backward(x.shape, r);
            bad += check_fd(x.data, gx.data, loss, "avgpool.x", detail);
        }
        {  // dropout with a fixed mask
            Rng rng(8000 + static_cast<std::uint64_t>(inst));
            DT x = rand_t({3, 10}, rng);
            Rng mask_rng(900 + static_cast<std::uint64_t>(inst));
            auto mask = nn::make_dropout_mask(x.numel(), 0.4, mask_rng);
            DT r = rand_t({3, 10}, rng);
            auto loss = [&]() {
                DT y = nn::dropout_forward(x, mask, 0.4);
                double s = 0.0;
                for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
                return s;
            };
            DT gx = nn::dropout_backward(r, mask, 0.4);
            bad += check_fd(x.data, gx.data, loss, "dropout.x", detail);
        }
        {  // softmax cross entropy straight to the scalar loss
            Rng rng(9000 + static_cast<std::uint64_t>(inst));
            DT logits = rand_t({3, 5}, rng, -2.0, 2.0);
            std::vector<int> labels;
            for (int i = 0; i < 3; ++i) labels.push_back(static_cast<int>(rng.uniform_int(5)));
            auto loss = [&]() { return nn::softmax_cross_entropy(logits, labels, false).loss; };
            auto center = nn::softmax_cross_entropy(logits, labels, true);
            bad += check_fd(logits.data, center.dlogits.data, loss, "xent.logits", detail);
        }
    }
    return bad;
}

}  // namespace gradcheck

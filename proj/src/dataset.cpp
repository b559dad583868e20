#include "elastinet/dataset.hpp"

#include <stdexcept>

namespace elastinet::data {

nn::Tensor Dataset::sample(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("dataset: sample index out of range");
    nn::Tensor out({1, 1, kImageSize, kImageSize});
    const std::size_t plane = static_cast<std::size_t>(kImageSize) * kImageSize;
    std::copy(images.data.begin() + static_cast<std::ptrdiff_t>(i * plane),
              images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane), out.data.begin());
    return out;
}

nn::Tensor Dataset::batch(const std::vector<int>& indices, std::vector<int>* batch_labels) const {
    if (indices.empty()) throw std::invalid_argument("dataset: empty batch");
    nn::Tensor out({static_cast<int>(indices.size()), 1, kImageSize, kImageSize});
    const std::size_t plane = static_cast<std::size_t>(kImageSize) * kImageSize;
    if (batch_labels) batch_labels->clear();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        int i = indices[b];
        if (i < 0 || i >= size()) throw std::out_of_range("dataset: batch index out of range");
        std::copy(images.data.begin() + static_cast<std::ptrdiff_t>(i * plane),
                  images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane),
                  out.data.begin() + static_cast<std::ptrdiff_t>(b * plane));
        if (batch_labels) batch_labels->push_back(labels[i]);
    }
    return out;
}

Dataset make_bars_dataset(int n, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("dataset: n must be positive");
    Dataset ds;
    ds.images = nn::Tensor({n, 1, kImageSize, kImageSize});
    ds.labels.resize(n);
    nn::Rng rng(nn::mix_seed(seed, 0xBA55ULL));
    const int s = kImageSize;
    for (int i = 0; i < n; ++i) {
        int label = i % kNumClasses;
        ds.labels[i] = label;
        float* img = ds.images.data.data() + static_cast<std::size_t>(i) * s * s;
        // Background noise first, bar drawn on top.
        for (int p = 0; p < s * s; ++p) img[p] = static_cast<float>(rng.normal() * 0.30);
        float amp = static_cast<float>(rng.uniform(0.9, 1.4));
        int pos = 2 + static_cast<int>(rng.uniform_int(s - 4));  // bar anchor, away from edges
        int thickness = 2;
        for (int t = 0; t < thickness; ++t) {
            for (int k = 0; k < s; ++k) {
                int y = 0, x = 0;
                switch (label) {
                    case 0:  // horizontal
                        y = pos + t;
                        x = k;
                        break;
                    case 1:  // vertical
                        y = k;
                        x = pos + t;
                        break;
                    case 2:  // main diagonal, shifted
                        y = k;
                        x = k + (pos - s / 2) + t;
                        break;
                    default:  // anti-diagonal, shifted
                        y = k;
                        x = (s - 1 - k) + (pos - s / 2) + t;
                        break;
                }
                if (y < 0 || y >= s || x < 0 || x >= s) continue;
                img[y * s + x] += amp;
            }
        }
    }
    return ds;
}

}  // namespace elastinet::data

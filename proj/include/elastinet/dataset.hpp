#pragma once

#include <cstdint>
#include <vector>

#include "elastinet/tensor.hpp"

namespace elastinet::data {

// Synthetic 4-class dataset of oriented bars on a noisy 1x16x16 canvas.
// Classes: 0 horizontal, 1 vertical, 2 diagonal, 3 anti-diagonal.
struct Dataset {
    nn::Tensor images;        // [N,1,16,16]
    std::vector<int> labels;  // N entries in [0,4)

    int size() const { return static_cast<int>(labels.size()); }

    // Copies sample i into a [1,1,16,16] tensor.
    nn::Tensor sample(int i) const;

    // Copies the given indices into one [B,1,16,16] batch.
    nn::Tensor batch(const std::vector<int>& indices, std::vector<int>* batch_labels) const;
};

constexpr int kImageSize = 16;
constexpr int kNumClasses = 4;

Dataset make_bars_dataset(int n, std::uint64_t seed);

}  // namespace elastinet::data

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace elastinet::nn {

// Dense row-major tensor. The scalar type is a template parameter so the
// same arithmetic can run in float for real workloads and in double for
// numeric gradient checks.
template <typename S>
struct BasicTensor {
    std::vector<int> shape;
    std::vector<S> data;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<int> s)
        : shape(std::move(s)), data(static_cast<std::size_t>(checked_numel(shape)), S(0)) {}

    BasicTensor(std::vector<int> s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != checked_numel(shape)) {
            throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
        }
    }

    static std::int64_t checked_numel(const std::vector<int>& s) {
        if (s.empty()) throw std::invalid_argument("tensor: empty shape");
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension in " + shape_str(s));
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << "]";
        return os.str();
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(std::size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    static BasicTensor zeros(std::vector<int> s) { return BasicTensor(std::move(s)); }

    static BasicTensor full(std::vector<int> s, S v) {
        BasicTensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    bool same_shape(const BasicTensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (S v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename T>
    BasicTensor<T> cast() const {
        BasicTensor<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using Tensor = BasicTensor<float>;
using DTensor = BasicTensor<double>;

// Deterministic RNG built on splitmix64. std::mt19937 plus the standard
// distributions would tie results to the standard library implementation;
// this keeps every sample reproducible from the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller, caching the second draw.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n) by rejection, bias free.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("rng: uniform_int with n == 0");
        std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Independent stream derived from this one's current state and a tag.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t z = state_ ^ (tag * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL);
        return Rng(z);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return z ^ (z >> 31);
}

// FNV-1a over the raw bytes of a float vector. Used to prove that frozen
// parameters stay bitwise identical across training stages.
inline std::uint64_t bytes_digest(const std::vector<float>& v) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
    std::size_t n = v.size() * sizeof(float);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace elastinet::nn

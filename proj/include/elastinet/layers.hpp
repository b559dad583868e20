#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "elastinet/kernels.hpp"
#include "elastinet/tensor.hpp"

namespace elastinet::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

// Per-layer element counts feeding the byte-traffic model. Only layers that
// move weights or feature maps through memory (conv, fc, pool) contribute.
struct LayerMem {
    std::string layer;
    long long in_elems = 0;
    long long out_elems = 0;
    long long weight_elems = 0;
    long long bias_elems = 0;
};

struct CostAccum {
    long long flops = 0;
    long long params = 0;
    std::vector<LayerMem> mem;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& gy) = 0;
    virtual std::string kind_name() const = 0;

    // Registers parameters under prefix; called once at construction time by
    // the owning network so checkpoint names are stable.
    virtual void collect_params(std::vector<Parameter*>& out) = 0;

    virtual std::vector<int> out_shape(const std::vector<int>& in) const = 0;

    // Accumulates analytic cost for a single sample shaped [1,...].
    virtual void add_cost(const std::vector<int>& in, CostAccum& acc) const = 0;

    virtual void set_dropout_seed(std::uint64_t) {}

protected:
    static void check_finite(const Tensor& t, const std::string& who) {
        if (!t.all_finite()) throw std::runtime_error(who + ": non-finite values produced");
    }
};

using LayerPtr = std::unique_ptr<Layer>;

// Kaiming-uniform fan-in initialization, deterministic per rng stream.
void kaiming_init(Tensor& w, int fan_in, Rng& rng);

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int cin, int cout, int k, int stride, int pad, int groups, bool bias, Rng& rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "conv2d"; }
    void collect_params(std::vector<Parameter*>& out) override;
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>& in, CostAccum& acc) const override;

    int cin() const { return cin_; }
    int cout() const { return cout_; }

    Parameter weight;
    std::optional<Parameter> bias;

private:
    int cin_, cout_, k_, stride_, pad_, groups_;
    std::optional<Tensor> cached_x_;
};

class Dense : public Layer {
public:
    Dense(std::string name, int in, int out, bool bias, Rng& rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "fc"; }
    void collect_params(std::vector<Parameter*>& out) override;
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>& in, CostAccum& acc) const override;

    Parameter weight;
    std::optional<Parameter> bias;

private:
    int in_, out_;
    std::optional<Tensor> cached_x_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "relu"; }
    void collect_params(std::vector<Parameter*>&) override {}
    std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }
    void add_cost(const std::vector<int>&, CostAccum&) const override {}

private:
    std::optional<Tensor> cached_x_;
};

class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "adaptive_avg_pool"; }
    void collect_params(std::vector<Parameter*>&) override {}
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>& in, CostAccum& acc) const override;

private:
    std::optional<std::vector<int>> cached_shape_;
};

// Flattens [N,C,1,1] (or any trailing dims) to [N,C*rest] between pool and fc.
class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "flatten"; }
    void collect_params(std::vector<Parameter*>&) override {}
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>&, CostAccum&) const override {}

private:
    std::optional<std::vector<int>> cached_shape_;
};

class Dropout : public Layer {
public:
    explicit Dropout(double p) : p_(p) {
        if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    }

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "dropout"; }
    void collect_params(std::vector<Parameter*>&) override {}
    std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }
    void add_cost(const std::vector<int>&, CostAccum&) const override {}
    void set_dropout_seed(std::uint64_t seed) override { seed_ = seed; }

private:
    double p_;
    std::uint64_t seed_ = 1;
    std::optional<std::vector<std::uint8_t>> cached_mask_;
    bool last_train_ = false;
};

class ChannelShuffle : public Layer {
public:
    explicit ChannelShuffle(int groups) : groups_(groups) {}

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return "channel_shuffle"; }
    void collect_params(std::vector<Parameter*>&) override {}
    std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }
    void add_cost(const std::vector<int>&, CostAccum&) const override {}

private:
    int groups_;
    bool did_forward_ = false;
};

// Sequential composite used by the compression blocks and exit branches.
class Sequential : public Layer {
public:
    explicit Sequential(std::string kind) : kind_(std::move(kind)) {}

    void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& gy) override;
    std::string kind_name() const override { return kind_; }
    void collect_params(std::vector<Parameter*>& out) override;
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>& in, CostAccum& acc) const override;
    void set_dropout_seed(std::uint64_t seed) override;

    const std::vector<LayerPtr>& layers() const { return layers_; }

private:
    std::string kind_;
    std::vector<LayerPtr> layers_;
};

// Compression block builders. All preserve the slot's output shape contract
// of a k x k conv with the given stride/pad.
LayerPtr make_depthwise_separable(const std::string& name, int cin, int cout, int k, int stride, int pad,
                                  Rng& rng);
LayerPtr make_grouped_shuffle(const std::string& name, int cin, int cout, int k, int stride, int pad, Rng& rng);
LayerPtr make_lowrank_conv(const std::string& name, int cin, int cout, int k, int stride, int pad, Rng& rng);
LayerPtr make_lowrank_fc(const std::string& name, int in, int out, int rank, Rng& rng);

int lowrank_default_rank(int d_in, int d_out);

// Momentum SGD with weight decay. Frozen parameters are left bitwise
// untouched; non-finite gradients abort the step before any mutation.
class Sgd {
public:
    Sgd(double lr, double momentum = 0.9, double weight_decay = 5e-4)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(const std::vector<Parameter*>& params);
    static void zero_grad(const std::vector<Parameter*>& params);

private:
    double lr_, momentum_, weight_decay_;
    std::vector<std::pair<Parameter*, std::vector<float>>> velocity_;

    std::vector<float>& velocity_for(Parameter* p);
};

// Little-endian binary checkpoints: magic "ADSC1", then one record per
// parameter (u32 name length, name bytes, u32 dim count, u32 dims, raw
// float32 payload). Round-trips are bit exact.
void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);
void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params);

}  // namespace elastinet::nn

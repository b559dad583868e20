#include "elastinet/layers.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace elastinet::nn {

void kaiming_init(Tensor& w, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw std::invalid_argument("init: fan_in must be positive");
    double bound = std::sqrt(6.0 / fan_in);
    for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int cin, int cout, int k, int stride, int pad, int groups, bool bias, Rng& rng)
    : weight(name + ".weight", Tensor({cout, cin / (groups > 0 ? groups : 1), k, k})),
      cin_(cin),
      cout_(cout),
      k_(k),
      stride_(stride),
      pad_(pad),
      groups_(groups) {
    if (groups < 1 || cin % groups != 0 || cout % groups != 0) {
        throw std::invalid_argument("conv " + name + ": groups=" + std::to_string(groups) +
                                    " does not divide cin=" + std::to_string(cin) + "/cout=" + std::to_string(cout));
    }
    kaiming_init(weight.value, (cin / groups) * k * k, rng);
    if (bias) this->bias.emplace(name + ".bias", Tensor({cout}));
}

Tensor Conv2d::forward(const Tensor& x, bool) {
    if (x.rank() != 4 || x.dim(1) != cin_) {
        throw std::invalid_argument("conv " + weight.name + ": expected input [N," + std::to_string(cin_) +
                                    ",H,W], got " + Tensor::shape_str(x.shape));
    }
    cached_x_ = x;
    Tensor y = conv2d_forward(x, weight.value, bias ? &bias->value : nullptr, stride_, pad_, groups_);
    check_finite(y, "conv " + weight.name);
    return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
    if (!cached_x_) throw std::runtime_error("conv " + weight.name + ": backward before forward");
    auto g = conv2d_backward(*cached_x_, weight.value, bias.has_value(), stride_, pad_, groups_, gy);
    cached_x_.reset();
    if (!weight.frozen) {
        for (std::size_t i = 0; i < g.gw.data.size(); ++i) weight.grad.data[i] += g.gw.data[i];
    }
    if (bias && !bias->frozen) {
        for (std::size_t i = 0; i < g.gb.data.size(); ++i) bias->grad.data[i] += g.gb.data[i];
    }
    check_finite(g.gx, "conv " + weight.name + " backward");
    return std::move(g.gx);
}

void Conv2d::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (bias) out.push_back(&*bias);
}

std::vector<int> Conv2d::out_shape(const std::vector<int>& in) const {
    if (in.size() != 4 || in[1] != cin_) {
        throw std::invalid_argument("conv " + weight.name + ": bad input shape for cost walk");
    }
    return {in[0], cout_, conv_out_extent(in[2], k_, stride_, pad_), conv_out_extent(in[3], k_, stride_, pad_)};
}

void Conv2d::add_cost(const std::vector<int>& in, CostAccum& acc) const {
    auto out = out_shape(in);
    long long positions = static_cast<long long>(out[0]) * out[2] * out[3];
    long long macs = positions * cout_ * (static_cast<long long>(cin_) / groups_) * k_ * k_;
    acc.flops += 2 * macs + (bias ? positions * cout_ : 0);
    long long w = weight.value.numel();
    long long b = bias ? bias->value.numel() : 0;
    acc.params += w + b;
    acc.mem.push_back({kind_name(), static_cast<long long>(in[0]) * in[1] * in[2] * in[3],
                       static_cast<long long>(out[0]) * out[1] * out[2] * out[3], w, b});
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::string name, int in, int out, bool bias, Rng& rng)
    : weight(name + ".weight", Tensor({out, in})), in_(in), out_(out) {
    kaiming_init(weight.value, in, rng);
    if (bias) this->bias.emplace(name + ".bias", Tensor({out}));
}

Tensor Dense::forward(const Tensor& x, bool) {
    if (x.rank() != 2 || x.dim(1) != in_) {
        throw std::invalid_argument("fc " + weight.name + ": expected input [N," + std::to_string(in_) +
                                    "], got " + Tensor::shape_str(x.shape));
    }
    cached_x_ = x;
    Tensor y = fc_forward(x, weight.value, bias ? &bias->value : nullptr);
    check_finite(y, "fc " + weight.name);
    return y;
}

Tensor Dense::backward(const Tensor& gy) {
    if (!cached_x_) throw std::runtime_error("fc " + weight.name + ": backward before forward");
    auto g = fc_backward(*cached_x_, weight.value, bias.has_value(), gy);
    cached_x_.reset();
    if (!weight.frozen) {
        for (std::size_t i = 0; i < g.gw.data.size(); ++i) weight.grad.data[i] += g.gw.data[i];
    }
    if (bias && !bias->frozen) {
        for (std::size_t i = 0; i < g.gb.data.size(); ++i) bias->grad.data[i] += g.gb.data[i];
    }
    check_finite(g.gx, "fc " + weight.name + " backward");
    return std::move(g.gx);
}

void Dense::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (bias) out.push_back(&*bias);
}

std::vector<int> Dense::out_shape(const std::vector<int>& in) const {
    if (in.size() != 2 || in[1] != in_) {
        throw std::invalid_argument("fc " + weight.name + ": bad input shape for cost walk");
    }
    return {in[0], out_};
}

void Dense::add_cost(const std::vector<int>& in, CostAccum& acc) const {
    long long n = in[0];
    acc.flops += n * (2LL * in_ * out_ + (bias ? out_ : 0));
    long long w = weight.value.numel();
    long long b = bias ? bias->value.numel() : 0;
    acc.params += w + b;
    acc.mem.push_back({kind_name(), n * in_, n * out_, w, b});
}

// ---------------------------------------------------------------- stateless layers

Tensor ReLU::forward(const Tensor& x, bool) {
    cached_x_ = x;
    return relu_forward(x);
}

Tensor ReLU::backward(const Tensor& gy) {
    if (!cached_x_) throw std::runtime_error("relu: backward before forward");
    Tensor gx = relu_backward(*cached_x_, gy);
    cached_x_.reset();
    return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
    cached_shape_ = x.shape;
    return global_avgpool_forward(x);
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
    if (!cached_shape_) throw std::runtime_error("avgpool: backward before forward");
    Tensor gx = global_avgpool_backward(*cached_shape_, gy);
    cached_shape_.reset();
    return gx;
}

std::vector<int> GlobalAvgPool::out_shape(const std::vector<int>& in) const {
    if (in.size() != 4) throw std::invalid_argument("avgpool: bad input shape for cost walk");
    return {in[0], in[1], 1, 1};
}

void GlobalAvgPool::add_cost(const std::vector<int>& in, CostAccum& acc) const {
    long long elems = static_cast<long long>(in[0]) * in[1] * in[2] * in[3];
    acc.flops += elems;  // one accumulate per input element
    acc.mem.push_back({kind_name(), elems, static_cast<long long>(in[0]) * in[1], 0, 0});
}

Tensor Flatten::forward(const Tensor& x, bool) {
    cached_shape_ = x.shape;
    int n = x.dim(0);
    int rest = static_cast<int>(x.numel() / n);
    return Tensor({n, rest}, x.data);
}

Tensor Flatten::backward(const Tensor& gy) {
    if (!cached_shape_) throw std::runtime_error("flatten: backward before forward");
    Tensor gx(*cached_shape_, gy.data);
    cached_shape_.reset();
    return gx;
}

std::vector<int> Flatten::out_shape(const std::vector<int>& in) const {
    long long rest = 1;
    for (std::size_t i = 1; i < in.size(); ++i) rest *= in[i];
    return {in[0], static_cast<int>(rest)};
}

Tensor Dropout::forward(const Tensor& x, bool train) {
    last_train_ = train;
    if (!train || p_ == 0.0) {
        cached_mask_ = std::vector<std::uint8_t>();  // marks forward done, identity path
        return x;
    }
    Rng rng(mix_seed(seed_, 0xD60F00ULL));
    cached_mask_ = make_dropout_mask(x.numel(), p_, rng);
    return dropout_forward(x, *cached_mask_, p_);
}

Tensor Dropout::backward(const Tensor& gy) {
    if (!cached_mask_) throw std::runtime_error("dropout: backward before forward");
    Tensor gx = (last_train_ && p_ > 0.0) ? dropout_backward(gy, *cached_mask_, p_) : gy;
    cached_mask_.reset();
    return gx;
}

Tensor ChannelShuffle::forward(const Tensor& x, bool) {
    did_forward_ = true;
    return channel_shuffle_forward(x, groups_);
}

Tensor ChannelShuffle::backward(const Tensor& gy) {
    if (!did_forward_) throw std::runtime_error("shuffle: backward before forward");
    did_forward_ = false;
    return channel_shuffle_backward(gy, groups_);
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Sequential::backward(const Tensor& gy) {
    Tensor cur = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

void Sequential::collect_params(std::vector<Parameter*>& out) {
    for (auto& l : layers_) l->collect_params(out);
}

std::vector<int> Sequential::out_shape(const std::vector<int>& in) const {
    std::vector<int> cur = in;
    for (const auto& l : layers_) cur = l->out_shape(cur);
    return cur;
}

void Sequential::add_cost(const std::vector<int>& in, CostAccum& acc) const {
    std::vector<int> cur = in;
    for (const auto& l : layers_) {
        l->add_cost(cur, acc);
        cur = l->out_shape(cur);
    }
}

void Sequential::set_dropout_seed(std::uint64_t seed) {
    std::uint64_t i = 0;
    for (auto& l : layers_) l->set_dropout_seed(mix_seed(seed, ++i));
}

// ---------------------------------------------------------------- compression blocks

int lowrank_default_rank(int d_in, int d_out) {
    int m = std::min(d_in, d_out);
    return (m + 3) / 4 > 0 ? (m + 3) / 4 : 1;
}

LayerPtr make_depthwise_separable(const std::string& name, int cin, int cout, int k, int stride, int pad,
                                  Rng& rng) {
    auto seq = std::make_unique<Sequential>("depthwise_separable");
    seq->add(std::make_unique<Conv2d>(name + ".dw", cin, cin, k, stride, pad, cin, /*bias=*/false, rng));
    seq->add(std::make_unique<Conv2d>(name + ".pw", cin, cout, 1, 1, 0, 1, /*bias=*/true, rng));
    return seq;
}

LayerPtr make_grouped_shuffle(const std::string& name, int cin, int cout, int k, int stride, int pad, Rng& rng) {
    const int groups = 2;
    if (cin % groups != 0 || cout % groups != 0) {
        throw std::invalid_argument("grouped_shuffle: cin=" + std::to_string(cin) + " cout=" +
                                    std::to_string(cout) + " must be divisible by " + std::to_string(groups));
    }
    auto seq = std::make_unique<Sequential>("grouped_shuffle");
    seq->add(std::make_unique<Conv2d>(name + ".gconv", cin, cout, k, stride, pad, groups, /*bias=*/true, rng));
    seq->add(std::make_unique<ChannelShuffle>(groups));
    return seq;
}

LayerPtr make_lowrank_conv(const std::string& name, int cin, int cout, int k, int stride, int pad, Rng& rng) {
    int rank = lowrank_default_rank(cin, cout);
    auto seq = std::make_unique<Sequential>("lowrank_decomposed");
    seq->add(std::make_unique<Conv2d>(name + ".a", cin, rank, k, stride, pad, 1, /*bias=*/false, rng));
    seq->add(std::make_unique<Conv2d>(name + ".b", rank, cout, 1, 1, 0, 1, /*bias=*/true, rng));
    return seq;
}

LayerPtr make_lowrank_fc(const std::string& name, int in, int out, int rank, Rng& rng) {
    auto seq = std::make_unique<Sequential>("lowrank_fc");
    seq->add(std::make_unique<Dense>(name + ".a", in, rank, /*bias=*/false, rng));
    seq->add(std::make_unique<Dense>(name + ".b", rank, out, /*bias=*/true, rng));
    return seq;
}

// ---------------------------------------------------------------- optimizer

std::vector<float>& Sgd::velocity_for(Parameter* p) {
    for (auto& [param, vel] : velocity_) {
        if (param == p) return vel;
    }
    velocity_.emplace_back(p, std::vector<float>(p->value.data.size(), 0.0f));
    return velocity_.back().second;
}

void Sgd::step(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        if (p->frozen) continue;
        for (float g : p->grad.data) {
            if (!std::isfinite(g)) {
                throw std::runtime_error("sgd: non-finite gradient in " + p->name + ", step aborted");
            }
        }
    }
    for (Parameter* p : params) {
        if (p->frozen) continue;
        auto& vel = velocity_for(p);
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            float g = p->grad.data[i] + static_cast<float>(weight_decay_) * p->value.data[i];
            vel[i] = static_cast<float>(momentum_) * vel[i] + g;
            p->value.data[i] -= static_cast<float>(lr_) * vel[i];
        }
        if (!p->value.all_finite()) {
            throw std::runtime_error("sgd: parameter " + p->name + " became non-finite");
        }
    }
}

void Sgd::zero_grad(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kCheckpointMagic[5] = {'A', 'D', 'S', 'C', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    for (const Parameter* p : params) {
        write_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(out, static_cast<std::uint32_t>(p->value.shape.size()));
        for (int d : p->value.shape) write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.data.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    }
    std::vector<std::pair<std::string, Tensor>> out;
    for (;;) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw std::runtime_error("truncated checkpoint: " + path);
        if (name_len == 0 || name_len > 4096) throw std::runtime_error("corrupt checkpoint record: " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("truncated checkpoint: " + path);
        std::uint32_t dims = read_u32(in, path);
        if (dims == 0 || dims > 8) throw std::runtime_error("corrupt checkpoint record: " + path);
        std::vector<int> shape(dims);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(read_u32(in, path));
            if (d <= 0) throw std::runtime_error("corrupt checkpoint record: " + path);
            numel *= d;
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw std::runtime_error("truncated checkpoint: " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    auto records = read_checkpoint(path);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : records) {
        if (!by_name.emplace(name, &t).second) {
            throw std::runtime_error("duplicate parameter '" + name + "' in checkpoint: " + path);
        }
    }
    if (by_name.size() != params.size()) {
        throw std::runtime_error("checkpoint has " + std::to_string(by_name.size()) + " parameters, network has " +
                                 std::to_string(params.size()) + ": " + path);
    }
    for (Parameter* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint missing parameter '" + p->name + "': " + path);
        if (it->second->shape != p->value.shape) {
            throw std::runtime_error("checkpoint shape mismatch for '" + p->name + "': " + path);
        }
        p->value.data = it->second->data;
    }
}

}  // namespace elastinet::nn

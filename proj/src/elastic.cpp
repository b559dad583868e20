#include "elastinet/elastic.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "elastinet/io.hpp"

namespace elastinet::elastic {

using nn::CostAccum;
using nn::Layer;
using nn::Parameter;
using nn::Rng;
using nn::Tensor;

const std::vector<OperatorKind>& all_operator_kinds() {
    static const std::vector<OperatorKind> kinds = {
        OperatorKind::baseline_conv,
        OperatorKind::depthwise_separable,
        OperatorKind::grouped_shuffle,
        OperatorKind::lowrank_decomposed,
    };
    return kinds;
}

std::string operator_name(OperatorKind k) {
    switch (k) {
        case OperatorKind::baseline_conv: return "baseline_conv";
        case OperatorKind::depthwise_separable: return "depthwise_separable";
        case OperatorKind::grouped_shuffle: return "grouped_shuffle";
        case OperatorKind::lowrank_decomposed: return "lowrank_decomposed";
    }
    throw std::logic_error("unknown operator kind");
}

OperatorKind operator_from_name(const std::string& name) {
    for (OperatorKind k : all_operator_kinds()) {
        if (operator_name(k) == name) return k;
    }
    throw std::invalid_argument("unknown compression operator '" + name + "'");
}

// ---------------------------------------------------------------- arch parsing

namespace {

ArchLayerSpec parse_layer_token(const std::string& token, const std::string& where) {
    auto words = util::split(util::trim(token), ' ');
    std::vector<std::string> parts;
    for (auto& w : words) {
        if (!util::trim(w).empty()) parts.push_back(util::trim(w));
    }
    if (parts.empty()) throw std::invalid_argument(where + ": empty layer entry");
    ArchLayerSpec spec;
    if (parts[0] == "relu") {
        if (parts.size() != 1) throw std::invalid_argument(where + ": relu takes no arguments");
        spec.kind = ArchLayerSpec::Kind::relu;
        return spec;
    }
    if (parts[0] != "conv") {
        throw std::invalid_argument(where + ": unknown layer '" + parts[0] + "' (expected conv or relu)");
    }
    spec.kind = ArchLayerSpec::Kind::conv;
    bool have_out = false, have_pad = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key=value, got '" + parts[i] + "'");
        std::string key = parts[i].substr(0, eq);
        int value = static_cast<int>(util::parse_int(parts[i].substr(eq + 1), where + " " + key));
        if (key == "out") {
            spec.conv.cout = value;
            have_out = true;
        } else if (key == "k") {
            spec.conv.k = value;
        } else if (key == "stride") {
            spec.conv.stride = value;
        } else if (key == "pad") {
            spec.conv.pad = value;
            have_pad = true;
        } else {
            throw std::invalid_argument(where + ": unknown conv argument '" + key + "'");
        }
    }
    if (!have_out) throw std::invalid_argument(where + ": conv requires out=");
    if (!have_pad) spec.conv.pad = spec.conv.k / 2;
    if (spec.conv.cout <= 0 || spec.conv.k <= 0 || spec.conv.stride <= 0 || spec.conv.pad < 0) {
        throw std::invalid_argument(where + ": conv hyperparameters must be positive (pad may be zero)");
    }
    return spec;
}

}  // namespace

ArchSpec parse_arch_text(const std::string& text, const std::string& origin) {
    ArchSpec spec;
    bool saw_network = false;
    std::set<int> seen_segments;
    int current_segment = 0;  // 0 = [network], -1 = none yet
    bool in_section = false;

    auto where = [&](int lineno) { return origin + ":" + std::to_string(lineno); };

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    current_segment = -1;
    while (std::getline(in, raw)) {
        ++lineno;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string line = util::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::invalid_argument(where(lineno) + ": unterminated section header");
            std::string name = util::trim(line.substr(1, line.size() - 2));
            if (name == "network") {
                if (saw_network) throw std::invalid_argument(where(lineno) + ": duplicate [network] section");
                saw_network = true;
                current_segment = 0;
            } else if (name.rfind("segment", 0) == 0) {
                int idx = static_cast<int>(util::parse_int(name.substr(7), where(lineno) + " segment index"));
                if (seen_segments.count(idx)) {
                    throw std::invalid_argument(where(lineno) + ": duplicate exit position (segment " +
                                                std::to_string(idx) + " defined twice)");
                }
                int expected = static_cast<int>(spec.segments.size()) + 1;
                if (idx != expected) {
                    throw std::invalid_argument(where(lineno) + ": exit positions not strictly increasing (expected segment " +
                                                std::to_string(expected) + ", got " + std::to_string(idx) + ")");
                }
                seen_segments.insert(idx);
                spec.segments.emplace_back();
                current_segment = idx;
            } else {
                throw std::invalid_argument(where(lineno) + ": unknown section [" + name + "]");
            }
            in_section = true;
            continue;
        }
        if (!in_section) throw std::invalid_argument(where(lineno) + ": key outside any section");
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(where(lineno) + ": expected key=value");
        std::string key = util::trim(line.substr(0, eq));
        std::string value = util::trim(line.substr(eq + 1));
        if (current_segment == 0) {
            if (key == "num_classes") {
                spec.num_classes = static_cast<int>(util::parse_int(value, where(lineno) + " num_classes"));
            } else if (key == "in_channels") {
                spec.in_channels = static_cast<int>(util::parse_int(value, where(lineno) + " in_channels"));
            } else if (key == "in_size") {
                spec.in_size = static_cast<int>(util::parse_int(value, where(lineno) + " in_size"));
            } else {
                throw std::invalid_argument(where(lineno) + ": unknown [network] key '" + key + "'");
            }
            continue;
        }
        ArchSegment& seg = spec.segments.back();
        if (key == "layers") {
            for (const auto& token : util::split(value, '|')) {
                seg.layers.push_back(parse_layer_token(token, where(lineno)));
            }
        } else if (key == "slot") {
            std::string v = util::lower(value);
            if (v == "yes" || v == "true" || v == "1") {
                seg.has_slot = true;
            } else if (v == "no" || v == "false" || v == "0") {
                seg.has_slot = false;
            } else {
                throw std::invalid_argument(where(lineno) + ": slot expects yes/no");
            }
        } else if (key == "slot_layer") {
            seg.slot_layer = static_cast<int>(util::parse_int(value, where(lineno) + " slot_layer"));
        } else if (key == "slot_ops") {
            for (const auto& name : util::split(value, ',')) {
                if (util::trim(name).empty()) continue;
                seg.slot_ops.push_back(operator_from_name(util::trim(name)));
            }
        } else {
            throw std::invalid_argument(where(lineno) + ": unknown segment key '" + key + "'");
        }
    }

    if (!saw_network) throw std::invalid_argument(origin + ": missing [network] section");
    if (spec.num_classes < 2) throw std::invalid_argument(origin + ": num_classes must be at least 2");
    if (spec.in_channels < 1 || spec.in_size < 4) throw std::invalid_argument(origin + ": bad input geometry");
    if (spec.segments.empty()) throw std::invalid_argument(origin + ": at least one [segment] is required");

    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        ArchSegment& seg = spec.segments[i];
        std::string sid = origin + ": segment " + std::to_string(i + 1);
        if (seg.layers.empty()) {
            throw std::invalid_argument(sid + ": duplicate exit position (segment has no layers, its exit would "
                                              "coincide with the previous one)");
        }
        int last_conv = -1;
        for (std::size_t j = 0; j < seg.layers.size(); ++j) {
            if (seg.layers[j].kind == ArchLayerSpec::Kind::conv) last_conv = static_cast<int>(j);
        }
        if (seg.has_slot) {
            if (seg.slot_layer < 0) seg.slot_layer = last_conv;
            if (seg.slot_layer < 0 || seg.slot_layer >= static_cast<int>(seg.layers.size()) ||
                seg.layers[seg.slot_layer].kind != ArchLayerSpec::Kind::conv) {
                throw std::invalid_argument(sid + ": slot_layer must point at a conv layer");
            }
            if (seg.slot_ops.empty()) seg.slot_ops = all_operator_kinds();
            std::set<std::string> dedup;
            for (OperatorKind k : seg.slot_ops) {
                if (!dedup.insert(operator_name(k)).second) {
                    throw std::invalid_argument(sid + ": duplicate operator in slot_ops");
                }
            }
            if (std::find(seg.slot_ops.begin(), seg.slot_ops.end(), OperatorKind::baseline_conv) ==
                seg.slot_ops.end()) {
                throw std::invalid_argument(sid + ": slot_ops must include baseline_conv (the default operator)");
            }
        } else if (seg.slot_layer >= 0 || !seg.slot_ops.empty()) {
            throw std::invalid_argument(sid + ": slot_layer/slot_ops given but slot=yes is not set");
        }
    }
    return spec;
}

ArchSpec parse_arch_file(const std::string& path) {
    return parse_arch_text(util::read_text_file(path), path);
}

// ---------------------------------------------------------------- variant ids

std::string make_variant_id(const std::vector<OperatorKind>& ops, int exit_id) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        os << "slot" << i << "=" << operator_name(ops[i]) << "|";
    }
    os << "exit=" << exit_id;
    return os.str();
}

VariantConfig parse_variant_id(const std::string& id) {
    VariantConfig v;
    auto parts = util::split(id, '|');
    if (parts.empty()) throw std::invalid_argument("empty variant id");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad variant id '" + id + "'");
        std::string key = parts[i].substr(0, eq);
        std::string value = parts[i].substr(eq + 1);
        if (i + 1 == parts.size()) {
            if (key != "exit") throw std::invalid_argument("variant id must end with exit=: '" + id + "'");
            v.exit_id = static_cast<int>(util::parse_int(value, "variant exit"));
        } else {
            if (key != "slot" + std::to_string(i)) {
                throw std::invalid_argument("variant id slot order broken: '" + id + "'");
            }
            v.ops.push_back(operator_from_name(value));
        }
    }
    v.variant_id = make_variant_id(v.ops, v.exit_id);
    return v;
}

// ---------------------------------------------------------------- SlotLayer

SlotLayer::SlotLayer(std::string name, int cin, int cout, int k, int stride, int pad,
                     std::vector<OperatorKind> allowed, Rng& rng)
    : name_(std::move(name)), allowed_(std::move(allowed)) {
    if (allowed_.empty()) throw std::invalid_argument("slot " + name_ + ": empty operator pool");
    // Blocks are created in canonical kind order so initialization draws are
    // independent of the order operators are listed in the arch file.
    for (OperatorKind kind : all_operator_kinds()) {
        if (std::find(allowed_.begin(), allowed_.end(), kind) == allowed_.end()) continue;
        std::string bname = name_ + "." + operator_name(kind);
        switch (kind) {
            case OperatorKind::baseline_conv:
                blocks_[kind] = std::make_unique<nn::Conv2d>(bname, cin, cout, k, stride, pad, 1, true, rng);
                break;
            case OperatorKind::depthwise_separable:
                blocks_[kind] = nn::make_depthwise_separable(bname, cin, cout, k, stride, pad, rng);
                break;
            case OperatorKind::grouped_shuffle:
                blocks_[kind] = nn::make_grouped_shuffle(bname, cin, cout, k, stride, pad, rng);
                break;
            case OperatorKind::lowrank_decomposed:
                blocks_[kind] = nn::make_lowrank_conv(bname, cin, cout, k, stride, pad, rng);
                break;
        }
    }
    if (!blocks_.count(OperatorKind::baseline_conv)) {
        throw std::invalid_argument("slot " + name_ + ": operator pool must include baseline_conv");
    }
    active_ = OperatorKind::baseline_conv;
}

Tensor SlotLayer::forward(const Tensor& x, bool train) { return block(active_).forward(x, train); }

Tensor SlotLayer::backward(const Tensor& gy) { return block(active_).backward(gy); }

void SlotLayer::collect_params(std::vector<Parameter*>& out) {
    for (auto& [kind, b] : blocks_) b->collect_params(out);
}

std::vector<int> SlotLayer::out_shape(const std::vector<int>& in) const { return block(active_).out_shape(in); }

void SlotLayer::add_cost(const std::vector<int>& in, CostAccum& acc) const { block(active_).add_cost(in, acc); }

void SlotLayer::set_dropout_seed(std::uint64_t seed) {
    std::uint64_t i = 0;
    for (auto& [kind, b] : blocks_) b->set_dropout_seed(nn::mix_seed(seed, ++i));
}

void SlotLayer::set_active(OperatorKind k) {
    block(k);  // validates availability
    active_ = k;
}

Layer& SlotLayer::block(OperatorKind k) const {
    auto it = blocks_.find(k);
    if (it == blocks_.end()) {
        throw std::invalid_argument("slot " + name_ + ": operator " + operator_name(k) +
                                    " is not in this slot's pool");
    }
    return *it->second;
}

void SlotLayer::active_block_params(std::vector<Parameter*>& out) const {
    blocks_.at(active_)->collect_params(out);
}

// ---------------------------------------------------------------- ElasticNetwork

namespace {

std::unique_ptr<nn::Sequential> build_exit_branch(const std::string& name, int cin, int num_classes, Rng& rng) {
    const int branch_channels = 8;
    const int hidden = 8;
    auto seq = std::make_unique<nn::Sequential>("exit_branch");
    seq->add(std::make_unique<nn::Conv2d>(name + ".conv", cin, branch_channels, 3, 2, 1, 1, true, rng));
    seq->add(std::make_unique<nn::ReLU>());
    seq->add(std::make_unique<nn::GlobalAvgPool>());
    seq->add(std::make_unique<nn::Dropout>(0.5));
    seq->add(std::make_unique<nn::Flatten>());
    seq->add(std::make_unique<nn::Dense>(name + ".fc1", branch_channels, hidden, true, rng));
    seq->add(std::make_unique<nn::ReLU>());
    seq->add(std::make_unique<nn::Dense>(name + ".fc2", hidden, num_classes, true, rng));
    return seq;
}

}  // namespace

ElasticNetwork::ElasticNetwork(const ArchSpec& spec, std::uint64_t seed)
    : num_classes_(spec.num_classes), in_channels_(spec.in_channels), in_size_(spec.in_size) {
    Rng rng(nn::mix_seed(seed, 0xE1A5ULL));
    int cur_c = in_channels_;
    for (std::size_t si = 0; si < spec.segments.size(); ++si) {
        const ArchSegment& aseg = spec.segments[si];
        Segment seg;
        for (std::size_t li = 0; li < aseg.layers.size(); ++li) {
            const ArchLayerSpec& l = aseg.layers[li];
            std::string name = "seg" + std::to_string(si + 1) + ".l" + std::to_string(li);
            if (l.kind == ArchLayerSpec::Kind::relu) {
                seg.layers.push_back(std::make_unique<nn::ReLU>());
                continue;
            }
            if (aseg.has_slot && static_cast<int>(li) == aseg.slot_layer) {
                auto slot = std::make_unique<SlotLayer>(name, cur_c, l.conv.cout, l.conv.k, l.conv.stride,
                                                        l.conv.pad, aseg.slot_ops, rng);
                seg.slot = slot.get();
                seg.layers.push_back(std::move(slot));
            } else {
                seg.layers.push_back(std::make_unique<nn::Conv2d>(name, cur_c, l.conv.cout, l.conv.k,
                                                                  l.conv.stride, l.conv.pad, 1, true, rng));
            }
            cur_c = l.conv.cout;
        }
        seg.exit = build_exit_branch("seg" + std::to_string(si + 1) + ".exit", cur_c, num_classes_, rng);
        segments_.push_back(std::move(seg));
        if (segments_.back().slot) slots_.push_back(segments_.back().slot);
    }

    for (auto& seg : segments_) {
        for (auto& l : seg.layers) l->collect_params(params_);
        seg.exit->collect_params(params_);
    }
    std::set<std::string> names;
    for (Parameter* p : params_) {
        if (!names.insert(p->name).second) throw std::logic_error("duplicate parameter name " + p->name);
    }

    // Verify every slot block agrees on the output shape it must preserve.
    std::vector<int> shape = input_shape();
    for (auto& seg : segments_) {
        for (auto& l : seg.layers) {
            if (auto* slot = dynamic_cast<SlotLayer*>(l.get())) {
                std::optional<std::vector<int>> expect;
                for (OperatorKind k : slot->allowed()) {
                    auto out = slot->block(k).out_shape(shape);
                    if (!expect) {
                        expect = out;
                    } else if (*expect != out) {
                        throw std::invalid_argument("slot blocks disagree on output shape");
                    }
                }
            }
            shape = l->out_shape(shape);
        }
    }
    active_exit_ = num_segments();
}

ElasticNetwork ElasticNetwork::from_file(const std::string& path, std::uint64_t seed) {
    return ElasticNetwork(parse_arch_file(path), seed);
}

const std::vector<OperatorKind>& ElasticNetwork::slot_allowed(int slot) const {
    if (slot < 0 || slot >= num_slots()) throw std::out_of_range("slot index out of range");
    return slots_[slot]->allowed();
}

VariantConfig ElasticNetwork::apply_compression_operator(int slot, OperatorKind op) {
    if (slot < 0 || slot >= num_slots()) throw std::out_of_range("slot index out of range");
    slots_[slot]->set_active(op);
    return active_variant();
}

void ElasticNetwork::check_exit_id(int exit_id) const {
    if (exit_id < 1 || exit_id > num_segments()) {
        throw std::out_of_range("exit_id " + std::to_string(exit_id) + " out of range 1.." +
                                std::to_string(num_segments()));
    }
}

void ElasticNetwork::set_active_exit(int exit_id) {
    check_exit_id(exit_id);
    active_exit_ = exit_id;
}

void ElasticNetwork::apply_variant(const VariantConfig& v) {
    if (static_cast<int>(v.ops.size()) != num_slots()) {
        throw std::invalid_argument("variant has " + std::to_string(v.ops.size()) + " slot choices, network has " +
                                    std::to_string(num_slots()));
    }
    check_exit_id(v.exit_id);
    for (int s = 0; s < num_slots(); ++s) slots_[s]->block(v.ops[s]);  // validate all before mutating
    for (int s = 0; s < num_slots(); ++s) slots_[s]->set_active(v.ops[s]);
    active_exit_ = v.exit_id;
}

VariantConfig ElasticNetwork::active_variant() const {
    VariantConfig v;
    for (const SlotLayer* s : slots_) v.ops.push_back(s->active());
    v.exit_id = active_exit_;
    v.variant_id = make_variant_id(v.ops, v.exit_id);
    return v;
}

Tensor ElasticNetwork::forward_to_exit(const Tensor& x, int exit_id, bool train) {
    check_exit_id(exit_id);
    if (x.rank() != 4 || x.dim(1) != in_channels_ || x.dim(2) != in_size_ || x.dim(3) != in_size_) {
        throw std::invalid_argument("network expects input [N," + std::to_string(in_channels_) + "," +
                                    std::to_string(in_size_) + "," + std::to_string(in_size_) + "], got " +
                                    Tensor::shape_str(x.shape));
    }
    Tensor cur = x;
    for (int si = 0; si < exit_id; ++si) {
        for (auto& l : segments_[si].layers) cur = l->forward(cur, train);
    }
    return segments_[exit_id - 1].exit->forward(cur, train);
}

void ElasticNetwork::backward_to(const Tensor& dlogits, int exit_id, int first_segment) {
    check_exit_id(exit_id);
    if (first_segment < 1 || first_segment > exit_id) {
        throw std::out_of_range("first_segment must lie in 1..exit_id");
    }
    Tensor g = segments_[exit_id - 1].exit->backward(dlogits);
    for (int si = exit_id - 1; si >= first_segment - 1; --si) {
        auto& layers = segments_[si].layers;
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
    }
}

AdaptiveResult ElasticNetwork::forward_adaptive(const Tensor& x, double confidence_threshold) {
    if (confidence_threshold < 0.0) throw std::invalid_argument("confidence threshold must be non-negative");
    if (x.dim(0) != 1) throw std::invalid_argument("forward_adaptive serves one sample at a time");
    Tensor cur = x;
    AdaptiveResult res;
    for (int e = 1; e <= active_exit_; ++e) {
        for (auto& l : segments_[e - 1].layers) cur = l->forward(cur, false);
        Tensor logits = segments_[e - 1].exit->forward(cur, false);
        auto xr = nn::softmax_cross_entropy(logits, std::vector<int>{0}, /*want_grad=*/false);
        res.logits = std::move(logits);
        res.exit_taken = e;
        res.confidence = xr.confidence[0];
        // Thresholds above 1 mean "never exit early"; the final exit is
        // always taken once reached.
        if (e == active_exit_ || (confidence_threshold <= 1.0 && res.confidence >= confidence_threshold)) {
            break;
        }
    }
    return res;
}

long long ElasticNetwork::variant_space_size() const {
    long long combos = 1;
    for (const SlotLayer* s : slots_) combos *= static_cast<long long>(s->allowed().size());
    return combos * num_segments();
}

std::vector<VariantConfig> ElasticNetwork::enumerate_variants(long long budget) const {
    if (budget < 1) throw std::invalid_argument("enumeration budget must be at least 1");
    long long combos = 1;
    for (const SlotLayer* s : slots_) combos *= static_cast<long long>(s->allowed().size());
    std::vector<VariantConfig> out;
    long long total = std::min(combos * num_segments(), budget);
    out.reserve(static_cast<std::size_t>(total));
    for (int exit_id = 1; exit_id <= num_segments(); ++exit_id) {
        for (long long idx = 0; idx < combos; ++idx) {
            if (static_cast<long long>(out.size()) >= budget) return out;
            VariantConfig v;
            v.exit_id = exit_id;
            long long rem = idx;
            long long radix_below = combos;
            for (const SlotLayer* s : slots_) {
                long long m = static_cast<long long>(s->allowed().size());
                radix_below /= m;
                v.ops.push_back(s->allowed()[static_cast<std::size_t>(rem / radix_below)]);
                rem %= radix_below;
            }
            v.variant_id = make_variant_id(v.ops, v.exit_id);
            out.push_back(std::move(v));
        }
    }
    return out;
}

void ElasticNetwork::walk_path(const VariantConfig& v,
                               const std::function<void(const Layer&, const std::vector<int>&)>& fn) const {
    if (static_cast<int>(v.ops.size()) != num_slots()) {
        throw std::invalid_argument("variant slot count does not match network");
    }
    check_exit_id(v.exit_id);
    std::vector<int> shape = input_shape();
    for (int si = 0; si < v.exit_id; ++si) {
        for (const auto& l : segments_[si].layers) {
            const Layer* eff = l.get();
            if (const auto* slot = dynamic_cast<const SlotLayer*>(l.get())) {
                std::size_t slot_idx = 0;
                while (slots_[slot_idx] != slot) ++slot_idx;
                eff = &slot->block(v.ops[slot_idx]);
            }
            fn(*eff, shape);
            shape = eff->out_shape(shape);
        }
    }
    const nn::Sequential* exit = segments_[v.exit_id - 1].exit.get();
    for (const auto& l : exit->layers()) {
        fn(*l, shape);
        shape = l->out_shape(shape);
    }
}

CostAccum ElasticNetwork::cost_for(const VariantConfig& v) const {
    CostAccum acc;
    walk_path(v, [&acc](const Layer& l, const std::vector<int>& in) { l.add_cost(in, acc); });
    return acc;
}

std::vector<Parameter*> ElasticNetwork::partition_params(int partition) const {
    check_exit_id(partition);
    std::vector<Parameter*> out;
    const Segment& seg = segments_[partition - 1];
    for (const auto& l : seg.layers) l->collect_params(out);
    seg.exit->collect_params(out);
    return out;
}

std::vector<Parameter*> ElasticNetwork::active_path_params(int exit_id) const {
    check_exit_id(exit_id);
    std::vector<Parameter*> out;
    for (int si = 0; si < exit_id; ++si) {
        for (const auto& l : segments_[si].layers) {
            if (const auto* slot = dynamic_cast<const SlotLayer*>(l.get())) {
                slot->active_block_params(out);
            } else {
                l->collect_params(out);
            }
        }
    }
    segments_[exit_id - 1].exit->collect_params(out);
    return out;
}

long long ElasticNetwork::backbone_param_count() const {
    long long n = 0;
    for (const auto& seg : segments_) {
        for (const auto& l : seg.layers) {
            std::vector<Parameter*> ps;
            if (const auto* slot = dynamic_cast<const SlotLayer*>(l.get())) {
                slot->block(OperatorKind::baseline_conv).collect_params(ps);
            } else {
                l->collect_params(ps);
            }
            for (Parameter* p : ps) n += p->value.numel();
        }
    }
    return n;
}

long long ElasticNetwork::exit_branch_param_count(int exit_id) const {
    check_exit_id(exit_id);
    std::vector<Parameter*> ps;
    segments_[exit_id - 1].exit->collect_params(ps);
    long long n = 0;
    for (Parameter* p : ps) n += p->value.numel();
    return n;
}

void ElasticNetwork::set_dropout_seed(std::uint64_t seed) {
    std::uint64_t i = 0;
    for (auto& seg : segments_) {
        for (auto& l : seg.layers) l->set_dropout_seed(nn::mix_seed(seed, ++i));
        seg.exit->set_dropout_seed(nn::mix_seed(seed, ++i));
    }
}

void ElasticNetwork::set_frozen(const std::vector<Parameter*>& params, bool frozen) {
    for (Parameter* p : params) p->frozen = frozen;
}

void ElasticNetwork::save(const std::string& path) const { nn::save_checkpoint(path, params_); }

void ElasticNetwork::load(const std::string& path) { nn::load_checkpoint(path, params_); }

// ---------------------------------------------------------------- evaluation helpers

double eval_accuracy(ElasticNetwork& net, const data::Dataset& ds, int exit_id, int batch_size) {
    if (ds.size() == 0) throw std::invalid_argument("eval_accuracy: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("eval_accuracy: batch_size must be positive");
    int correct = 0;
    std::vector<int> idx(static_cast<std::size_t>(batch_size));
    for (int start = 0; start < ds.size(); start += batch_size) {
        int count = std::min(batch_size, ds.size() - start);
        idx.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = start + i;
        std::vector<int> labels;
        Tensor batch = ds.batch(idx, &labels);
        Tensor logits = net.forward_to_exit(batch, exit_id, false);
        auto xr = nn::softmax_cross_entropy(logits, labels, /*want_grad=*/false);
        for (int i = 0; i < count; ++i) {
            if (xr.predicted[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / ds.size();
}

DiversityReport diversity_from_accuracies(const std::vector<double>& accuracy, double delta_floor) {
    if (accuracy.empty()) throw std::invalid_argument("diversity report needs at least one branch accuracy");
    DiversityReport rep;
    rep.accuracy = accuracy;
    rep.delta_floor = delta_floor;
    for (std::size_t i = 0; i + 1 < accuracy.size(); ++i) {
        double d = accuracy[i + 1] - accuracy[i];
        rep.delta.push_back(d);
        if (d < delta_floor) rep.flagged_segments.push_back(static_cast<int>(i) + 2);
    }
    return rep;
}

DiversityReport branch_diversity_report(ElasticNetwork& net, const data::Dataset& eval_set, double delta_floor) {
    if (eval_set.size() == 0) throw std::invalid_argument("branch_diversity_report: empty eval set");
    std::vector<double> acc;
    for (int e = 1; e <= net.num_segments(); ++e) acc.push_back(eval_accuracy(net, eval_set, e));
    return diversity_from_accuracies(acc, delta_floor);
}

void export_variant_csv(const std::string& path, const std::vector<VariantConfig>& variants) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(variants.size());
    for (const auto& v : variants) {
        std::string ops;
        for (std::size_t i = 0; i < v.ops.size(); ++i) {
            if (i) ops += "+";
            ops += operator_name(v.ops[i]);
        }
        rows.push_back({v.variant_id, ops, std::to_string(v.exit_id)});
    }
    util::write_csv(path, {"variant_id", "slot_ops", "exit_id"}, rows);
}

}  // namespace elastinet::elastic

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "elastinet/dataset.hpp"
#include "elastinet/layers.hpp"

namespace elastinet::elastic {

enum class OperatorKind { baseline_conv, depthwise_separable, grouped_shuffle, lowrank_decomposed };

const std::vector<OperatorKind>& all_operator_kinds();
std::string operator_name(OperatorKind k);
OperatorKind operator_from_name(const std::string& name);

// Architecture description parsed from the line-oriented spec file.
struct ArchConvSpec {
    int cout = 0;
    int k = 3;
    int stride = 1;
    int pad = 1;
};

struct ArchLayerSpec {
    enum class Kind { conv, relu } kind = Kind::conv;
    ArchConvSpec conv;
};

struct ArchSegment {
    std::vector<ArchLayerSpec> layers;
    bool has_slot = false;
    int slot_layer = -1;  // index into layers; -1 = last conv
    std::vector<OperatorKind> slot_ops;
};

struct ArchSpec {
    int num_classes = 0;
    int in_channels = 1;
    int in_size = 16;
    std::vector<ArchSegment> segments;
};

ArchSpec parse_arch_text(const std::string& text, const std::string& origin = "<arch>");
ArchSpec parse_arch_file(const std::string& path);

struct VariantConfig {
    std::string variant_id;
    std::vector<OperatorKind> ops;  // one entry per slot, network order
    int exit_id = 1;                // 1-based
};

std::string make_variant_id(const std::vector<OperatorKind>& ops, int exit_id);
VariantConfig parse_variant_id(const std::string& id);

// A swappable backbone position holding one pre-built block per allowed
// operator. All blocks keep their weights across swaps, so switching back
// restores the exact previous behavior.
class SlotLayer : public nn::Layer {
public:
    SlotLayer(std::string name, int cin, int cout, int k, int stride, int pad,
              std::vector<OperatorKind> allowed, nn::Rng& rng);

    nn::Tensor forward(const nn::Tensor& x, bool train) override;
    nn::Tensor backward(const nn::Tensor& gy) override;
    std::string kind_name() const override { return "slot"; }
    void collect_params(std::vector<nn::Parameter*>& out) override;
    std::vector<int> out_shape(const std::vector<int>& in) const override;
    void add_cost(const std::vector<int>& in, nn::CostAccum& acc) const override;
    void set_dropout_seed(std::uint64_t seed) override;

    const std::vector<OperatorKind>& allowed() const { return allowed_; }
    OperatorKind active() const { return active_; }
    void set_active(OperatorKind k);
    nn::Layer& block(OperatorKind k) const;
    void active_block_params(std::vector<nn::Parameter*>& out) const;

private:
    std::string name_;
    std::vector<OperatorKind> allowed_;
    OperatorKind active_ = OperatorKind::baseline_conv;
    std::map<OperatorKind, nn::LayerPtr> blocks_;
};

struct AdaptiveResult {
    nn::Tensor logits;
    int exit_taken = 1;
    double confidence = 0.0;
};

class ElasticNetwork {
public:
    ElasticNetwork(const ArchSpec& spec, std::uint64_t seed);

    static ElasticNetwork from_file(const std::string& path, std::uint64_t seed);

    int num_segments() const { return static_cast<int>(segments_.size()); }
    int num_slots() const { return static_cast<int>(slots_.size()); }
    int num_classes() const { return num_classes_; }
    std::vector<int> input_shape() const { return {1, in_channels_, in_size_, in_size_}; }

    const std::vector<OperatorKind>& slot_allowed(int slot) const;

    // Swaps one slot; every untouched parameter is preserved bitwise.
    VariantConfig apply_compression_operator(int slot, OperatorKind op);
    void set_active_exit(int exit_id);
    void apply_variant(const VariantConfig& v);
    VariantConfig active_variant() const;

    nn::Tensor forward_to_exit(const nn::Tensor& x, int exit_id, bool train = false);
    AdaptiveResult forward_adaptive(const nn::Tensor& x, double confidence_threshold);

    // Backpropagates from exit_id's logits down to first_segment (1-based).
    // Stopping above 1 lets staged training skip fully frozen prefixes.
    void backward_to(const nn::Tensor& dlogits, int exit_id, int first_segment = 1);

    std::vector<VariantConfig> enumerate_variants(long long budget) const;
    long long variant_space_size() const;

    // Walks the layers a variant executes (segments up to its exit, slot
    // blocks resolved from the variant) without mutating the network.
    void walk_path(const VariantConfig& v,
                   const std::function<void(const nn::Layer&, const std::vector<int>&)>& fn) const;
    nn::CostAccum cost_for(const VariantConfig& v) const;

    const std::vector<nn::Parameter*>& all_params() const { return params_; }
    std::vector<nn::Parameter*> partition_params(int partition) const;  // 1-based, includes exit branch
    std::vector<nn::Parameter*> active_path_params(int exit_id) const;  // active blocks only
    long long backbone_param_count() const;
    long long exit_branch_param_count(int exit_id) const;

    void set_dropout_seed(std::uint64_t seed);
    void set_frozen(const std::vector<nn::Parameter*>& params, bool frozen);

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    struct Segment {
        std::vector<nn::LayerPtr> layers;
        std::unique_ptr<nn::Sequential> exit;
        SlotLayer* slot = nullptr;  // owned by layers
    };

    int num_classes_ = 0;
    int in_channels_ = 1;
    int in_size_ = 16;
    std::vector<Segment> segments_;
    std::vector<SlotLayer*> slots_;
    int active_exit_ = 1;
    std::vector<nn::Parameter*> params_;

    void check_exit_id(int exit_id) const;
};

double eval_accuracy(ElasticNetwork& net, const data::Dataset& ds, int exit_id, int batch_size = 250);

struct DiversityReport {
    std::vector<double> accuracy;       // per exit
    std::vector<double> delta;          // accuracy[i+1] - accuracy[i]
    std::vector<int> flagged_segments;  // 1-based segments whose gain is below the floor
    double delta_floor = 0.0;
};

// Pure core over per-exit accuracies; segment i+1 is flagged when the
// accuracy gained by its exit over the previous one falls below the floor.
DiversityReport diversity_from_accuracies(const std::vector<double>& accuracy, double delta_floor);
DiversityReport branch_diversity_report(ElasticNetwork& net, const data::Dataset& eval_set, double delta_floor);

void export_variant_csv(const std::string& path, const std::vector<VariantConfig>& variants);

}  // namespace elastinet::elastic

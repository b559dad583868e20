#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elastinet/bptree.hpp"
#include "elastinet/elastic.hpp"
#include "elastinet/profiler.hpp"

namespace elastinet::tables {

// Static per-variant facts: size and trained accuracy.
struct PerfRecord {
    std::string variant_id;
    std::uint64_t params = 0;
    std::uint64_t storage_bytes = 0;
    double accuracy = 0.0;
};

// Model-predicted runtime cost per variant on one device profile.
struct PredictiveRecord {
    std::string variant_id;
    double latency_s = 0.0;
    double energy_j = 0.0;
};

// Yields a variant's accuracy; nullopt excludes the variant (with a warning).
using AccuracySource = std::function<std::optional<double>(const elastic::VariantConfig&)>;

// 1-based segment index of each slot, in slot order.
std::vector<int> slot_segments(const elastic::ArchSpec& spec);

// Closed-form accuracy model: the all-baseline accuracy of the variant's
// exit minus a per-operator penalty for every compressed slot at or before
// that exit. Keeps table builds independent of a trained checkpoint.
struct SyntheticAccuracy {
    std::vector<double> base_per_exit;
    double penalty_dwsep = 0.015;
    double penalty_grouped = 0.010;
    double penalty_lowrank = 0.020;
};

AccuracySource make_synthetic_accuracy(SyntheticAccuracy cfg, std::vector<int> slot_segment);

// The two per-variant tables plus B+-tree indexes over latency and energy.
// Immutable after build/load; record id = index into the variant_id-sorted
// record arrays, so identical inputs rebuild identical tables.
class PerfTables {
public:
    PerfTables() = default;

    static PerfTables build(const std::vector<elastic::VariantConfig>& variants,
                            const elastic::ElasticNetwork& net, const perf::DeviceProfile& device,
                            const AccuracySource& accuracy, std::vector<std::string>* warnings = nullptr,
                            double epsilon = -1.0);

    bool built() const { return built_; }
    std::size_t size() const { return perf_.size(); }

    const std::vector<PerfRecord>& perf() const { return perf_; }
    const std::vector<PredictiveRecord>& predictive() const { return predictive_; }
    const PerfRecord& perf_at(std::uint32_t rid) const { return perf_.at(rid); }
    const PredictiveRecord& predictive_at(std::uint32_t rid) const { return predictive_.at(rid); }
    std::optional<std::uint32_t> rid_of(const std::string& variant_id) const;

    const index::BPlusTree& latency_tree() const { return latency_tree_; }
    const index::BPlusTree& energy_tree() const { return energy_tree_; }

    // Record ids with latency <= t_budget and energy <= e_budget, ascending.
    std::vector<std::uint32_t> candidates_within(double t_budget_s, double e_budget_j) const;

    // Extremes used for min-max normalization of cross-unit comparisons.
    double min_latency() const;
    double max_latency() const;
    double min_energy() const;
    double max_energy() const;

    void save(const std::string& path) const;
    static PerfTables load(const std::string& path);

private:
    void index_records();

    bool built_ = false;
    std::vector<PerfRecord> perf_;
    std::vector<PredictiveRecord> predictive_;
    index::BPlusTree latency_tree_{16};
    index::BPlusTree energy_tree_{16};
};

}  // namespace elastinet::tables

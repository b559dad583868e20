#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elastinet/dataset.hpp"
#include "elastinet/elastic.hpp"

namespace elastinet::train {

// Weight-update policy for later stages: freeze_prior pins every earlier
// partition bitwise; conditional_update lets them train but rolls the prefix
// back unless the previous branch's accuracy improved.
enum class UpdateMode { freeze_prior, conditional_update };

UpdateMode update_mode_from_name(const std::string& name);
std::string update_mode_name(UpdateMode m);

struct TrainConfig {
    UpdateMode mode = UpdateMode::freeze_prior;
    std::vector<double> acc_thresholds;  // one per exit, fractions in (0,1]
    int max_epochs_per_stage = 8;
    int batch_size = 64;
    double lr = 0.1;
    std::vector<int> lr_milestones;  // 1-based epochs after which lr decays
    double lr_gamma = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    std::optional<int> stop_after_stage;  // harness hook used by resume tests
};

struct StageReport {
    int stage = 0;
    int epochs_used = 0;
    double accuracy = 0.0;
    double seconds = 0.0;
    bool threshold_met = false;
    std::vector<std::string> frozen_params;  // freeze ledger for this stage
};

struct TrainReport {
    std::vector<StageReport> stages;
    std::vector<double> stored_acc;  // best recorded accuracy per exit
    bool any_threshold_missed = false;
};

struct PartitionView {
    int index = 0;  // 1-based
    std::vector<nn::Parameter*> params;
};

std::vector<PartitionView> partition_network(const elastic::ElasticNetwork& net);

// Trains partition `stage` (1-based) with the configured mode. `state` must
// contain exactly stage-1 completed stages and carries the stored-accuracy
// ledger that conditional updates consult.
StageReport train_stage(int stage, elastic::ElasticNetwork& net, const data::Dataset& train_ds,
                        const data::Dataset& eval_ds, const TrainConfig& cfg, TrainReport& state);

// Runs all stages in order. With a checkpoint_dir, saves <dir>/ckpt.stageN
// plus report/ledger CSVs after each stage; resume restarts after the last
// completed stage and reproduces the uninterrupted result bit for bit.
TrainReport pretrain_all(elastic::ElasticNetwork& net, const data::Dataset& train_ds,
                         const data::Dataset& eval_ds, const TrainConfig& cfg,
                         const std::string& checkpoint_dir = "", bool resume = false);

// Ordinary end-to-end training of the final exit for a fixed epoch count,
// sharing the staged loop's batching and seeding scheme.
double train_monolithic(elastic::ElasticNetwork& net, const data::Dataset& train_ds,
                        const data::Dataset& eval_ds, const TrainConfig& cfg, int epochs);

void export_train_report_csv(const std::string& path, const TrainReport& report);
TrainReport read_train_report_csv(const std::string& path);

std::uint64_t params_digest(const std::vector<nn::Parameter*>& params);

}  // namespace elastinet::train

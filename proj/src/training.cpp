#include "elastinet/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "elastinet/io.hpp"

namespace elastinet::train {

namespace fs = std::filesystem;
using elastic::ElasticNetwork;
using elastic::OperatorKind;
using elastic::VariantConfig;
using nn::Parameter;
using nn::Rng;
using nn::Tensor;

UpdateMode update_mode_from_name(const std::string& name) {
    if (name == "freeze_prior") return UpdateMode::freeze_prior;
    if (name == "conditional_update") return UpdateMode::conditional_update;
    throw std::invalid_argument("unknown training mode '" + name + "' (freeze_prior or conditional_update)");
}

std::string update_mode_name(UpdateMode m) {
    return m == UpdateMode::freeze_prior ? "freeze_prior" : "conditional_update";
}

std::vector<PartitionView> partition_network(const ElasticNetwork& net) {
    std::vector<PartitionView> parts;
    for (int i = 1; i <= net.num_segments(); ++i) {
        parts.push_back({i, net.partition_params(i)});
    }
    return parts;
}

std::uint64_t params_digest(const std::vector<Parameter*>& params) {
    std::uint64_t h = 0x9ae16a3b2f90404fULL;
    for (const Parameter* p : params) h = nn::mix_seed(h, nn::bytes_digest(p->value.data));
    return h;
}

namespace {

void validate_config(const TrainConfig& cfg, int n) {
    if (static_cast<int>(cfg.acc_thresholds.size()) != n) {
        throw std::invalid_argument("training config needs one accuracy threshold per exit (" +
                                    std::to_string(n) + "), got " + std::to_string(cfg.acc_thresholds.size()));
    }
    for (double t : cfg.acc_thresholds) {
        if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("accuracy thresholds must lie in (0,1]");
    }
    if (cfg.max_epochs_per_stage < 1) throw std::invalid_argument("max_epochs_per_stage must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be positive");
}

VariantConfig baseline_variant(const ElasticNetwork& net, int exit_id) {
    VariantConfig v;
    v.ops.assign(static_cast<std::size_t>(net.num_slots()), OperatorKind::baseline_conv);
    v.exit_id = exit_id;
    v.variant_id = elastic::make_variant_id(v.ops, v.exit_id);
    return v;
}

double epoch_lr(const TrainConfig& cfg, int epoch) {
    int decays = 0;
    for (int m : cfg.lr_milestones) {
        if (m < epoch) ++decays;
    }
    return cfg.lr * std::pow(cfg.lr_gamma, decays);
}

// Shared epoch loop. Trains exit_id's branch, backpropagating no deeper than
// first_segment, stopping early once eval accuracy reaches `threshold` (use a
// value > 1 to disable). Returns the last measured eval accuracy.
double run_epochs(ElasticNetwork& net, const data::Dataset& train_ds, const data::Dataset& eval_ds,
                  const TrainConfig& cfg, int rng_stage, int exit_id, int first_segment, double threshold,
                  int max_epochs, int* epochs_used) {
    std::vector<Parameter*> trainable = net.active_path_params(exit_id);
    nn::Sgd opt(cfg.lr, cfg.momentum, cfg.weight_decay);
    Rng stage_rng(nn::mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(rng_stage)));

    std::vector<int> perm(static_cast<std::size_t>(train_ds.size()));
    double acc = 0.0;
    int used = 0;
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        opt.set_lr(epoch_lr(cfg, epoch));
        for (int i = 0; i < train_ds.size(); ++i) perm[static_cast<std::size_t>(i)] = i;
        Rng epoch_rng = stage_rng.fork(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(perm);

        int batches = (train_ds.size() + cfg.batch_size - 1) / cfg.batch_size;
        std::vector<int> idx;
        std::vector<int> labels;
        for (int b = 0; b < batches; ++b) {
            int lo = b * cfg.batch_size;
            int hi = std::min(train_ds.size(), lo + cfg.batch_size);
            idx.assign(perm.begin() + lo, perm.begin() + hi);
            Tensor batch = train_ds.batch(idx, &labels);
            net.set_dropout_seed(nn::mix_seed(nn::mix_seed(cfg.seed, 7700 + static_cast<std::uint64_t>(rng_stage)),
                                              static_cast<std::uint64_t>(epoch) * 100000 +
                                                  static_cast<std::uint64_t>(b)));
            Tensor logits = net.forward_to_exit(batch, exit_id, true);
            auto xr = nn::softmax_cross_entropy(logits, labels);
            nn::Sgd::zero_grad(trainable);
            net.backward_to(xr.dlogits, exit_id, first_segment);
            opt.step(trainable);
        }
        ++used;
        acc = elastic::eval_accuracy(net, eval_ds, exit_id);
        if (acc >= threshold) break;
    }
    if (epochs_used) *epochs_used = used;
    return acc;
}

std::vector<std::vector<float>> snapshot_values(const std::vector<Parameter*>& params) {
    std::vector<std::vector<float>> snap;
    snap.reserve(params.size());
    for (const Parameter* p : params) snap.push_back(p->value.data);
    return snap;
}

void restore_values(const std::vector<Parameter*>& params, const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = snap[i];
}

}  // namespace

StageReport train_stage(int stage, ElasticNetwork& net, const data::Dataset& train_ds,
                        const data::Dataset& eval_ds, const TrainConfig& cfg, TrainReport& state) {
    int n = net.num_segments();
    validate_config(cfg, n);
    if (stage < 1 || stage > n) throw std::out_of_range("stage out of range");
    if (static_cast<int>(state.stages.size()) != stage - 1) {
        throw std::invalid_argument("train_stage " + std::to_string(stage) + " requires exactly " +
                                    std::to_string(stage - 1) + " completed stages");
    }
    if (state.stored_acc.empty()) state.stored_acc.assign(static_cast<std::size_t>(n), 0.0);

    auto t0 = std::chrono::steady_clock::now();
    net.apply_variant(baseline_variant(net, stage));

    StageReport rep;
    rep.stage = stage;

    std::vector<Parameter*> prefix;
    for (int j = 1; j < stage; ++j) {
        auto pj = net.partition_params(j);
        prefix.insert(prefix.end(), pj.begin(), pj.end());
    }

    std::vector<std::vector<float>> prefix_snapshot;
    int first_segment = 1;
    if (cfg.mode == UpdateMode::freeze_prior) {
        net.set_frozen(prefix, true);
        for (const Parameter* p : prefix) rep.frozen_params.push_back(p->name);
        first_segment = stage;
    } else if (stage > 1) {
        prefix_snapshot = snapshot_values(prefix);
    }

    double threshold = cfg.acc_thresholds[static_cast<std::size_t>(stage - 1)];
    double acc = run_epochs(net, train_ds, eval_ds, cfg, stage, stage, first_segment, threshold,
                            cfg.max_epochs_per_stage, &rep.epochs_used);

    if (cfg.mode == UpdateMode::freeze_prior) {
        net.set_frozen(prefix, false);
    } else if (stage > 1) {
        // Adopt the retrained prefix only if the previous branch improved;
        // otherwise the stored weights are retained.
        double prev_acc_new = elastic::eval_accuracy(net, eval_ds, stage - 1);
        if (prev_acc_new > state.stored_acc[static_cast<std::size_t>(stage - 2)]) {
            for (int j = 1; j < stage; ++j) {
                double a = elastic::eval_accuracy(net, eval_ds, j);
                auto& stored = state.stored_acc[static_cast<std::size_t>(j - 1)];
                stored = std::max(stored, a);
            }
        } else {
            restore_values(prefix, prefix_snapshot);
            acc = elastic::eval_accuracy(net, eval_ds, stage);
        }
    }

    rep.accuracy = acc;
    rep.threshold_met = acc >= threshold;
    state.stored_acc[static_cast<std::size_t>(stage - 1)] =
        std::max(state.stored_acc[static_cast<std::size_t>(stage - 1)], acc);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.stages.push_back(rep);
    if (!rep.threshold_met) state.any_threshold_missed = true;
    return rep;
}

namespace {

void persist_state(const std::string& dir, const ElasticNetwork& net, const TrainReport& state) {
    int k = static_cast<int>(state.stages.size());
    net.save((fs::path(dir) / ("ckpt.stage" + std::to_string(k))).string());
    export_train_report_csv((fs::path(dir) / "train_report.csv").string(), state);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < state.stored_acc.size(); ++i) {
        rows.push_back({std::to_string(i + 1), util::format_double(state.stored_acc[i])});
    }
    util::write_csv((fs::path(dir) / "stored_acc.csv").string(), {"exit", "acc"}, rows);
}

int restore_state(const std::string& dir, ElasticNetwork& net, const TrainConfig& cfg, TrainReport& state) {
    fs::path report_path = fs::path(dir) / "train_report.csv";
    if (!fs::exists(report_path)) return 0;
    TrainReport loaded = read_train_report_csv(report_path.string());
    int k = static_cast<int>(loaded.stages.size());
    if (k == 0) return 0;
    fs::path ckpt = fs::path(dir) / ("ckpt.stage" + std::to_string(k));
    if (!fs::exists(ckpt)) {
        throw std::runtime_error("resume: report lists " + std::to_string(k) + " stages but " + ckpt.string() +
                                 " is missing");
    }
    net.load(ckpt.string());
    state = loaded;
    state.stored_acc.assign(static_cast<std::size_t>(net.num_segments()), 0.0);
    fs::path acc_path = fs::path(dir) / "stored_acc.csv";
    if (fs::exists(acc_path)) {
        auto table = util::read_csv(acc_path.string());
        for (const auto& row : table.rows) {
            int exit_id = static_cast<int>(util::parse_int(row.at(0), "stored_acc exit"));
            if (exit_id >= 1 && exit_id <= net.num_segments()) {
                state.stored_acc[static_cast<std::size_t>(exit_id - 1)] =
                    util::parse_double(row.at(1), "stored_acc value");
            }
        }
    }
    state.any_threshold_missed = false;
    for (const auto& s : state.stages) {
        if (!s.threshold_met) state.any_threshold_missed = true;
    }
    (void)cfg;
    return k;
}

}  // namespace

TrainReport pretrain_all(ElasticNetwork& net, const data::Dataset& train_ds, const data::Dataset& eval_ds,
                         const TrainConfig& cfg, const std::string& checkpoint_dir, bool resume) {
    int n = net.num_segments();
    validate_config(cfg, n);
    if (train_ds.size() == 0 || eval_ds.size() == 0) {
        throw std::invalid_argument("pretrain_all: train and eval splits must be non-empty");
    }

    TrainReport state;
    state.stored_acc.assign(static_cast<std::size_t>(n), 0.0);
    int start = 1;
    if (!checkpoint_dir.empty()) {
        fs::create_directories(checkpoint_dir);
        if (resume) start = restore_state(checkpoint_dir, net, cfg, state) + 1;
    }

    for (int stage = start; stage <= n; ++stage) {
        train_stage(stage, net, train_ds, eval_ds, cfg, state);
        if (!checkpoint_dir.empty()) persist_state(checkpoint_dir, net, state);
        if (cfg.stop_after_stage && stage >= *cfg.stop_after_stage) break;
    }

    VariantConfig final_variant;
    final_variant.ops.assign(static_cast<std::size_t>(net.num_slots()), OperatorKind::baseline_conv);
    final_variant.exit_id = n;
    final_variant.variant_id = elastic::make_variant_id(final_variant.ops, final_variant.exit_id);
    net.apply_variant(final_variant);
    return state;
}

double train_monolithic(ElasticNetwork& net, const data::Dataset& train_ds, const data::Dataset& eval_ds,
                        const TrainConfig& cfg, int epochs) {
    if (epochs < 1) throw std::invalid_argument("train_monolithic: epochs must be positive");
    int n = net.num_segments();
    VariantConfig v;
    v.ops.assign(static_cast<std::size_t>(net.num_slots()), OperatorKind::baseline_conv);
    v.exit_id = n;
    v.variant_id = elastic::make_variant_id(v.ops, v.exit_id);
    net.apply_variant(v);
    return run_epochs(net, train_ds, eval_ds, cfg, /*rng_stage=*/1, n, /*first_segment=*/1,
                      /*threshold=*/2.0, epochs, nullptr);
}

void export_train_report_csv(const std::string& path, const TrainReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : report.stages) {
        rows.push_back({std::to_string(s.stage), std::to_string(s.epochs_used), util::format_double(s.accuracy),
                        util::format_double(s.seconds)});
    }
    util::write_csv(path, {"stage", "epochs", "acc", "seconds"}, rows);
}

TrainReport read_train_report_csv(const std::string& path) {
    auto table = util::read_csv(path);
    if (table.header != std::vector<std::string>{"stage", "epochs", "acc", "seconds"}) {
        throw std::invalid_argument(path + ": not a training report csv");
    }
    TrainReport report;
    for (const auto& row : table.rows) {
        StageReport s;
        s.stage = static_cast<int>(util::parse_int(row[0], "report stage"));
        s.epochs_used = static_cast<int>(util::parse_int(row[1], "report epochs"));
        s.accuracy = util::parse_double(row[2], "report acc");
        s.seconds = util::parse_double(row[3], "report seconds");
        s.threshold_met = true;  // not persisted; recomputed by callers that care
        report.stages.push_back(std::move(s));
    }
    return report;
}

}  // namespace elastinet::train

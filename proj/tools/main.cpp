#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "elastinet/adaptation.hpp"
#include "elastinet/elastic.hpp"
#include "elastinet/io.hpp"
#include "elastinet/monitor.hpp"
#include "elastinet/perf_tables.hpp"
#include "elastinet/profiler.hpp"
#include "elastinet/training.hpp"

namespace fs = std::filesystem;
using namespace elastinet;

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "out";
    long long seed = -1;  // -1: defer to the config's run.seed
    std::vector<std::string> sets;
    bool resume = false;
};

std::string existing_path(const std::string& path, const std::string& what) {
    if (path.empty()) throw std::invalid_argument("missing " + what + " path");
    if (!fs::exists(path)) throw std::invalid_argument(what + " file does not exist: " + path);
    return path;
}

util::KvConfig load_config(const CommonArgs& args) {
    util::KvConfig cfg = util::KvConfig::parse_file(existing_path(args.config, "config"));
    for (const auto& s : args.sets) cfg.set_override(s);
    return cfg;
}

std::uint64_t resolve_seed(const util::KvConfig& cfg, const CommonArgs& args) {
    if (args.seed >= 0) return static_cast<std::uint64_t>(args.seed);
    return static_cast<std::uint64_t>(cfg.get_int("run", "seed", 1));
}

elastic::ArchSpec load_arch(const util::KvConfig& cfg) {
    return elastic::parse_arch_file(existing_path(cfg.get("paths", "arch", ""), "arch spec"));
}

perf::DeviceProfile load_device(const util::KvConfig& cfg) {
    return perf::DeviceProfile::from_file(existing_path(cfg.get("paths", "device", ""), "device profile"));
}

train::TrainConfig train_config_from(const util::KvConfig& cfg, int num_exits, std::uint64_t seed) {
    train::TrainConfig tc;
    tc.mode = train::update_mode_from_name(cfg.get("train", "mode", "freeze_prior"));
    if (cfg.has("train", "thresholds")) {
        tc.acc_thresholds = util::parse_double_list(cfg.get("train", "thresholds", ""), "train.thresholds");
    } else {
        tc.acc_thresholds.assign(static_cast<std::size_t>(num_exits), 0.9);
    }
    tc.max_epochs_per_stage = static_cast<int>(cfg.get_int("train", "max_epochs", tc.max_epochs_per_stage));
    tc.batch_size = static_cast<int>(cfg.get_int("train", "batch_size", tc.batch_size));
    tc.lr = cfg.get_double("train", "lr", tc.lr);
    if (cfg.has("train", "lr_milestones")) {
        tc.lr_milestones = util::parse_int_list(cfg.get("train", "lr_milestones", ""), "train.lr_milestones");
    }
    tc.lr_gamma = cfg.get_double("train", "lr_gamma", tc.lr_gamma);
    tc.momentum = cfg.get_double("train", "momentum", tc.momentum);
    tc.weight_decay = cfg.get_double("train", "weight_decay", tc.weight_decay);
    tc.seed = seed;
    long long stop = cfg.get_int("train", "stop_after_stage", 0);
    if (stop > 0) tc.stop_after_stage = static_cast<int>(stop);
    return tc;
}

data::Dataset train_split(const util::KvConfig& cfg) {
    return data::make_bars_dataset(static_cast<int>(cfg.get_int("data", "train_samples", 2048)),
                                   static_cast<std::uint64_t>(cfg.get_int("data", "seed", 7)));
}

data::Dataset eval_split(const util::KvConfig& cfg) {
    return data::make_bars_dataset(static_cast<int>(cfg.get_int("data", "eval_samples", 512)),
                                   static_cast<std::uint64_t>(cfg.get_int("data", "seed", 7)) + 1);
}

std::vector<double> default_accuracy_ramp(int num_exits) {
    std::vector<double> base(static_cast<std::size_t>(num_exits), 0.95);
    for (int i = 0; i < num_exits; ++i) {
        base[static_cast<std::size_t>(i)] =
            num_exits == 1 ? 0.95 : 0.60 + 0.35 * static_cast<double>(i) / (num_exits - 1);
    }
    return base;
}

tables::AccuracySource accuracy_source_from(const util::KvConfig& cfg, const elastic::ArchSpec& spec,
                                            elastic::ElasticNetwork& net, const std::string& out) {
    int n = static_cast<int>(spec.segments.size());
    std::string mode = cfg.get("index", "accuracy", "synthetic");
    if (mode == "synthetic" || mode == "report") {
        tables::SyntheticAccuracy sa;
        if (mode == "report") {
            std::string path = existing_path(
                cfg.get("index", "report", out + "/train/train_report.csv"), "training report");
            train::TrainReport rep = train::read_train_report_csv(path);
            if (static_cast<int>(rep.stages.size()) != n) {
                throw std::invalid_argument(path + ": report covers " + std::to_string(rep.stages.size()) +
                                            " stages but the network has " + std::to_string(n) + " exits");
            }
            for (const auto& s : rep.stages) sa.base_per_exit.push_back(s.accuracy);
            sa.penalty_dwsep = sa.penalty_grouped = sa.penalty_lowrank = 0.0;
        } else {
            sa.base_per_exit = cfg.has("index", "synthetic_base")
                                   ? util::parse_double_list(cfg.get("index", "synthetic_base", ""),
                                                             "index.synthetic_base")
                                   : default_accuracy_ramp(n);
            if (static_cast<int>(sa.base_per_exit.size()) != n) {
                throw std::invalid_argument("index.synthetic_base needs one value per exit (" + std::to_string(n) +
                                            ")");
            }
            sa.penalty_dwsep = cfg.get_double("index", "penalty_dwsep", sa.penalty_dwsep);
            sa.penalty_grouped = cfg.get_double("index", "penalty_grouped", sa.penalty_grouped);
            sa.penalty_lowrank = cfg.get_double("index", "penalty_lowrank", sa.penalty_lowrank);
        }
        return tables::make_synthetic_accuracy(std::move(sa), tables::slot_segments(spec));
    }
    if (mode == "eval") {
        // Measured accuracy: applies each variant and evaluates it. Slow —
        // every variant runs the full eval split.
        int samples = static_cast<int>(cfg.get_int("index", "eval_samples", 256));
        auto ds = data::make_bars_dataset(samples, static_cast<std::uint64_t>(cfg.get_int("data", "seed", 7)) + 2);
        return [&net, ds = std::move(ds)](const elastic::VariantConfig& v) -> std::optional<double> {
            net.apply_variant(v);
            return elastic::eval_accuracy(net, ds, v.exit_id);
        };
    }
    throw std::invalid_argument("index.accuracy must be synthetic, report, or eval; got '" + mode + "'");
}

adapt::LoopOptions loop_options_from(const util::KvConfig& cfg, std::uint64_t seed) {
    adapt::LoopOptions opt;
    opt.policy.lo = cfg.get_double("policy", "lo", opt.policy.lo);
    opt.policy.hi = cfg.get_double("policy", "hi", opt.policy.hi);
    opt.policy.cooldown_ms = cfg.get_int("policy", "cooldown_ms", opt.policy.cooldown_ms);
    opt.policy.horizon = static_cast<int>(cfg.get_int("policy", "horizon", opt.policy.horizon));
    opt.constraints.t_budget_s = cfg.get_double("constraints", "t_budget_s", opt.constraints.t_budget_s);
    opt.constraints.e_budget_j = cfg.get_double("constraints", "e_budget_j", opt.constraints.e_budget_j);
    opt.constraints.acc_min = cfg.get_double("constraints", "acc_min", opt.constraints.acc_min);
    opt.objective.alpha = cfg.get_double("objective", "alpha", opt.objective.alpha);
    opt.objective.beta = cfg.get_double("objective", "beta", opt.objective.beta);
    opt.weights.w_cpu = cfg.get_double("monitor", "w_cpu", opt.weights.w_cpu);
    opt.weights.w_gpu = cfg.get_double("monitor", "w_gpu", opt.weights.w_gpu);
    opt.weights.w_mem = cfg.get_double("monitor", "w_mem", opt.weights.w_mem);
    opt.ar_order = static_cast<int>(cfg.get_int("monitor", "ar_order", opt.ar_order));
    opt.ar_window = static_cast<int>(cfg.get_int("monitor", "ar_window", opt.ar_window));
    opt.ar_refit = static_cast<int>(cfg.get_int("monitor", "ar_refit", opt.ar_refit));
    opt.shock_threshold = cfg.get_double("monitor", "shock", opt.shock_threshold);
    opt.adapt_enabled = cfg.get_int("simulate", "adapt", 1) != 0;
    std::string fixed = cfg.get("simulate", "fixed_variant", "");
    if (!fixed.empty()) opt.fixed_variant = fixed;
    opt.serve_every = static_cast<int>(cfg.get_int("simulate", "serve_every", opt.serve_every));
    opt.confidence = cfg.get_double("simulate", "confidence", opt.confidence);
    opt.seed = seed;
    return opt;
}

int cmd_train(const CommonArgs& args) {
    util::KvConfig cfg = load_config(args);
    std::uint64_t seed = resolve_seed(cfg, args);
    elastic::ArchSpec spec = load_arch(cfg);
    elastic::ElasticNetwork net(spec, seed);
    data::Dataset tr = train_split(cfg);
    data::Dataset ev = eval_split(cfg);
    train::TrainConfig tc = train_config_from(cfg, net.num_segments(), seed);

    fs::create_directories(args.out);
    train::TrainReport rep = train::pretrain_all(net, tr, ev, tc, args.out + "/train", args.resume);
    for (const auto& s : rep.stages) {
        std::cout << "stage " << s.stage << ": acc=" << util::format_double(s.accuracy) << " epochs=" << s.epochs_used
                  << " time=" << util::format_double(s.seconds) << "s"
                  << (s.threshold_met ? "" : "  [threshold missed]") << "\n";
    }
    if (rep.any_threshold_missed) {
        std::cout << "warning: at least one stage finished below its accuracy threshold\n";
    }
    std::cout << "report: " << args.out << "/train/train_report.csv\n";
    return 0;
}

int cmd_profile(const CommonArgs& args) {
    util::KvConfig cfg = load_config(args);
    std::uint64_t seed = resolve_seed(cfg, args);
    elastic::ElasticNetwork net(load_arch(cfg), seed);
    perf::DeviceProfile device = load_device(cfg);
    double epsilon = cfg.get_double("index", "epsilon", -1.0);

    std::vector<elastic::VariantConfig> variants = net.enumerate_variants(net.variant_space_size());
    std::vector<perf::PerfPrediction> rows;
    rows.reserve(variants.size());
    for (const auto& v : variants) rows.push_back(perf::predict(net, v, device, epsilon));

    fs::create_directories(args.out);
    perf::export_profile_csv(args.out + "/profile.csv", rows);
    elastic::export_variant_csv(args.out + "/variants.csv", variants);
    std::cout << rows.size() << " variants profiled -> " << args.out << "/profile.csv\n";
    return 0;
}

int cmd_build_index(const CommonArgs& args) {
    util::KvConfig cfg = load_config(args);
    std::uint64_t seed = resolve_seed(cfg, args);
    elastic::ArchSpec spec = load_arch(cfg);
    elastic::ElasticNetwork net(spec, seed);
    perf::DeviceProfile device = load_device(cfg);
    double epsilon = cfg.get_double("index", "epsilon", -1.0);

    std::vector<elastic::VariantConfig> variants = net.enumerate_variants(net.variant_space_size());
    tables::AccuracySource acc = accuracy_source_from(cfg, spec, net, args.out);
    std::vector<std::string> warnings;
    tables::PerfTables tbl = tables::PerfTables::build(variants, net, device, acc, &warnings, epsilon);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    fs::create_directories(args.out);
    std::string path = cfg.get("paths", "tables", args.out + "/tables.adpt");
    tbl.save(path);
    std::cout << tbl.size() << " variants indexed -> " << path << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args) {
    util::KvConfig cfg = load_config(args);
    std::uint64_t seed = resolve_seed(cfg, args);
    elastic::ElasticNetwork net(load_arch(cfg), seed);
    std::string tables_path =
        existing_path(cfg.get("paths", "tables", args.out + "/tables.adpt"), "performance tables");
    tables::PerfTables tbl = tables::PerfTables::load(tables_path);
    if (cfg.has("paths", "checkpoint")) {
        net.load(existing_path(cfg.get("paths", "checkpoint", ""), "checkpoint"));
    }

    fs::create_directories(args.out);
    std::vector<monitor::ResourceSnapshot> trace;
    if (cfg.has("paths", "trace")) {
        trace = monitor::read_trace_csv(existing_path(cfg.get("paths", "trace", ""), "trace"));
    } else {
        trace = monitor::synth_trace(cfg.get("simulate", "pattern", "square_wave"),
                                     cfg.get_double("simulate", "duration_s", 60.0), seed,
                                     cfg.get_double("simulate", "trace_lo", 0.2),
                                     cfg.get_double("simulate", "trace_hi", 0.9),
                                     cfg.get_double("simulate", "period_s", 5.0));
        monitor::write_trace_csv(args.out + "/trace.csv", trace);
    }

    adapt::LoopOptions opt = loop_options_from(cfg, seed);
    adapt::LoopResult res = adapt::run_loop(net, trace, tbl, opt);
    adapt::export_event_log_csv(args.out + "/events.csv", res.events);

    std::vector<double> t_s(res.tick_t_ms.size());
    for (std::size_t i = 0; i < t_s.size(); ++i) t_s[i] = res.tick_t_ms[i] / 1000.0;
    util::write_svg_chart(args.out + "/latency.svg", "served predicted latency (s) over time (s)",
                          {{"predicted latency", "#0a6ebd", t_s, res.served_latency_s}});
    util::write_svg_chart(args.out + "/load.svg", "load index over time (s)",
                          {{"load index", "#0a6ebd", t_s, res.load_series},
                           {"1-step forecast", "#bd3a0a", t_s, res.forecast_series}});

    double mean_latency = 0.0;
    for (double v : res.served_latency_s) mean_latency += v;
    if (!res.served_latency_s.empty()) mean_latency /= static_cast<double>(res.served_latency_s.size());
    std::cout << "ticks=" << res.load_series.size() << " switches=" << res.switches
              << " degraded=" << res.degraded_ticks << " final=" << res.final_variant << "\n";
    std::cout << "mean predicted latency = " << util::format_double(mean_latency)
              << " s; median search time = " << util::format_double(res.search_time_ms_median) << " ms\n";
    std::cout << "events: " << args.out << "/events.csv\n";
    if (res.feasibility_violated) {
        std::cerr << "error: a selected variant violated the configured constraints\n";
        return 1;
    }
    return 0;
}

void append_csv_section(std::ostream& os, const std::string& title, const std::string& path,
                        bool sort_by_stage) {
    os << "## " << title << "\n\n";
    if (!fs::exists(path)) {
        os << "_no data (" << path << " not found)_\n\n";
        return;
    }
    util::CsvTable t = util::read_csv(path);
    std::vector<std::vector<std::string>> rows = t.rows;
    if (sort_by_stage && !rows.empty()) {
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            return util::parse_int(a[0], "stage") < util::parse_int(b[0], "stage");
        });
    }
    os << "|";
    for (const auto& h : t.header) os << " " << h << " |";
    os << "\n|";
    for (std::size_t i = 0; i < t.header.size(); ++i) os << " --- |";
    os << "\n";
    for (const auto& r : rows) {
        os << "|";
        for (const auto& c : r) os << " " << c << " |";
        os << "\n";
    }
    os << "\n";
}

int cmd_report(const CommonArgs& args) {
    std::ostringstream os;
    os << "# Run summary\n\n";
    append_csv_section(os, "Training stages (by exit depth)", args.out + "/train/train_report.csv", true);
    append_csv_section(os, "Variant profile", args.out + "/profile.csv", false);
    append_csv_section(os, "Adaptation events", args.out + "/events.csv", false);
    fs::create_directories(args.out);
    util::write_text_file(args.out + "/report.md", os.str());
    std::cout << "report -> " << args.out << "/report.md\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elastic network runtime adaptation toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", args.config, "key=value config file with [section] headers");
        if (needs_config) c->required();
        sub->add_option("--out", args.out, "output directory (default: out)");
        sub->add_option("--seed", args.seed, "override run.seed from the config");
        sub->add_option("--set", args.sets, "override a config key: section.key=value")->take_all();
    };

    CLI::App* train_cmd = app.add_subcommand("train", "multi-stage training of the elastic network");
    add_common(train_cmd, true);
    train_cmd->add_flag("--resume", args.resume, "continue after the last completed stage checkpoint");
    CLI::App* profile_cmd = app.add_subcommand("profile", "analytic cost model over every variant");
    add_common(profile_cmd, true);
    CLI::App* index_cmd = app.add_subcommand("build-index", "build and persist the performance tables");
    add_common(index_cmd, true);
    CLI::App* sim_cmd = app.add_subcommand("simulate", "replay a load trace through the adaptation loop");
    add_common(sim_cmd, true);
    CLI::App* report_cmd = app.add_subcommand("report", "summarize the output directory as markdown");
    add_common(report_cmd, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(args);
        if (profile_cmd->parsed()) return cmd_profile(args);
        if (index_cmd->parsed()) return cmd_build_index(args);
        if (sim_cmd->parsed()) return cmd_simulate(args);
        return cmd_report(args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

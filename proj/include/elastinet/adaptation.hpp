#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "elastinet/monitor.hpp"
#include "elastinet/perf_tables.hpp"

namespace elastinet::adapt {

// Scalarization weights for the latency/energy trade-off: J = α·L + β·E.
struct Objective {
    double alpha = 0.5;
    double beta = 0.5;
    void validate() const;
};

double objective_j(double latency_s, double energy_j, const Objective& obj);

// Hard runtime constraints; infinities disable a bound.
struct Constraints {
    double t_budget_s = std::numeric_limits<double>::infinity();
    double e_budget_j = std::numeric_limits<double>::infinity();
    double acc_min = 0.0;
};

struct Selection {
    std::uint32_t rid = 0;
    std::string variant_id;
    double latency_s = 0.0;
    double energy_j = 0.0;
    double accuracy = 0.0;
    double j = 0.0;
};

// Constrained argmin-J over the indexed tables: candidates within the budgets,
// filtered by accuracy, ties broken by lower latency, then lower energy, then
// lexicographic variant_id. `exit_filter` restricts to one exit branch. An
// empty candidate set yields nullopt and a relax-constraints diagnostic.
std::optional<Selection> select_variant(const tables::PerfTables& tbl, const Constraints& cons,
                                        const Objective& obj, std::string* diagnostic = nullptr,
                                        std::optional<int> exit_filter = std::nullopt);

// Demand vector [E, L, Acc, R] against capability vector [C_cpu, C_gpu, C_mem].
// Units differ, so L and E are min-max normalized against table extrema and
// paired L↔C_cpu and E↔(C_gpu when present, else C_cpu); Acc and R have no
// capability counterpart and are excluded from the distance, which callers
// must surface as a flagged, reporting-only figure.
struct DemandCapability {
    double energy_j = 0.0;
    double latency_s = 0.0;
    double accuracy = 0.0;
    double response_s = 0.0;
    double c_cpu = 0.0;
    double c_gpu = 0.0;
    double c_mem = 0.0;
    bool gpu_present = false;
};

struct MismatchNormalizers {
    double latency_lo = 0.0, latency_hi = 1.0;
    double energy_lo = 0.0, energy_hi = 1.0;
};

double mismatch_distance(const DemandCapability& pc, const MismatchNormalizers& norm,
                         bool* unpaired_flagged = nullptr);

// Trigger policy: act only when the forecast crosses the hysteresis band in
// the direction opposite the current regime, and never within the cooldown.
struct TriggerPolicy {
    double lo = 0.35;
    double hi = 0.75;
    long long cooldown_ms = 1000;
    int horizon = 3;
    void validate() const;
};

enum class Regime { low, high };

struct TriggerDecision {
    bool adapt = false;
    std::string reason;
    Regime target = Regime::low;
};

TriggerDecision should_adapt(const std::vector<double>& forecast, Regime current, long long now_ms,
                             long long last_switch_ms, const TriggerPolicy& policy);

struct AdaptationEvent {
    long long t_ms = 0;
    std::string trigger;  // "init", "load-rise", "load-drop", "degraded"
    std::string old_variant;
    std::string new_variant;
    double pred_latency_s = 0.0;
    double pred_energy_j = 0.0;
    double load_forecast = 0.0;
};

struct LoopOptions {
    TriggerPolicy policy;
    Constraints constraints;
    Objective objective;
    monitor::LoadWeights weights;
    int ar_order = 3;
    int ar_window = 200;
    int ar_refit = 50;
    double shock_threshold = 0.2;
    bool adapt_enabled = true;    // false pins the initial selection (comparison baseline)
    std::optional<std::string> fixed_variant;  // overrides the initial selection
    int serve_every = 0;          // run one inference every k ticks (0 = none)
    double confidence = 0.85;     // early-exit threshold for served inferences
    std::uint64_t seed = 1;
};

struct LoopResult {
    std::vector<AdaptationEvent> events;  // first entry is the "init" selection
    std::vector<double> load_series;      // load index per tick
    std::vector<double> forecast_series;  // one-step forecast per tick
    std::vector<double> served_latency_s; // predicted latency of the active variant per tick
    std::vector<double> tick_t_ms;
    int switches = 0;                     // variant changes after init
    int degraded_ticks = 0;               // triggers with no feasible candidate
    bool feasibility_violated = false;    // an applied variant broke a constraint
    std::string final_variant;
    double search_time_ms_median = 0.0;   // per-selection table search cost
};

// Replays a utilization trace through forecasting, triggering, constrained
// re-selection (latency budget tightened to T/(1+forecast)), variant swaps on
// the network, and optional inference serving. The deepest exit with any
// feasible candidate is preferred; within it the argmin-J variant wins.
LoopResult run_loop(elastic::ElasticNetwork& net, const std::vector<monitor::ResourceSnapshot>& trace,
                    const tables::PerfTables& tbl, const LoopOptions& opt);

void export_event_log_csv(const std::string& path, const std::vector<AdaptationEvent>& events);
std::vector<AdaptationEvent> read_event_log_csv(const std::string& path);

}  // namespace elastinet::adapt

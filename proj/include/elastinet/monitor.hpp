#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace elastinet::monitor {

// One utilization sample. Fractions are clamped to [0,1] by producers;
// f_cpu_hz is 0 when the source does not report clock frequency.
struct ResourceSnapshot {
    long long t_ms = 0;
    double u_cpu = 0.0;
    double u_gpu = 0.0;
    double u_mem = 0.0;
    double f_cpu_hz = 0.0;
};

// Weights of the load-index mixture. On hosts without a GPU the GPU weight
// is auto-zeroed so the index degrades gracefully.
struct LoadWeights {
    double w_cpu = 1.0;
    double w_gpu = 1.0;
    double w_mem = 1.0;
    void validate() const;
};

// Aggregate-CPU utilization from two /proc/stat "cpu" lines:
// u = 1 − Δidle/Δtotal with idle including iowait.
double cpu_util_from_stat(const std::string& prev_line, const std::string& curr_line);

// Weighted mean of the clamped utilizations: I = (Σ w·u) / Σ w.
double load_index(const ResourceSnapshot& snap, const LoadWeights& weights);

// Least-squares AR(p) fit of a load series. A rank-deficient design (e.g. a
// constant series) degrades to the intercept-only model with the sample mean.
struct ARModel {
    int order = 0;
    std::vector<double> phi;  // phi[0] multiplies the most recent sample
    double intercept = 0.0;
    double resid_var = 0.0;
    bool fitted = false;
};

ARModel fit_ar(const std::vector<double>& history, int order);

// Iterated one-step predictions, each clamped to [0,1] before being fed back.
std::vector<double> forecast(const ARModel& model, const std::vector<double>& history, int horizon);

// Streaming wrapper: keeps a sliding window, refits periodically, and falls
// back to persistence (repeat the last observation) while under-sampled or
// right after a prediction shock larger than shock_threshold — an AR model
// refit every `refit_every` samples smooths over abrupt load edges otherwise.
class Forecaster {
public:
    explicit Forecaster(int order = 3, int window = 200, int refit_every = 50, double shock_threshold = 0.2);

    void observe(double load);
    std::vector<double> predict(int horizon) const;
    const ARModel& model() const { return model_; }
    std::size_t samples_seen() const { return seen_; }

private:
    int order_;
    int window_;
    int refit_every_;
    double shock_threshold_;
    std::deque<double> history_;
    ARModel model_;
    std::size_t seen_ = 0;
    double last_abs_error_ = 0.0;
};

// Synthetic utilization traces at a fixed 100 ms cadence; u_cpu = u_gpu =
// u_mem = the pattern value so the load index equals the pattern under any
// weights. Patterns: steady (level = lo), square_wave (lo/hi plateaus of
// period_s/2 each), random_walk, user_session (idle/burst alternation).
std::vector<ResourceSnapshot> synth_trace(const std::string& pattern, double duration_s, std::uint64_t seed,
                                          double lo = 0.2, double hi = 0.9, double period_s = 5.0);

void write_trace_csv(const std::string& path, const std::vector<ResourceSnapshot>& snaps);
std::vector<ResourceSnapshot> read_trace_csv(const std::string& path);

}  // namespace elastinet::monitor

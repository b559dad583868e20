#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "elastinet/elastic.hpp"
#include "elastinet/layers.hpp"

namespace elastinet::perf {

// Power/frequency characteristics of the host, loaded from a key=value file.
// Frequencies are Hz, powers watts. A profile without a GPU keeps the GPU
// term of the energy model at zero.
struct DeviceProfile {
    double p_cpu_w = 5.0;
    double p_gpu_w = 0.0;
    double p_mem_w = 2.0;
    double f_cpu_hz = 1e9;
    double f_gpu_hz = 1e9;
    double f_mem_hz = 1e8;
    double ops_per_cycle = 4.0;
    double epsilon_default = 0.8;
    bool has_gpu = false;

    void validate() const;
    static DeviceProfile from_file(const std::string& path);
    void save(const std::string& path) const;
};

// Variant-intrinsic cost: FLOPs, learnable element count, float32 storage.
struct IntrinsicMetrics {
    double flops = 0.0;
    std::uint64_t params = 0;
    std::uint64_t storage_bytes = 0;
};

IntrinsicMetrics count_intrinsics(const elastic::ElasticNetwork& net, const elastic::VariantConfig& v);

// Total bytes moved per inference: sum over layers of
// (inputs + outputs + weights + biases) element counts, times the dtype width.
std::uint64_t memory_access(const std::vector<nn::LayerMem>& profile, int dtype_bytes = 4);

// Cache-rate estimators. The timing form reports t_avg/t0 (1 when every access
// costs the slow-path time t0); the counting form reports hits/total with the
// cold-start 0/0 case defined as zero. The counting estimator is the one fed
// into the energy model by default.
double cache_rate_timing(double t0_s, double t_avg_s);
double cache_rate_counting(std::uint64_t hits, std::uint64_t total);

// Energy per inference given memory-operation counts split across units:
// E = m_cpu·P_cpu·ε/f_cpu + m_gpu·P_gpu/f_gpu + m_mem·P_mem·(1−ε)/f_mem.
// m/f is seconds, times watts is joules. Rejects a zero frequency on any unit
// with a non-zero count.
double energy(double m_cpu, double m_gpu, double m_mem, const DeviceProfile& device, double epsilon);

// First-stage latency model: pure compute-bound estimate C/(f_cpu·ops_per_cycle).
double theoretical_latency(double flops, const DeviceProfile& device);

// Second stage: an affine load correction L_theory·(a + b·load), fitted from
// (load_index, measured/theoretical ratio) observations and constrained to
// a ≥ 1, b ≥ 0 so the corrected value never undercuts the theoretical floor.
struct LatencyCalibration {
    double a = 1.0;
    double b = 0.0;
    bool fitted = false;
};

double calibrated_latency(double l_theory_s, double load_index, const LatencyCalibration& calib);
LatencyCalibration fit_latency_calibration(const std::vector<std::pair<double, double>>& samples);

// Median eval-mode wall clock of forward_to_exit over `reps` timed runs,
// warm-up runs excluded. Inner iterations auto-scale so each timed run is
// long enough to register. Needs exclusive use of the network.
double measure_latency(elastic::ElasticNetwork& net, const elastic::VariantConfig& v, int exit_id, int reps);

// One profiler-report row: intrinsics plus model predictions for a variant.
struct PerfPrediction {
    std::string variant_id;
    double flops = 0.0;
    std::uint64_t params = 0;
    std::uint64_t storage_bytes = 0;
    std::uint64_t mem_bytes = 0;
    double latency_s = 0.0;
    double energy_j = 0.0;
};

// Full prediction for one variant. Memory traffic M is split into unit
// counts as m_cpu = ε·M/4, m_mem = (1−ε)·M/4 (4-byte words), m_gpu = 0
// unless the profile declares a GPU. epsilon < 0 means "use the profile
// default".
PerfPrediction predict(const elastic::ElasticNetwork& net, const elastic::VariantConfig& v,
                       const DeviceProfile& device, double epsilon = -1.0);

void export_profile_csv(const std::string& path, const std::vector<PerfPrediction>& rows);
std::vector<PerfPrediction> read_profile_csv(const std::string& path);

}  // namespace elastinet::perf

#include "elastinet/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "elastinet/io.hpp"

namespace elastinet::perf {

using elastic::ElasticNetwork;
using elastic::VariantConfig;

void DeviceProfile::validate() const {
    if (!(p_cpu_w > 0.0) || !(p_mem_w > 0.0)) throw std::invalid_argument("device profile: powers must be positive");
    if (has_gpu && !(p_gpu_w > 0.0)) throw std::invalid_argument("device profile: GPU declared but p_gpu_w not positive");
    if (!(f_cpu_hz > 0.0) || !(f_mem_hz > 0.0) || (has_gpu && !(f_gpu_hz > 0.0))) {
        throw std::invalid_argument("device profile: frequencies must be positive");
    }
    if (!(ops_per_cycle > 0.0)) throw std::invalid_argument("device profile: ops_per_cycle must be positive");
    if (epsilon_default < 0.0 || epsilon_default > 1.0) {
        throw std::invalid_argument("device profile: epsilon_default must lie in [0,1]");
    }
}

DeviceProfile DeviceProfile::from_file(const std::string& path) {
    util::KvConfig cfg = util::KvConfig::parse_file(path);
    DeviceProfile d;
    d.p_cpu_w = cfg.get_double("", "p_cpu_w", d.p_cpu_w);
    d.p_gpu_w = cfg.get_double("", "p_gpu_w", d.p_gpu_w);
    d.p_mem_w = cfg.get_double("", "p_mem_w", d.p_mem_w);
    d.f_cpu_hz = cfg.get_double("", "f_cpu_hz", d.f_cpu_hz);
    d.f_gpu_hz = cfg.get_double("", "f_gpu_hz", d.f_gpu_hz);
    d.f_mem_hz = cfg.get_double("", "f_mem_hz", d.f_mem_hz);
    d.ops_per_cycle = cfg.get_double("", "ops_per_cycle", d.ops_per_cycle);
    d.epsilon_default = cfg.get_double("", "epsilon_default", d.epsilon_default);
    d.has_gpu = cfg.get_int("", "has_gpu", d.has_gpu ? 1 : 0) != 0;
    d.validate();
    return d;
}

void DeviceProfile::save(const std::string& path) const {
    std::ostringstream os;
    os << "p_cpu_w=" << util::format_double(p_cpu_w) << "\n";
    os << "p_gpu_w=" << util::format_double(p_gpu_w) << "\n";
    os << "p_mem_w=" << util::format_double(p_mem_w) << "\n";
    os << "f_cpu_hz=" << util::format_double(f_cpu_hz) << "\n";
    os << "f_gpu_hz=" << util::format_double(f_gpu_hz) << "\n";
    os << "f_mem_hz=" << util::format_double(f_mem_hz) << "\n";
    os << "ops_per_cycle=" << util::format_double(ops_per_cycle) << "\n";
    os << "epsilon_default=" << util::format_double(epsilon_default) << "\n";
    os << "has_gpu=" << (has_gpu ? 1 : 0) << "\n";
    util::write_text_file(path, os.str());
}

IntrinsicMetrics count_intrinsics(const ElasticNetwork& net, const VariantConfig& v) {
    nn::CostAccum acc = net.cost_for(v);
    IntrinsicMetrics m;
    m.flops = static_cast<double>(acc.flops);
    m.params = static_cast<std::uint64_t>(acc.params);
    m.storage_bytes = m.params * 4;
    return m;
}

std::uint64_t memory_access(const std::vector<nn::LayerMem>& profile, int dtype_bytes) {
    if (dtype_bytes < 1) throw std::invalid_argument("memory_access: dtype_bytes must be positive");
    std::uint64_t elems = 0;
    for (const auto& l : profile) {
        elems += static_cast<std::uint64_t>(l.in_elems + l.out_elems + l.weight_elems + l.bias_elems);
    }
    return elems * static_cast<std::uint64_t>(dtype_bytes);
}

double cache_rate_timing(double t0_s, double t_avg_s) {
    if (!(t0_s > 0.0)) throw std::invalid_argument("cache_rate_timing: t0 must be positive");
    if (t_avg_s < 0.0 || t_avg_s > t0_s) {
        throw std::invalid_argument("cache_rate_timing: t_avg must lie in [0, t0]");
    }
    return t_avg_s / t0_s;
}

double cache_rate_counting(std::uint64_t hits, std::uint64_t total) {
    if (hits > total) throw std::invalid_argument("cache_rate_counting: hits exceed total accesses");
    if (total == 0) return 0.0;
    return static_cast<double>(hits) / static_cast<double>(total);
}

double energy(double m_cpu, double m_gpu, double m_mem, const DeviceProfile& device, double epsilon) {
    if (m_cpu < 0.0 || m_gpu < 0.0 || m_mem < 0.0) throw std::invalid_argument("energy: counts must be non-negative");
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("energy: epsilon must lie in [0,1]");
    if (!(device.f_cpu_hz > 0.0) || !(device.f_gpu_hz > 0.0) || !(device.f_mem_hz > 0.0)) {
        throw std::invalid_argument("energy: all unit frequencies must be positive");
    }
    return m_cpu * device.p_cpu_w * epsilon / device.f_cpu_hz + m_gpu * device.p_gpu_w / device.f_gpu_hz +
           m_mem * device.p_mem_w * (1.0 - epsilon) / device.f_mem_hz;
}

double theoretical_latency(double flops, const DeviceProfile& device) {
    if (flops < 0.0) throw std::invalid_argument("theoretical_latency: flop count must be non-negative");
    if (!(device.f_cpu_hz > 0.0) || !(device.ops_per_cycle > 0.0)) {
        throw std::invalid_argument("theoretical_latency: f_cpu and ops_per_cycle must be positive");
    }
    return flops / (device.f_cpu_hz * device.ops_per_cycle);
}

double calibrated_latency(double l_theory_s, double load_index, const LatencyCalibration& calib) {
    if (!calib.fitted) throw std::invalid_argument("calibrated_latency: calibration has not been fitted");
    if (l_theory_s < 0.0) throw std::invalid_argument("calibrated_latency: latency must be non-negative");
    double a = std::max(1.0, calib.a);
    double b = std::max(0.0, calib.b);
    return std::max(l_theory_s, l_theory_s * (a + b * load_index));
}

LatencyCalibration fit_latency_calibration(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("fit_latency_calibration: need at least 2 samples");
    double n = static_cast<double>(samples.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : samples) {
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw std::invalid_argument("fit_latency_calibration: non-finite sample");
        }
        sx += x;
        sy += y;
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : samples) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_latency_calibration: samples share a single load value");

    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (const auto& [x, y] : samples) {
            double r = y - (a + b * x);
            s += r * r;
        }
        return s;
    };

    // Unconstrained least squares, then project onto {a >= 1, b >= 0} by
    // trying each active constraint and keeping the lower residual.
    double b0 = sxy / sxx;
    double a0 = my - b0 * mx;
    LatencyCalibration best;
    best.fitted = true;
    if (a0 >= 1.0 && b0 >= 0.0) {
        best.a = a0;
        best.b = b0;
        return best;
    }
    // a pinned at 1: minimize over b >= 0.
    double sxx_raw = 0.0, sxy1 = 0.0;
    for (const auto& [x, y] : samples) {
        sxx_raw += x * x;
        sxy1 += x * (y - 1.0);
    }
    double b_pin = sxx_raw > 0.0 ? std::max(0.0, sxy1 / sxx_raw) : 0.0;
    double cand_a[2] = {1.0, std::max(1.0, my)};
    double cand_b[2] = {b_pin, 0.0};
    int pick = sse(cand_a[0], cand_b[0]) <= sse(cand_a[1], cand_b[1]) ? 0 : 1;
    best.a = cand_a[pick];
    best.b = cand_b[pick];
    return best;
}

double measure_latency(ElasticNetwork& net, const VariantConfig& v, int exit_id, int reps) {
    if (reps < 3) throw std::invalid_argument("measure_latency: need at least 3 repetitions");
    net.apply_variant(v);
    nn::Rng rng(0xBEEFuLL);
    nn::Tensor x(net.input_shape());
    for (float& e : x.data) e = static_cast<float>(rng.uniform(-1.0, 1.0));

    using clock = std::chrono::steady_clock;
    // Warm-up, and pick an iteration count that makes each timed run register.
    int iters = 1;
    for (;;) {
        auto t0 = clock::now();
        for (int i = 0; i < iters; ++i) (void)net.forward_to_exit(x, exit_id, false);
        double s = std::chrono::duration<double>(clock::now() - t0).count();
        if (s >= 1e-4 || iters >= 4096) break;
        iters *= 4;
    }

    std::vector<double> per_run(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        auto t0 = clock::now();
        for (int i = 0; i < iters; ++i) (void)net.forward_to_exit(x, exit_id, false);
        per_run[static_cast<std::size_t>(r)] =
            std::chrono::duration<double>(clock::now() - t0).count() / iters;
    }
    std::sort(per_run.begin(), per_run.end());
    return per_run[per_run.size() / 2];
}

PerfPrediction predict(const ElasticNetwork& net, const VariantConfig& v, const DeviceProfile& device,
                       double epsilon) {
    device.validate();
    double eps = epsilon < 0.0 ? device.epsilon_default : epsilon;
    if (eps > 1.0) throw std::invalid_argument("predict: epsilon must lie in [0,1]");

    nn::CostAccum acc = net.cost_for(v);
    PerfPrediction p;
    p.variant_id = v.variant_id.empty() ? elastic::make_variant_id(v.ops, v.exit_id) : v.variant_id;
    p.flops = static_cast<double>(acc.flops);
    p.params = static_cast<std::uint64_t>(acc.params);
    p.storage_bytes = p.params * 4;
    p.mem_bytes = memory_access(acc.mem, 4);

    double words = static_cast<double>(p.mem_bytes) / 4.0;
    double m_cpu = eps * words;
    double m_mem = (1.0 - eps) * words;
    double m_gpu = 0.0;  // desk-scale profile: GPU path unused even when declared
    p.latency_s = theoretical_latency(p.flops, device);
    p.energy_j = energy(m_cpu, m_gpu, m_mem, device, eps);
    return p;
}

void export_profile_csv(const std::string& path, const std::vector<PerfPrediction>& rows) {
    std::vector<std::vector<std::string>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back({r.variant_id, util::format_double_exact(r.flops), std::to_string(r.params),
                       std::to_string(r.storage_bytes), std::to_string(r.mem_bytes),
                       util::format_double_exact(r.latency_s), util::format_double_exact(r.energy_j)});
    }
    util::write_csv(path, {"variant_id", "C", "P", "S", "M", "latency_s", "energy_j"}, out);
}

std::vector<PerfPrediction> read_profile_csv(const std::string& path) {
    auto table = util::read_csv(path);
    if (table.header != std::vector<std::string>{"variant_id", "C", "P", "S", "M", "latency_s", "energy_j"}) {
        throw std::invalid_argument(path + ": not a profiler report csv");
    }
    std::vector<PerfPrediction> rows;
    for (const auto& r : table.rows) {
        PerfPrediction p;
        p.variant_id = r[0];
        p.flops = util::parse_double(r[1], "profile C");
        p.params = static_cast<std::uint64_t>(util::parse_int(r[2], "profile P"));
        p.storage_bytes = static_cast<std::uint64_t>(util::parse_int(r[3], "profile S"));
        p.mem_bytes = static_cast<std::uint64_t>(util::parse_int(r[4], "profile M"));
        p.latency_s = util::parse_double(r[5], "profile latency");
        p.energy_j = util::parse_double(r[6], "profile energy");
        rows.push_back(std::move(p));
    }
    return rows;
}

}  // namespace elastinet::perf

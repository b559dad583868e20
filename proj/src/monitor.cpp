#include "elastinet/monitor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "elastinet/io.hpp"
#include "elastinet/tensor.hpp"

namespace elastinet::monitor {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Fields of an aggregate /proc/stat cpu line, in file order. guest/guest_nice
// are already folded into user/nice by the kernel, so totals stop at steal.
struct StatCounts {
    unsigned long long total = 0;
    unsigned long long idle_all = 0;
};

StatCounts parse_stat_line(const std::string& line) {
    auto tokens = util::split(util::trim(line), ' ');
    std::vector<std::string> fields;
    for (auto& t : tokens) {
        if (!util::trim(t).empty()) fields.push_back(util::trim(t));
    }
    if (fields.empty() || fields[0].rfind("cpu", 0) != 0) {
        throw std::invalid_argument("cpu_util_from_stat: line does not start with 'cpu'");
    }
    if (fields.size() < 5) throw std::invalid_argument("cpu_util_from_stat: need at least user/nice/system/idle");
    StatCounts c;
    std::size_t last = std::min<std::size_t>(fields.size(), 9);  // user..steal
    for (std::size_t i = 1; i < last; ++i) {
        long long v = util::parse_int(fields[i], "cpu stat counter");
        if (v < 0) throw std::invalid_argument("cpu_util_from_stat: negative counter");
        c.total += static_cast<unsigned long long>(v);
        if (i == 4 || i == 5) c.idle_all += static_cast<unsigned long long>(v);  // idle + iowait
    }
    return c;
}

}  // namespace

void LoadWeights::validate() const {
    if (w_cpu < 0.0 || w_gpu < 0.0 || w_mem < 0.0) {
        throw std::invalid_argument("load weights must be non-negative");
    }
    if (!(w_cpu + w_gpu + w_mem > 0.0)) throw std::invalid_argument("load weights must not all be zero");
}

double cpu_util_from_stat(const std::string& prev_line, const std::string& curr_line) {
    StatCounts prev = parse_stat_line(prev_line);
    StatCounts curr = parse_stat_line(curr_line);
    if (curr.total < prev.total || curr.idle_all < prev.idle_all) {
        throw std::invalid_argument("cpu_util_from_stat: counters went backwards");
    }
    unsigned long long dtotal = curr.total - prev.total;
    unsigned long long didle = curr.idle_all - prev.idle_all;
    if (dtotal == 0) throw std::invalid_argument("cpu_util_from_stat: no elapsed jiffies between snapshots");
    return clamp01(1.0 - static_cast<double>(didle) / static_cast<double>(dtotal));
}

double load_index(const ResourceSnapshot& snap, const LoadWeights& weights) {
    weights.validate();
    double w = weights.w_cpu + weights.w_gpu + weights.w_mem;
    return (weights.w_cpu * clamp01(snap.u_cpu) + weights.w_gpu * clamp01(snap.u_gpu) +
            weights.w_mem * clamp01(snap.u_mem)) /
           w;
}

ARModel fit_ar(const std::vector<double>& history, int order) {
    if (order < 0) throw std::invalid_argument("fit_ar: order must be non-negative");
    int n = static_cast<int>(history.size());
    if (n < 2 * order + 1) {
        throw std::invalid_argument("fit_ar: need at least " + std::to_string(2 * order + 1) + " samples for order " +
                                    std::to_string(order));
    }
    ARModel m;
    m.order = order;
    m.fitted = true;
    if (order == 0 || n == 1) {
        double mean = 0.0;
        for (double v : history) mean += v;
        m.intercept = mean / n;
        m.order = 0;
        double sse = 0.0;
        for (double v : history) sse += (v - m.intercept) * (v - m.intercept);
        m.resid_var = sse / n;
        return m;
    }

    int rows = n - order;
    Eigen::MatrixXd x(rows, order + 1);
    Eigen::VectorXd y(rows);
    for (int t = order; t < n; ++t) {
        int r = t - order;
        y(r) = history[static_cast<std::size_t>(t)];
        x(r, 0) = 1.0;
        for (int j = 1; j <= order; ++j) x(r, j) = history[static_cast<std::size_t>(t - j)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < order + 1) {
        // Collinear design (e.g. constant series): degrade to intercept-only.
        double mean = 0.0;
        for (double v : history) mean += v;
        m.intercept = mean / n;
        m.phi.assign(static_cast<std::size_t>(order), 0.0);
        double sse = 0.0;
        for (double v : history) sse += (v - m.intercept) * (v - m.intercept);
        m.resid_var = sse / n;
        return m;
    }
    Eigen::VectorXd beta = qr.solve(y);
    m.intercept = beta(0);
    m.phi.resize(static_cast<std::size_t>(order));
    for (int j = 1; j <= order; ++j) m.phi[static_cast<std::size_t>(j - 1)] = beta(j);
    m.resid_var = (y - x * beta).squaredNorm() / rows;
    return m;
}

std::vector<double> forecast(const ARModel& model, const std::vector<double>& history, int horizon) {
    if (!model.fitted) throw std::invalid_argument("forecast: model has not been fitted");
    if (horizon < 0) throw std::invalid_argument("forecast: horizon must be non-negative");
    if (static_cast<int>(history.size()) < model.order) {
        throw std::invalid_argument("forecast: history shorter than model order");
    }
    std::vector<double> recent(model.phi.size());  // recent[0] = newest
    for (std::size_t j = 0; j < recent.size(); ++j) recent[j] = history[history.size() - 1 - j];
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int k = 0; k < horizon; ++k) {
        double pred = model.intercept;
        for (std::size_t j = 0; j < recent.size(); ++j) pred += model.phi[j] * recent[j];
        pred = clamp01(pred);
        out.push_back(pred);
        if (!recent.empty()) {
            for (std::size_t j = recent.size() - 1; j > 0; --j) recent[j] = recent[j - 1];
            recent[0] = pred;
        }
    }
    return out;
}

Forecaster::Forecaster(int order, int window, int refit_every, double shock_threshold)
    : order_(order), window_(window), refit_every_(refit_every), shock_threshold_(shock_threshold) {
    if (order < 0) throw std::invalid_argument("forecaster: order must be non-negative");
    if (window < 2 * order + 1) throw std::invalid_argument("forecaster: window too small for the AR order");
    if (refit_every < 1) throw std::invalid_argument("forecaster: refit cadence must be positive");
}

void Forecaster::observe(double load) {
    load = clamp01(load);
    last_abs_error_ = 0.0;
    if (model_.fitted && static_cast<int>(history_.size()) >= model_.order) {
        std::vector<double> h(history_.begin(), history_.end());
        last_abs_error_ = std::abs(forecast(model_, h, 1)[0] - load);
    }
    history_.push_back(load);
    while (static_cast<int>(history_.size()) > window_) history_.pop_front();
    ++seen_;
    if (static_cast<int>(history_.size()) >= 2 * order_ + 1 &&
        (!model_.fitted || seen_ % static_cast<std::size_t>(refit_every_) == 0)) {
        std::vector<double> h(history_.begin(), history_.end());
        model_ = fit_ar(h, order_);
    }
}

std::vector<double> Forecaster::predict(int horizon) const {
    if (horizon < 0) throw std::invalid_argument("forecaster: horizon must be non-negative");
    double last = history_.empty() ? 0.0 : history_.back();
    // Persistence fallback: under-sampled, or the model just mispredicted by
    // more than the shock threshold (a load edge the stale fit cannot track).
    if (!model_.fitted || static_cast<int>(history_.size()) < model_.order ||
        last_abs_error_ > shock_threshold_) {
        return std::vector<double>(static_cast<std::size_t>(horizon), last);
    }
    std::vector<double> h(history_.begin(), history_.end());
    return forecast(model_, h, horizon);
}

std::vector<ResourceSnapshot> synth_trace(const std::string& pattern, double duration_s, std::uint64_t seed,
                                          double lo, double hi, double period_s) {
    if (!(duration_s > 0.0)) throw std::invalid_argument("synth_trace: duration must be positive");
    if (lo < 0.0 || hi > 1.0 || lo > hi) throw std::invalid_argument("synth_trace: need 0 <= lo <= hi <= 1");
    if (!(period_s > 0.0)) throw std::invalid_argument("synth_trace: period must be positive");
    bool steady = pattern == "steady";
    bool square = pattern == "square_wave";
    bool walk = pattern == "random_walk";
    bool session = pattern == "user_session";
    if (!steady && !square && !walk && !session) {
        throw std::invalid_argument("synth_trace: unknown pattern '" + pattern +
                                    "' (steady, square_wave, random_walk, user_session)");
    }

    long long count = std::max<long long>(1, std::llround(duration_s * 10.0));
    long long period_ms = std::max<long long>(2, std::llround(period_s * 1000.0));
    nn::Rng rng(nn::mix_seed(seed, 0x7EACE5uLL));

    double walk_v = 0.5;
    bool burst = false;
    long long segment_left = 0;
    double session_v = lo;

    std::vector<ResourceSnapshot> out;
    out.reserve(static_cast<std::size_t>(count));
    for (long long k = 0; k < count; ++k) {
        long long t_ms = k * 100;
        double v = lo;
        if (steady) {
            v = lo;
        } else if (square) {
            v = (t_ms % period_ms) < period_ms / 2 ? lo : hi;
        } else if (walk) {
            walk_v = std::min(0.98, std::max(0.02, walk_v + 0.05 * rng.normal()));
            v = walk_v;
        } else {
            if (segment_left <= 0) {
                burst = !burst;
                segment_left = std::llround((burst ? rng.uniform(0.3, 1.5) : rng.uniform(0.5, 3.0)) * 10.0);
                session_v = burst ? hi - rng.uniform(0.0, 0.1) : lo + rng.uniform(0.0, 0.05);
            }
            --segment_left;
            v = clamp01(session_v);
        }
        ResourceSnapshot s;
        s.t_ms = t_ms;
        s.u_cpu = s.u_gpu = s.u_mem = v;
        s.f_cpu_hz = 0.0;
        out.push_back(s);
    }
    return out;
}

void write_trace_csv(const std::string& path, const std::vector<ResourceSnapshot>& snaps) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(snaps.size());
    for (const auto& s : snaps) {
        rows.push_back({std::to_string(s.t_ms), util::format_double_exact(s.u_cpu),
                        util::format_double_exact(s.u_gpu), util::format_double_exact(s.u_mem),
                        util::format_double_exact(s.f_cpu_hz)});
    }
    util::write_csv(path, {"t_ms", "u_cpu", "u_gpu", "u_mem", "f_cpu_hz"}, rows);
}

std::vector<ResourceSnapshot> read_trace_csv(const std::string& path) {
    auto table = util::read_csv(path);
    if (table.header != std::vector<std::string>{"t_ms", "u_cpu", "u_gpu", "u_mem", "f_cpu_hz"}) {
        throw std::invalid_argument(path + ": not a utilization trace csv");
    }
    std::vector<ResourceSnapshot> out;
    long long prev_t = -1;
    for (const auto& r : table.rows) {
        ResourceSnapshot s;
        s.t_ms = util::parse_int(r[0], "trace t_ms");
        s.u_cpu = util::parse_double(r[1], "trace u_cpu");
        s.u_gpu = util::parse_double(r[2], "trace u_gpu");
        s.u_mem = util::parse_double(r[3], "trace u_mem");
        s.f_cpu_hz = util::parse_double(r[4], "trace f_cpu_hz");
        if (s.t_ms <= prev_t) throw std::invalid_argument(path + ": trace timestamps must strictly increase");
        if (s.u_cpu < 0 || s.u_cpu > 1 || s.u_gpu < 0 || s.u_gpu > 1 || s.u_mem < 0 || s.u_mem > 1) {
            throw std::invalid_argument(path + ": trace utilizations must lie in [0,1]");
        }
        prev_t = s.t_ms;
        out.push_back(s);
    }
    return out;
}

}  // namespace elastinet::monitor

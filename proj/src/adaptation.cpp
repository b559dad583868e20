#include "elastinet/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "elastinet/io.hpp"

namespace elastinet::adapt {

using tables::PerfTables;

void Objective::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("objective weights must be non-negative");
    if (!(alpha + beta > 0.0)) throw std::invalid_argument("objective weights must not both be zero");
}

double objective_j(double latency_s, double energy_j, const Objective& obj) {
    obj.validate();
    if (latency_s < 0.0 || energy_j < 0.0) {
        throw std::invalid_argument("objective_j: latency and energy must be non-negative");
    }
    return obj.alpha * latency_s + obj.beta * energy_j;
}

std::optional<Selection> select_variant(const PerfTables& tbl, const Constraints& cons, const Objective& obj,
                                        std::string* diagnostic, std::optional<int> exit_filter) {
    if (!tbl.built()) throw std::logic_error("select_variant: tables not built");
    obj.validate();
    std::optional<Selection> best;
    // Candidate rids arrive in ascending rid = lexicographic variant_id order,
    // so strict comparisons below yield the documented lex tie-break for free.
    for (std::uint32_t rid : tbl.candidates_within(cons.t_budget_s, cons.e_budget_j)) {
        const tables::PerfRecord& p = tbl.perf_at(rid);
        const tables::PredictiveRecord& d = tbl.predictive_at(rid);
        if (p.accuracy < cons.acc_min) continue;
        if (exit_filter && elastic::parse_variant_id(p.variant_id).exit_id != *exit_filter) continue;
        double j = obj.alpha * d.latency_s + obj.beta * d.energy_j;
        bool better = !best || j < best->j ||
                      (j == best->j && (d.latency_s < best->latency_s ||
                                        (d.latency_s == best->latency_s && d.energy_j < best->energy_j)));
        if (better) best = Selection{rid, p.variant_id, d.latency_s, d.energy_j, p.accuracy, j};
    }
    if (!best && diagnostic) {
        *diagnostic = "no variant satisfies the constraints; relax the latency/energy budgets or the accuracy floor";
    }
    return best;
}

double mismatch_distance(const DemandCapability& pc, const MismatchNormalizers& norm, bool* unpaired_flagged) {
    if (!(norm.latency_hi > norm.latency_lo) || !(norm.energy_hi > norm.energy_lo)) {
        throw std::invalid_argument("mismatch_distance: normalizer spans must be positive");
    }
    auto unit = [](double v, double lo, double hi) {
        return std::min(1.0, std::max(0.0, (v - lo) / (hi - lo)));
    };
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
    double l_hat = unit(pc.latency_s, norm.latency_lo, norm.latency_hi);
    double e_hat = unit(pc.energy_j, norm.energy_lo, norm.energy_hi);
    double e_cap = pc.gpu_present ? pc.c_gpu : pc.c_cpu;
    if (unpaired_flagged) *unpaired_flagged = true;  // Acc and R never enter the distance
    double dl = l_hat - clamp01(pc.c_cpu);
    double de = e_hat - clamp01(e_cap);
    return std::sqrt(dl * dl + de * de);
}

void TriggerPolicy::validate() const {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
        throw std::invalid_argument("trigger policy: need 0 <= lo < hi <= 1");
    }
    if (cooldown_ms < 0) throw std::invalid_argument("trigger policy: cooldown must be non-negative");
    if (horizon < 1) throw std::invalid_argument("trigger policy: horizon must be at least 1");
}

TriggerDecision should_adapt(const std::vector<double>& forecast, Regime current, long long now_ms,
                             long long last_switch_ms, const TriggerPolicy& policy) {
    policy.validate();
    TriggerDecision d;
    d.target = current;
    if (forecast.empty()) {
        d.reason = "hold:no-forecast";
        return d;
    }
    double fmax = *std::max_element(forecast.begin(), forecast.end());
    double fmin = *std::min_element(forecast.begin(), forecast.end());
    bool rise = current == Regime::low && fmax >= policy.hi;
    bool drop = current == Regime::high && fmin <= policy.lo;
    if (!rise && !drop) {
        d.reason = "hold:in-band";
        return d;
    }
    if (now_ms - last_switch_ms < policy.cooldown_ms) {
        d.reason = "hold:cooldown";
        return d;
    }
    d.adapt = true;
    d.target = rise ? Regime::high : Regime::low;
    d.reason = rise ? "load-rise" : "load-drop";
    return d;
}

namespace {

Selection selection_for(const PerfTables& tbl, std::uint32_t rid, const Objective& obj) {
    const auto& p = tbl.perf_at(rid);
    const auto& d = tbl.predictive_at(rid);
    return {rid, p.variant_id, d.latency_s, d.energy_j, p.accuracy, obj.alpha * d.latency_s + obj.beta * d.energy_j};
}

}  // namespace

LoopResult run_loop(elastic::ElasticNetwork& net, const std::vector<monitor::ResourceSnapshot>& trace,
                    const PerfTables& tbl, const LoopOptions& opt) {
    if (!tbl.built()) throw std::logic_error("run_loop: tables not built");
    if (trace.empty()) throw std::invalid_argument("run_loop: empty trace");
    opt.policy.validate();
    opt.objective.validate();
    opt.weights.validate();
    if (opt.serve_every < 0) throw std::invalid_argument("run_loop: serve_every must be non-negative");

    const int n = net.num_segments();
    monitor::Forecaster fc(opt.ar_order, opt.ar_window, opt.ar_refit, opt.shock_threshold);
    nn::Rng serve_rng(nn::mix_seed(opt.seed, 0x5E7EuLL));

    LoopResult res;
    Regime regime = Regime::low;
    long long last_switch = 0;
    bool have_active = false;
    std::string active;
    std::uint32_t active_rid = 0;
    std::vector<double> search_ms;

    auto effective = [&](double load_forecast) {
        Constraints c = opt.constraints;
        if (std::isfinite(c.t_budget_s)) c.t_budget_s /= 1.0 + std::max(0.0, load_forecast);
        return c;
    };

    // Deepest exit holding any feasible candidate wins; argmin J inside it.
    auto pick = [&](const Constraints& c) {
        auto t0 = std::chrono::steady_clock::now();
        std::optional<Selection> sel;
        for (int e = n; e >= 1 && !sel; --e) sel = select_variant(tbl, c, opt.objective, nullptr, e);
        search_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        return sel;
    };

    auto apply_selection = [&](const Selection& s, const std::string& trigger, double forecast, long long t_ms) {
        AdaptationEvent ev;
        ev.t_ms = t_ms;
        ev.trigger = trigger;
        ev.old_variant = active;
        ev.new_variant = s.variant_id;
        ev.pred_latency_s = s.latency_s;
        ev.pred_energy_j = s.energy_j;
        ev.load_forecast = forecast;
        net.apply_variant(elastic::parse_variant_id(s.variant_id));
        if (s.latency_s > opt.constraints.t_budget_s || s.energy_j > opt.constraints.e_budget_j ||
            s.accuracy < opt.constraints.acc_min) {
            res.feasibility_violated = true;
        }
        if (have_active && s.variant_id != active) ++res.switches;
        active = s.variant_id;
        active_rid = s.rid;
        have_active = true;
        res.events.push_back(std::move(ev));
    };

    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& snap = trace[i];
        double load = monitor::load_index(snap, opt.weights);
        fc.observe(load);
        std::vector<double> fvec = fc.predict(opt.policy.horizon);
        double f1 = fvec.empty() ? load : fvec[0];
        res.load_series.push_back(load);
        res.forecast_series.push_back(f1);
        res.tick_t_ms.push_back(static_cast<double>(snap.t_ms));

        if (!have_active) {
            if (opt.fixed_variant) {
                auto rid = tbl.rid_of(*opt.fixed_variant);
                if (!rid) {
                    throw std::invalid_argument("run_loop: fixed variant not present in tables: " +
                                                *opt.fixed_variant);
                }
                apply_selection(selection_for(tbl, *rid, opt.objective), "init", f1, snap.t_ms);
            } else {
                auto sel = pick(effective(f1));
                if (!sel) {
                    throw std::runtime_error(
                        "run_loop: no feasible variant at startup; relax the constraints");
                }
                apply_selection(*sel, "init", f1, snap.t_ms);
            }
            regime = f1 >= (opt.policy.lo + opt.policy.hi) * 0.5 ? Regime::high : Regime::low;
            last_switch = snap.t_ms;
        } else if (opt.adapt_enabled) {
            TriggerDecision dec = should_adapt(fvec, regime, snap.t_ms, last_switch, opt.policy);
            if (dec.adapt) {
                double f_cross = dec.target == Regime::high
                                     ? *std::max_element(fvec.begin(), fvec.end())
                                     : *std::min_element(fvec.begin(), fvec.end());
                auto sel = pick(effective(f_cross));
                if (sel) {
                    if (sel->variant_id != active) apply_selection(*sel, dec.reason, f_cross, snap.t_ms);
                } else {
                    ++res.degraded_ticks;
                    AdaptationEvent ev;
                    ev.t_ms = snap.t_ms;
                    ev.trigger = "degraded";
                    ev.old_variant = active;
                    ev.new_variant = active;
                    ev.pred_latency_s = tbl.predictive_at(active_rid).latency_s;
                    ev.pred_energy_j = tbl.predictive_at(active_rid).energy_j;
                    ev.load_forecast = f_cross;
                    res.events.push_back(std::move(ev));
                }
                regime = dec.target;  // the regime change was acted on either way
                last_switch = snap.t_ms;
            }
        }

        res.served_latency_s.push_back(tbl.predictive_at(active_rid).latency_s);

        if (opt.serve_every > 0 && i % static_cast<std::size_t>(opt.serve_every) == 0) {
            nn::Tensor x(net.input_shape());
            for (float& v : x.data) v = static_cast<float>(serve_rng.uniform(-1.0, 1.0));
            (void)net.forward_adaptive(x, opt.confidence);
        }
    }

    res.final_variant = active;
    if (!search_ms.empty()) {
        std::sort(search_ms.begin(), search_ms.end());
        res.search_time_ms_median = search_ms[search_ms.size() / 2];
    }
    return res;
}

void export_event_log_csv(const std::string& path, const std::vector<AdaptationEvent>& events) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(events.size());
    for (const auto& e : events) {
        rows.push_back({std::to_string(e.t_ms), e.trigger, e.old_variant, e.new_variant,
                        util::format_double(e.pred_latency_s), util::format_double(e.pred_energy_j),
                        util::format_double(e.load_forecast)});
    }
    util::write_csv(path, {"t_ms", "trigger", "old_variant", "new_variant", "pred_latency_s", "pred_energy_j",
                           "load_forecast"},
                    rows);
}

std::vector<AdaptationEvent> read_event_log_csv(const std::string& path) {
    auto table = util::read_csv(path);
    if (table.header != std::vector<std::string>{"t_ms", "trigger", "old_variant", "new_variant", "pred_latency_s",
                                                 "pred_energy_j", "load_forecast"}) {
        throw std::invalid_argument(path + ": not an adaptation event log");
    }
    std::vector<AdaptationEvent> out;
    for (const auto& r : table.rows) {
        AdaptationEvent e;
        e.t_ms = util::parse_int(r[0], "event t_ms");
        e.trigger = r[1];
        e.old_variant = r[2];
        e.new_variant = r[3];
        e.pred_latency_s = util::parse_double(r[4], "event latency");
        e.pred_energy_j = util::parse_double(r[5], "event energy");
        e.load_forecast = util::parse_double(r[6], "event forecast");
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace elastinet::adapt

// Python bindings over the C++ core: architecture parsing, the elastic
// network, the analytic profiler, the indexed performance tables, constrained
// selection, and the adaptation-loop simulator.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "elastinet/adaptation.hpp"
#include "elastinet/dataset.hpp"
#include "elastinet/elastic.hpp"
#include "elastinet/io.hpp"
#include "elastinet/monitor.hpp"
#include "elastinet/perf_tables.hpp"
#include "elastinet/profiler.hpp"
#include "elastinet/training.hpp"

namespace py = pybind11;
using namespace elastinet;

namespace {

nn::Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = static_cast<int>(arr.shape(i));
    nn::Tensor t(shape);
    const float* src = arr.data();
    std::copy(src, src + arr.size(), t.data.begin());
    return t;
}

py::array_t<float> array_from_tensor(const nn::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> arr(shape);
    std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
    return arr;
}

elastic::VariantConfig variant_from_id(const std::string& id) { return elastic::parse_variant_id(id); }

py::dict prediction_dict(const perf::PerfPrediction& p) {
    py::dict d;
    d["variant_id"] = p.variant_id;
    d["flops"] = p.flops;
    d["params"] = p.params;
    d["storage_bytes"] = p.storage_bytes;
    d["mem_bytes"] = p.mem_bytes;
    d["latency_s"] = p.latency_s;
    d["energy_j"] = p.energy_j;
    return d;
}

py::dict event_dict(const adapt::AdaptationEvent& ev) {
    py::dict d;
    d["t_ms"] = ev.t_ms;
    d["trigger"] = ev.trigger;
    d["old_variant"] = ev.old_variant;
    d["new_variant"] = ev.new_variant;
    d["pred_latency_s"] = ev.pred_latency_s;
    d["pred_energy_j"] = ev.pred_energy_j;
    d["load_forecast"] = ev.load_forecast;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "elastic multi-variant network runtime: C++ core bindings";

    py::class_<elastic::ArchSpec>(m, "ArchSpec")
        .def_property_readonly("num_segments",
                               [](const elastic::ArchSpec& s) { return s.segments.size(); });

    m.def("parse_arch_text", &elastic::parse_arch_text, py::arg("text"), py::arg("origin") = "<arch>",
          "Parse an architecture description from a string.");
    m.def("parse_arch_file", &elastic::parse_arch_file, py::arg("path"),
          "Parse an architecture description file.");
    m.def("operator_names", [] {
        std::vector<std::string> names;
        for (auto k : elastic::all_operator_kinds()) names.push_back(elastic::operator_name(k));
        return names;
    });

    py::class_<data::Dataset>(m, "Dataset")
        .def_property_readonly("images", [](const data::Dataset& d) { return array_from_tensor(d.images); })
        .def_property_readonly("labels", [](const data::Dataset& d) { return d.labels; })
        .def("__len__", [](const data::Dataset& d) { return d.size(); });

    m.def("make_bars_dataset", &data::make_bars_dataset, py::arg("n"), py::arg("seed"),
          "Synthetic 4-class oriented-bars dataset on a 1x16x16 canvas.");

    py::class_<elastic::ElasticNetwork>(m, "ElasticNetwork")
        .def(py::init<const elastic::ArchSpec&, std::uint64_t>(), py::arg("spec"), py::arg("seed"))
        .def_property_readonly("num_segments", &elastic::ElasticNetwork::num_segments)
        .def_property_readonly("variant_space_size", &elastic::ElasticNetwork::variant_space_size)
        .def("variant_ids",
             [](const elastic::ElasticNetwork& net, long long budget) {
                 std::vector<std::string> ids;
                 for (const auto& v : net.enumerate_variants(budget)) ids.push_back(v.variant_id);
                 return ids;
             },
             py::arg("budget") = (1LL << 20))
        .def("apply_variant",
             [](elastic::ElasticNetwork& net, const std::string& id) { net.apply_variant(variant_from_id(id)); },
             py::arg("variant_id"))
        .def("active_variant_id",
             [](const elastic::ElasticNetwork& net) { return net.active_variant().variant_id; })
        .def("set_active_exit", &elastic::ElasticNetwork::set_active_exit, py::arg("exit_id"))
        .def("forward",
             [](elastic::ElasticNetwork& net, const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
                int exit_id) {
                 if (x.ndim() != 4) throw std::invalid_argument("input must be a [N,C,H,W] array");
                 return array_from_tensor(net.forward_to_exit(tensor_from_array(x), exit_id, false));
             },
             py::arg("x"), py::arg("exit_id"))
        .def("forward_adaptive",
             [](elastic::ElasticNetwork& net, const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
                double confidence_threshold) {
                 if (x.ndim() != 4) throw std::invalid_argument("input must be a [N,C,H,W] array");
                 auto r = net.forward_adaptive(tensor_from_array(x), confidence_threshold);
                 return py::make_tuple(array_from_tensor(r.logits), r.exit_taken, r.confidence);
             },
             py::arg("x"), py::arg("confidence_threshold"))
        .def("eval_accuracy",
             [](elastic::ElasticNetwork& net, const data::Dataset& ds, int exit_id) {
                 return elastic::eval_accuracy(net, ds, exit_id);
             },
             py::arg("dataset"), py::arg("exit_id"))
        .def("save", &elastic::ElasticNetwork::save, py::arg("path"))
        .def("load", &elastic::ElasticNetwork::load, py::arg("path"));

    py::class_<perf::DeviceProfile>(m, "DeviceProfile")
        .def(py::init<>())
        .def_readwrite("p_cpu_w", &perf::DeviceProfile::p_cpu_w)
        .def_readwrite("p_gpu_w", &perf::DeviceProfile::p_gpu_w)
        .def_readwrite("p_mem_w", &perf::DeviceProfile::p_mem_w)
        .def_readwrite("f_cpu_hz", &perf::DeviceProfile::f_cpu_hz)
        .def_readwrite("f_gpu_hz", &perf::DeviceProfile::f_gpu_hz)
        .def_readwrite("f_mem_hz", &perf::DeviceProfile::f_mem_hz)
        .def_readwrite("ops_per_cycle", &perf::DeviceProfile::ops_per_cycle)
        .def_readwrite("epsilon_default", &perf::DeviceProfile::epsilon_default)
        .def_readwrite("has_gpu", &perf::DeviceProfile::has_gpu)
        .def_static("from_file", &perf::DeviceProfile::from_file, py::arg("path"))
        .def("save", &perf::DeviceProfile::save, py::arg("path"));

    m.def("predict",
          [](const elastic::ElasticNetwork& net, const std::string& variant_id, const perf::DeviceProfile& device,
             double epsilon) { return prediction_dict(perf::predict(net, variant_from_id(variant_id), device, epsilon)); },
          py::arg("net"), py::arg("variant_id"), py::arg("device"), py::arg("epsilon") = -1.0,
          "Analytic cost prediction (FLOPs, params, storage, memory traffic, latency, energy).");

    py::class_<tables::PerfTables>(m, "PerfTables")
        .def_static("build",
                    [](const elastic::ElasticNetwork& net, const elastic::ArchSpec& spec,
                       const perf::DeviceProfile& device, const std::vector<double>& synthetic_base,
                       double epsilon) {
                        tables::SyntheticAccuracy sa;
                        sa.base_per_exit = synthetic_base;
                        auto acc = tables::make_synthetic_accuracy(std::move(sa), tables::slot_segments(spec));
                        return tables::PerfTables::build(net.enumerate_variants(1LL << 30), net, device, acc,
                                                         nullptr, epsilon);
                    },
                    py::arg("net"), py::arg("spec"), py::arg("device"), py::arg("synthetic_base"),
                    py::arg("epsilon") = -1.0)
        .def_static("load", &tables::PerfTables::load, py::arg("path"))
        .def("save", &tables::PerfTables::save, py::arg("path"))
        .def("__len__", [](const tables::PerfTables& t) { return t.size(); })
        .def("rid_of", &tables::PerfTables::rid_of, py::arg("variant_id"))
        .def("record",
             [](const tables::PerfTables& t, std::uint32_t rid) {
                 const auto& p = t.perf_at(rid);
                 const auto& d = t.predictive_at(rid);
                 py::dict out;
                 out["variant_id"] = p.variant_id;
                 out["params"] = p.params;
                 out["storage_bytes"] = p.storage_bytes;
                 out["accuracy"] = p.accuracy;
                 out["latency_s"] = d.latency_s;
                 out["energy_j"] = d.energy_j;
                 return out;
             },
             py::arg("rid"))
        .def("candidates_within",
             [](const tables::PerfTables& t, double t_budget_s, double e_budget_j) {
                 return t.candidates_within(t_budget_s, e_budget_j);
             },
             py::arg("t_budget_s"), py::arg("e_budget_j"));

    m.def("select_variant",
          [](const tables::PerfTables& tbl, double t_budget_s, double e_budget_j, double acc_min, double alpha,
             double beta, std::optional<int> exit_filter) -> py::object {
              adapt::Constraints cons;
              cons.t_budget_s = t_budget_s;
              cons.e_budget_j = e_budget_j;
              cons.acc_min = acc_min;
              adapt::Objective obj;
              obj.alpha = alpha;
              obj.beta = beta;
              std::string diagnostic;
              auto sel = adapt::select_variant(tbl, cons, obj, &diagnostic, exit_filter);
              if (!sel) return py::none();
              py::dict d;
              d["rid"] = sel->rid;
              d["variant_id"] = sel->variant_id;
              d["latency_s"] = sel->latency_s;
              d["energy_j"] = sel->energy_j;
              d["accuracy"] = sel->accuracy;
              d["j"] = sel->j;
              return d;
          },
          py::arg("tables"), py::arg("t_budget_s") = std::numeric_limits<double>::infinity(),
          py::arg("e_budget_j") = std::numeric_limits<double>::infinity(), py::arg("acc_min") = 0.0,
          py::arg("alpha") = 0.5, py::arg("beta") = 0.5, py::arg("exit_filter") = std::nullopt,
          "Constrained argmin of J = alpha*latency + beta*energy; None when infeasible.");

    m.def("synth_trace",
          [](const std::string& pattern, double duration_s, std::uint64_t seed, double lo, double hi,
             double period_s) {
              std::vector<py::dict> out;
              for (const auto& s : monitor::synth_trace(pattern, duration_s, seed, lo, hi, period_s)) {
                  py::dict d;
                  d["t_ms"] = s.t_ms;
                  d["u_cpu"] = s.u_cpu;
                  d["u_gpu"] = s.u_gpu;
                  d["u_mem"] = s.u_mem;
                  out.push_back(d);
              }
              return out;
          },
          py::arg("pattern"), py::arg("duration_s"), py::arg("seed"), py::arg("lo") = 0.2, py::arg("hi") = 0.9,
          py::arg("period_s") = 5.0);

    m.def("run_loop",
          [](elastic::ElasticNetwork& net, const tables::PerfTables& tbl, const std::string& pattern,
             double duration_s, std::uint64_t seed, double t_budget_s, double e_budget_j, double acc_min,
             bool adapt_enabled, std::optional<std::string> fixed_variant, int serve_every, double trace_lo,
             double trace_hi, double period_s) {
              auto trace = monitor::synth_trace(pattern, duration_s, seed, trace_lo, trace_hi, period_s);
              adapt::LoopOptions opt;
              opt.constraints.t_budget_s = t_budget_s;
              opt.constraints.e_budget_j = e_budget_j;
              opt.constraints.acc_min = acc_min;
              opt.adapt_enabled = adapt_enabled;
              opt.fixed_variant = std::move(fixed_variant);
              opt.serve_every = serve_every;
              opt.seed = seed;
              auto res = adapt::run_loop(net, trace, tbl, opt);
              py::list events;
              for (const auto& ev : res.events) events.append(event_dict(ev));
              py::dict d;
              d["events"] = events;
              d["switches"] = res.switches;
              d["degraded_ticks"] = res.degraded_ticks;
              d["feasibility_violated"] = res.feasibility_violated;
              d["final_variant"] = res.final_variant;
              d["load_series"] = res.load_series;
              d["forecast_series"] = res.forecast_series;
              d["served_latency_s"] = res.served_latency_s;
              d["search_time_ms_median"] = res.search_time_ms_median;
              return d;
          },
          py::arg("net"), py::arg("tables"), py::arg("pattern") = "square_wave", py::arg("duration_s") = 60.0,
          py::arg("seed") = 1, py::arg("t_budget_s") = std::numeric_limits<double>::infinity(),
          py::arg("e_budget_j") = std::numeric_limits<double>::infinity(), py::arg("acc_min") = 0.0,
          py::arg("adapt_enabled") = true, py::arg("fixed_variant") = std::nullopt, py::arg("serve_every") = 0,
          py::arg("trace_lo") = 0.2, py::arg("trace_hi") = 0.9, py::arg("period_s") = 5.0,
          "Replay a synthetic load trace through the forecasting/trigger/selection loop.");

    m.def("write_chart",
          [](const std::string& path, const std::string& title, const std::string& label,
             const std::vector<double>& xs, const std::vector<double>& ys) {
              util::write_svg_chart(path, title, {{label, "#0a6ebd", xs, ys}});
          },
          py::arg("path"), py::arg("title"), py::arg("label"), py::arg("x"), py::arg("y"),
          "Render one series as a standalone SVG line chart.");

    m.attr("__version__") = "0.1.0";
}

#include "elastinet/perf_tables.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>

namespace elastinet::tables {

namespace {

constexpr std::array<char, 5> kMagic = {'A', 'D', 'P', 'T', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kIdWidth = 160;  // variant_id field, NUL padded
constexpr std::size_t kRecordWidth = kIdWidth + 5 * 8;

static_assert(std::endian::native == std::endian::little, "table format is little-endian");

std::uint32_t crc32(const std::string& data) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (unsigned char ch : data) crc = table[(crc ^ ch) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

void check_record(const PerfRecord& p, const PredictiveRecord& d) {
    if (p.variant_id.empty() || p.variant_id.size() >= kIdWidth) {
        throw std::invalid_argument("perf tables: variant_id must be 1.." + std::to_string(kIdWidth - 1) +
                                    " bytes, got '" + p.variant_id + "'");
    }
    if (!(p.accuracy >= 0.0 && p.accuracy <= 1.0)) {
        throw std::invalid_argument("perf tables: accuracy out of [0,1] for " + p.variant_id);
    }
    if (!(d.latency_s >= 0.0) || !(d.energy_j >= 0.0) || !std::isfinite(d.latency_s) || !std::isfinite(d.energy_j)) {
        throw std::invalid_argument("perf tables: latency/energy must be finite and non-negative for " +
                                    p.variant_id);
    }
}

}  // namespace

std::vector<int> slot_segments(const elastic::ArchSpec& spec) {
    std::vector<int> out;
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        if (spec.segments[i].has_slot) out.push_back(static_cast<int>(i) + 1);
    }
    return out;
}

AccuracySource make_synthetic_accuracy(SyntheticAccuracy cfg, std::vector<int> slot_segment) {
    for (double b : cfg.base_per_exit) {
        if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("synthetic accuracy: base values must lie in [0,1]");
    }
    return [cfg = std::move(cfg), seg = std::move(slot_segment)](
               const elastic::VariantConfig& v) -> std::optional<double> {
        if (v.exit_id < 1 || v.exit_id > static_cast<int>(cfg.base_per_exit.size())) return std::nullopt;
        if (v.ops.size() != seg.size()) return std::nullopt;
        double acc = cfg.base_per_exit[static_cast<std::size_t>(v.exit_id - 1)];
        for (std::size_t s = 0; s < v.ops.size(); ++s) {
            if (seg[s] > v.exit_id) continue;  // slots past the exit never run
            switch (v.ops[s]) {
                case elastic::OperatorKind::baseline_conv: break;
                case elastic::OperatorKind::depthwise_separable: acc -= cfg.penalty_dwsep; break;
                case elastic::OperatorKind::grouped_shuffle: acc -= cfg.penalty_grouped; break;
                case elastic::OperatorKind::lowrank_decomposed: acc -= cfg.penalty_lowrank; break;
            }
        }
        return std::min(1.0, std::max(0.0, acc));
    };
}

PerfTables PerfTables::build(const std::vector<elastic::VariantConfig>& variants,
                             const elastic::ElasticNetwork& net, const perf::DeviceProfile& device,
                             const AccuracySource& accuracy, std::vector<std::string>* warnings,
                             double epsilon) {
    PerfTables t;
    struct Row {
        PerfRecord perf;
        PredictiveRecord pred;
    };
    std::vector<Row> rows;
    rows.reserve(variants.size());
    for (const auto& v : variants) {
        std::optional<double> acc = accuracy(v);
        perf::PerfPrediction p = perf::predict(net, v, device, epsilon);
        if (!acc) {
            if (warnings) warnings->push_back("variant " + p.variant_id + " has no accuracy entry; excluded");
            continue;
        }
        Row r;
        r.perf = {p.variant_id, p.params, p.storage_bytes, *acc};
        r.pred = {p.variant_id, p.latency_s, p.energy_j};
        check_record(r.perf, r.pred);
        rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.perf.variant_id < b.perf.variant_id;
    });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].perf.variant_id == rows[i - 1].perf.variant_id) {
            throw std::invalid_argument("perf tables: duplicate variant_id " + rows[i].perf.variant_id);
        }
    }
    for (auto& r : rows) {
        t.perf_.push_back(std::move(r.perf));
        t.predictive_.push_back(std::move(r.pred));
    }
    t.index_records();
    t.built_ = true;
    return t;
}

void PerfTables::index_records() {
    for (std::uint32_t rid = 0; rid < predictive_.size(); ++rid) {
        latency_tree_.insert(predictive_[rid].latency_s, rid);
        energy_tree_.insert(predictive_[rid].energy_j, rid);
    }
}

std::optional<std::uint32_t> PerfTables::rid_of(const std::string& variant_id) const {
    auto it = std::lower_bound(perf_.begin(), perf_.end(), variant_id,
                               [](const PerfRecord& r, const std::string& id) { return r.variant_id < id; });
    if (it == perf_.end() || it->variant_id != variant_id) return std::nullopt;
    return static_cast<std::uint32_t>(it - perf_.begin());
}

std::vector<std::uint32_t> PerfTables::candidates_within(double t_budget_s, double e_budget_j) const {
    if (!built_) throw std::logic_error("perf tables: not built");
    if (t_budget_s < 0.0 || e_budget_j < 0.0) return {};
    std::vector<std::uint32_t> by_latency = latency_tree_.range_query(0.0, t_budget_s);
    std::vector<std::uint32_t> by_energy = energy_tree_.range_query(0.0, e_budget_j);
    std::sort(by_latency.begin(), by_latency.end());
    std::sort(by_energy.begin(), by_energy.end());
    std::vector<std::uint32_t> out;
    std::set_intersection(by_latency.begin(), by_latency.end(), by_energy.begin(), by_energy.end(),
                          std::back_inserter(out));
    return out;
}

namespace {
double extremum(const std::vector<PredictiveRecord>& recs, bool latency, bool want_min) {
    if (recs.empty()) throw std::logic_error("perf tables: no records");
    double best = latency ? recs[0].latency_s : recs[0].energy_j;
    for (const auto& r : recs) {
        double v = latency ? r.latency_s : r.energy_j;
        best = want_min ? std::min(best, v) : std::max(best, v);
    }
    return best;
}
}  // namespace

double PerfTables::min_latency() const { return extremum(predictive_, true, true); }
double PerfTables::max_latency() const { return extremum(predictive_, true, false); }
double PerfTables::min_energy() const { return extremum(predictive_, false, true); }
double PerfTables::max_energy() const { return extremum(predictive_, false, false); }

void PerfTables::save(const std::string& path) const {
    if (!built_) throw std::logic_error("perf tables: not built");
    std::string body;
    body.append(kMagic.data(), kMagic.size());
    put<std::uint8_t>(body, kVersion);
    put<std::uint32_t>(body, static_cast<std::uint32_t>(perf_.size()));
    for (std::size_t i = 0; i < perf_.size(); ++i) {
        char id[kIdWidth] = {};
        std::memcpy(id, perf_[i].variant_id.data(), perf_[i].variant_id.size());
        body.append(id, kIdWidth);
        put<std::uint64_t>(body, perf_[i].params);
        put<std::uint64_t>(body, perf_[i].storage_bytes);
        put<double>(body, perf_[i].accuracy);
        put<double>(body, predictive_[i].latency_s);
        put<double>(body, predictive_[i].energy_j);
    }
    put<std::uint32_t>(body, crc32(body));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

PerfTables PerfTables::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t header = kMagic.size() + 1 + 4;
    if (data.size() < header + 4) throw std::runtime_error(path + ": truncated table file");
    if (std::memcmp(data.data(), kMagic.data(), kMagic.size()) != 0) {
        throw std::runtime_error(path + ": not a performance table file");
    }
    std::size_t pos = kMagic.size();
    std::uint8_t version = take<std::uint8_t>(data, pos);
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported table version " + std::to_string(version));
    }
    std::uint32_t count = take<std::uint32_t>(data, pos);
    std::size_t expected = header + static_cast<std::size_t>(count) * kRecordWidth + 4;
    if (data.size() != expected) {
        throw std::runtime_error(path + ": table file size mismatch (corrupt or truncated)");
    }
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, data.data() + data.size() - 4, 4);
    if (crc32(data.substr(0, data.size() - 4)) != stored_crc) {
        throw std::runtime_error(path + ": table checksum mismatch");
    }

    PerfTables t;
    for (std::uint32_t i = 0; i < count; ++i) {
        const char* id = data.data() + pos;
        std::size_t len = 0;
        while (len < kIdWidth && id[len] != '\0') ++len;
        pos += kIdWidth;
        PerfRecord p;
        p.variant_id.assign(id, len);
        p.params = take<std::uint64_t>(data, pos);
        p.storage_bytes = take<std::uint64_t>(data, pos);
        p.accuracy = take<double>(data, pos);
        PredictiveRecord d;
        d.variant_id = p.variant_id;
        d.latency_s = take<double>(data, pos);
        d.energy_j = take<double>(data, pos);
        check_record(p, d);
        if (i > 0 && !(t.perf_.back().variant_id < p.variant_id)) {
            throw std::runtime_error(path + ": table records not sorted by variant_id");
        }
        t.perf_.push_back(std::move(p));
        t.predictive_.push_back(std::move(d));
    }
    t.index_records();
    t.built_ = true;
    return t;
}

}  // namespace elastinet::tables

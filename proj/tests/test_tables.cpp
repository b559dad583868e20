#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "elastinet/elastic.hpp"
#include "elastinet/perf_tables.hpp"
#include "elastinet/profiler.hpp"
#include "fixture_spec.hpp"
#include "test_util.hpp"

using namespace elastinet;

namespace {

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

struct TableRig {
    elastic::ArchSpec spec = fixture::arch();
    elastic::ElasticNetwork net{spec, 77};
    perf::DeviceProfile dev = fixture::device();
    std::vector<elastic::VariantConfig> variants = net.enumerate_variants(1 << 20);
    tables::AccuracySource accuracy = fixture::accuracy_source(spec);
};

}  // namespace

TEST_SUITE("tables") {

TEST_CASE("slot positions are reported as 1-based segment indexes") {
    CHECK(tables::slot_segments(fixture::arch()) == std::vector<int>{1});

    auto spec = elastic::parse_arch_text(
        "[network]\nnum_classes=4\n"
        "[segment1]\nlayers=conv out=8|relu\nslot=yes\n"
        "[segment2]\nlayers=conv out=8|relu\n"
        "[segment3]\nlayers=conv out=8|relu\nslot=yes\n",
        "s");
    CHECK(tables::slot_segments(spec) == std::vector<int>{1, 3});
}

TEST_CASE("synthetic accuracy subtracts penalties for in-path compressed slots") {
    tables::SyntheticAccuracy syn;
    syn.base_per_exit = {0.6, 0.8};
    auto src = tables::make_synthetic_accuracy(syn, {1});

    auto variant = [](elastic::OperatorKind op, int exit_id) {
        elastic::VariantConfig v;
        v.ops = {op};
        v.exit_id = exit_id;
        v.variant_id = elastic::make_variant_id(v.ops, exit_id);
        return v;
    };

    CHECK(*src(variant(elastic::OperatorKind::baseline_conv, 1)) == 0.6);
    CHECK(*src(variant(elastic::OperatorKind::depthwise_separable, 1)) == doctest::Approx(0.585).epsilon(1e-12));
    CHECK(*src(variant(elastic::OperatorKind::grouped_shuffle, 2)) == doctest::Approx(0.79).epsilon(1e-12));
    CHECK(*src(variant(elastic::OperatorKind::lowrank_decomposed, 2)) == doctest::Approx(0.78).epsilon(1e-12));

    // a slot behind the exit never runs, so it costs nothing
    auto late_slot = tables::make_synthetic_accuracy(syn, {2});
    CHECK(*late_slot(variant(elastic::OperatorKind::lowrank_decomposed, 1)) == 0.6);

    // out-of-range exits and arity mismatches yield no entry
    CHECK_FALSE(src(variant(elastic::OperatorKind::baseline_conv, 3)).has_value());
    elastic::VariantConfig wide;
    wide.ops = {elastic::OperatorKind::baseline_conv, elastic::OperatorKind::baseline_conv};
    wide.exit_id = 1;
    CHECK_FALSE(src(wide).has_value());

    // results clamp into [0,1]
    tables::SyntheticAccuracy low;
    low.base_per_exit = {0.01};
    CHECK(*tables::make_synthetic_accuracy(low, {1})(variant(elastic::OperatorKind::lowrank_decomposed, 1)) == 0.0);

    tables::SyntheticAccuracy bad;
    bad.base_per_exit = {1.5};
    CHECK_THROWS_AS(tables::make_synthetic_accuracy(bad, {1}), std::invalid_argument);
}

TEST_CASE("build indexes one record per variant in id-sorted order") {
    TableRig rig;
    REQUIRE(rig.variants.size() == 8);  // 4 operators x 2 exits

    std::vector<std::string> warnings;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy, &warnings);
    CHECK(tbl.built());
    CHECK(tbl.size() == 8);
    CHECK(warnings.empty());

    for (std::size_t i = 1; i < tbl.size(); ++i) {
        CHECK(tbl.perf()[i - 1].variant_id < tbl.perf()[i].variant_id);
    }
    for (std::uint32_t rid = 0; rid < tbl.size(); ++rid) {
        CHECK(tbl.perf_at(rid).variant_id == tbl.predictive_at(rid).variant_id);
        auto found = tbl.rid_of(tbl.perf_at(rid).variant_id);
        REQUIRE(found.has_value());
        CHECK(*found == rid);
        CHECK(tbl.perf_at(rid).storage_bytes == tbl.perf_at(rid).params * 4);
    }
    CHECK_FALSE(tbl.rid_of("slot0=baseline_conv|exit=9").has_value());

    // the indexes agree with the flat records
    tbl.latency_tree().validate();
    tbl.energy_tree().validate();
    CHECK(tbl.latency_tree().size() == tbl.size());
    CHECK(tbl.energy_tree().size() == tbl.size());
}

TEST_CASE("variants without an accuracy entry are excluded with a warning") {
    TableRig rig;
    const std::string dropped = rig.variants[3].variant_id;
    tables::AccuracySource patchy = [&](const elastic::VariantConfig& v) -> std::optional<double> {
        if (v.variant_id == dropped) return std::nullopt;
        return rig.accuracy(v);
    };
    std::vector<std::string> warnings;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, patchy, &warnings);
    CHECK(tbl.size() == rig.variants.size() - 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find(dropped) != std::string::npos);
    CHECK_FALSE(tbl.rid_of(dropped).has_value());
}

TEST_CASE("duplicate variants and out-of-range metrics are rejected") {
    TableRig rig;
    auto twice = rig.variants;
    twice.push_back(twice.front());
    CHECK_THROWS_AS(tables::PerfTables::build(twice, rig.net, rig.dev, rig.accuracy), std::invalid_argument);

    tables::AccuracySource overconfident = [](const elastic::VariantConfig&) { return 1.5; };
    CHECK_THROWS_AS(tables::PerfTables::build(rig.variants, rig.net, rig.dev, overconfident),
                    std::invalid_argument);
}

TEST_CASE("budget queries intersect the latency and energy indexes") {
    TableRig rig;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);

    // unbounded budgets admit everything
    auto all = tbl.candidates_within(1e300, 1e300);
    REQUIRE(all.size() == tbl.size());
    for (std::uint32_t rid = 0; rid < all.size(); ++rid) CHECK(all[rid] == rid);

    // below the minimum of either axis nothing qualifies
    CHECK(tbl.candidates_within(tbl.min_latency() * 0.5, 1e300).empty());
    CHECK(tbl.candidates_within(1e300, tbl.min_energy() * 0.5).empty());
    CHECK(tbl.candidates_within(-1.0, 1e300).empty());
    CHECK(tbl.candidates_within(1e300, -1.0).empty());

    // budgets at the minima keep at least the cheapest variant
    CHECK_FALSE(tbl.candidates_within(tbl.min_latency(), tbl.max_energy()).empty());

    // random budgets agree with a direct scan of the records
    nn::Rng rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        double tb = rng.uniform(tbl.min_latency() * 0.9, tbl.max_latency() * 1.1);
        double eb = rng.uniform(tbl.min_energy() * 0.9, tbl.max_energy() * 1.1);
        std::vector<std::uint32_t> expect;
        for (std::uint32_t rid = 0; rid < tbl.size(); ++rid) {
            const auto& d = tbl.predictive_at(rid);
            if (d.latency_s <= tb && d.energy_j <= eb) expect.push_back(rid);
        }
        CHECK(tbl.candidates_within(tb, eb) == expect);
    }

    tables::PerfTables unbuilt;
    CHECK_FALSE(unbuilt.built());
    CHECK_THROWS_AS(unbuilt.candidates_within(1.0, 1.0), std::logic_error);
    CHECK_THROWS_AS(unbuilt.min_latency(), std::logic_error);
}

TEST_CASE("extrema match a direct scan of the predictive records") {
    TableRig rig;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);
    double min_l = 1e300, max_l = -1e300, min_e = 1e300, max_e = -1e300;
    for (const auto& d : tbl.predictive()) {
        min_l = std::min(min_l, d.latency_s);
        max_l = std::max(max_l, d.latency_s);
        min_e = std::min(min_e, d.energy_j);
        max_e = std::max(max_e, d.energy_j);
    }
    CHECK(tbl.min_latency() == min_l);
    CHECK(tbl.max_latency() == max_l);
    CHECK(tbl.min_energy() == min_e);
    CHECK(tbl.max_energy() == max_e);
    CHECK(min_l < max_l);  // the space is not degenerate
    CHECK(min_e < max_e);
}

TEST_CASE("identical inputs rebuild byte-identical table files") {
    testutil::TempDir tmp("tables-determinism");
    TableRig rig;
    auto t1 = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);
    auto t2 = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);
    t1.save(tmp.file("a.tables"));
    t2.save(tmp.file("b.tables"));
    CHECK(read_bytes(tmp.file("a.tables")) == read_bytes(tmp.file("b.tables")));
}

TEST_CASE("tables survive the binary round-trip exactly") {
    testutil::TempDir tmp("tables-roundtrip");
    TableRig rig;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);
    tbl.save(tmp.file("t.tables"));

    auto loaded = tables::PerfTables::load(tmp.file("t.tables"));
    REQUIRE(loaded.size() == tbl.size());
    for (std::uint32_t rid = 0; rid < tbl.size(); ++rid) {
        CHECK(loaded.perf_at(rid).variant_id == tbl.perf_at(rid).variant_id);
        CHECK(loaded.perf_at(rid).params == tbl.perf_at(rid).params);
        CHECK(loaded.perf_at(rid).storage_bytes == tbl.perf_at(rid).storage_bytes);
        CHECK(loaded.perf_at(rid).accuracy == tbl.perf_at(rid).accuracy);
        CHECK(loaded.predictive_at(rid).latency_s == tbl.predictive_at(rid).latency_s);
        CHECK(loaded.predictive_at(rid).energy_j == tbl.predictive_at(rid).energy_j);
    }
    CHECK(loaded.candidates_within(tbl.max_latency(), tbl.max_energy()) ==
          tbl.candidates_within(tbl.max_latency(), tbl.max_energy()));

    // saving the loaded copy reproduces the same bytes
    loaded.save(tmp.file("again.tables"));
    CHECK(read_bytes(tmp.file("again.tables")) == read_bytes(tmp.file("t.tables")));

    tables::PerfTables unbuilt;
    CHECK_THROWS_AS(unbuilt.save(tmp.file("nope.tables")), std::logic_error);
}

TEST_CASE("corrupted table files are rejected whole") {
    testutil::TempDir tmp("tables-corrupt");
    TableRig rig;
    auto tbl = tables::PerfTables::build(rig.variants, rig.net, rig.dev, rig.accuracy);
    tbl.save(tmp.file("t.tables"));
    const std::string good = read_bytes(tmp.file("t.tables"));

    write_bytes(tmp.file("truncated.tables"), good.substr(0, good.size() - 10));
    CHECK_THROWS_AS(tables::PerfTables::load(tmp.file("truncated.tables")), std::runtime_error);

    std::string flipped = good;
    flipped[flipped.size() / 2] ^= 0x40;
    write_bytes(tmp.file("flipped.tables"), flipped);
    CHECK_THROWS_AS(tables::PerfTables::load(tmp.file("flipped.tables")), std::runtime_error);

    std::string wrong_version = good;
    wrong_version[5] = 2;
    write_bytes(tmp.file("version.tables"), wrong_version);
    CHECK_THROWS_AS(tables::PerfTables::load(tmp.file("version.tables")), std::runtime_error);

    std::string wrong_magic = good;
    wrong_magic[0] = 'X';
    write_bytes(tmp.file("magic.tables"), wrong_magic);
    CHECK_THROWS_AS(tables::PerfTables::load(tmp.file("magic.tables")), std::runtime_error);

    CHECK_THROWS_AS(tables::PerfTables::load(tmp.file("missing.tables")), std::runtime_error);
}

// Regenerates the committed fixtures from tests/fixture_spec.hpp; inert
// unless ELASTINET_WRITE_FIXTURES is set in the environment.
TEST_CASE("fixture writer") {
    if (std::getenv("ELASTINET_WRITE_FIXTURES") == nullptr) return;
    std::filesystem::create_directories(fixture::dir());

    auto spec = fixture::arch();
    elastic::ElasticNetwork net(spec, 77);
    fixture::build_table(net, spec).save(fixture::table_path());

    fixture::fill_params(net);
    net.save(fixture::checkpoint_path());
    MESSAGE("fixtures written to ", fixture::dir());
}

TEST_CASE("the committed table fixture reproduces from its pinned inputs") {
    testutil::TempDir tmp("tables-fixture");
    auto spec = fixture::arch();
    elastic::ElasticNetwork net(spec, 77);
    auto rebuilt = fixture::build_table(net, spec);
    rebuilt.save(tmp.file("rebuilt.tables"));
    CHECK(read_bytes(tmp.file("rebuilt.tables")) == read_bytes(fixture::table_path()));

    auto loaded = tables::PerfTables::load(fixture::table_path());
    CHECK(loaded.size() == 8);
    CHECK(loaded.rid_of("slot0=baseline_conv|exit=2").has_value());
}

TEST_CASE("the committed checkpoint fixture round-trips bit for bit") {
    testutil::TempDir tmp("ckpt-fixture");
    auto spec = fixture::arch();
    elastic::ElasticNetwork net(spec, 12345);
    net.load(fixture::checkpoint_path());
    net.save(tmp.file("resaved.ckpt"));
    CHECK(read_bytes(tmp.file("resaved.ckpt")) == read_bytes(fixture::checkpoint_path()));

    // and the parameters are exactly the pinned stream
    elastic::ElasticNetwork expect(spec, 999);
    fixture::fill_params(expect);
    REQUIRE(expect.all_params().size() == net.all_params().size());
    for (std::size_t i = 0; i < expect.all_params().size(); ++i) {
        CHECK(expect.all_params()[i]->value.data == net.all_params()[i]->value.data);
    }
}

}  // TEST_SUITE

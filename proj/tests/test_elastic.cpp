#include <doctest.h>

#include <set>
#include <string>
#include <vector>

#include "elastinet/io.hpp"
#include "elastinet/dataset.hpp"
#include "elastinet/elastic.hpp"
#include "test_util.hpp"

using namespace elastinet;
using elastic::OperatorKind;

namespace {

const char* kToyArch = R"(
[network]
num_classes = 4
in_channels = 1
in_size = 16

[segment1]
layers = conv out=8 k=3 stride=1 pad=1|relu|conv out=8 k=3 stride=1 pad=1|relu
slot = yes

[segment2]
layers = conv out=16 k=3 stride=2 pad=1|relu
slot = yes

[segment3]
layers = conv out=16 k=3 stride=1 pad=1|relu
slot = yes

[segment4]
layers = conv out=24 k=3 stride=2 pad=1|relu
)";

long long param_elems(nn::Layer& layer) {
    std::vector<nn::Parameter*> ps;
    layer.collect_params(ps);
    long long n = 0;
    for (nn::Parameter* p : ps) n += p->value.numel();
    return n;
}

nn::Tensor random_input(std::uint64_t seed) {
    nn::Rng rng(seed);
    nn::Tensor x({1, 1, 16, 16});
    for (float& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return x;
}

std::uint64_t net_digest(const elastic::ElasticNetwork& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const nn::Parameter* p : net.all_params()) {
        h = nn::mix_seed(h, nn::bytes_digest(p->value.data));
    }
    return h;
}

}  // namespace

TEST_SUITE("elastic") {

TEST_CASE("operator kinds round-trip through their names") {
    const auto& kinds = elastic::all_operator_kinds();
    REQUIRE(kinds.size() == 4);
    std::set<std::string> names;
    for (OperatorKind k : kinds) {
        std::string n = elastic::operator_name(k);
        CHECK(elastic::operator_from_name(n) == k);
        names.insert(n);
    }
    CHECK(names.size() == 4);
    CHECK_THROWS_AS(elastic::operator_from_name("bogus_conv"), std::invalid_argument);
}

TEST_CASE("arch parser reads sections, layers, and slot defaults") {
    auto spec = elastic::parse_arch_text(kToyArch, "toy.arch");
    CHECK(spec.num_classes == 4);
    CHECK(spec.in_channels == 1);
    CHECK(spec.in_size == 16);
    REQUIRE(spec.segments.size() == 4);
    CHECK(spec.segments[0].layers.size() == 4);
    CHECK(spec.segments[0].has_slot);
    CHECK(spec.segments[0].slot_layer == 2);  // defaults to the last conv
    CHECK(spec.segments[0].slot_ops.size() == 4);
    CHECK_FALSE(spec.segments[3].has_slot);
    CHECK(spec.segments[1].layers[0].conv.stride == 2);
}

TEST_CASE("arch parser rejects malformed specs with file and line diagnostics") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            elastic::parse_arch_text(text, "bad.arch");
            FAIL_CHECK("expected a parse error containing '", needle, "'");
        } catch (const std::invalid_argument& e) {
            std::string msg = e.what();
            INFO("message: ", msg);
            CHECK(msg.find(needle) != std::string::npos);
            CHECK(msg.find("bad.arch") != std::string::npos);
        }
    };
    expect_error("[network]\nnum_classes=4\n[segment1]\nlayers=conv out=8\n[segment1]\nlayers=conv out=8\n",
                 "duplicate exit position");
    expect_error("[network]\nnum_classes=4\n[segment2]\nlayers=conv out=8\n",
                 "exit positions not strictly increasing");
    expect_error("[network]\nnum_classes=4\n[segment1]\nlayers=maxpool\n", "unknown layer");
    expect_error("[network]\nnum_classes=4\n[segment1]\nlayers=conv out=8|relu\nslot=yes\nslot_layer=1\n",
                 "slot_layer must point at a conv layer");
    expect_error("[network]\nnum_classes=4\n[segment1]\nlayers=conv out=8\nslot=yes\nslot_ops=depthwise_separable\n",
                 "must include baseline_conv");
    expect_error("[network]\nnum_classes=1\n[segment1]\nlayers=conv out=8\n", "num_classes");
    expect_error("[network]\nnum_classes=4\n", "at least one [segment]");
}

TEST_CASE("built network exposes one exit per segment") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 1);
    CHECK(net.num_segments() == 4);
    CHECK(net.num_slots() == 3);
    CHECK(net.num_classes() == 4);
    nn::Tensor x = random_input(3);
    for (int e = 1; e <= 4; ++e) {
        nn::Tensor logits = net.forward_to_exit(x, e, false);
        CHECK(logits.shape == std::vector<int>{1, 4});
    }
    CHECK_THROWS_AS(net.forward_to_exit(x, 0, false), std::out_of_range);
    CHECK_THROWS_AS(net.forward_to_exit(x, 5, false), std::out_of_range);

    // single-segment spec degenerates to a plain classifier
    elastic::ElasticNetwork tiny(
        elastic::parse_arch_text("[network]\nnum_classes=4\n[segment1]\nlayers=conv out=8\n", "tiny"), 1);
    CHECK(tiny.num_segments() == 1);
    CHECK(tiny.forward_to_exit(x, 1, false).shape == std::vector<int>{1, 4});
}

TEST_CASE("exit heads cost one fixed-width conv plus two small dense layers") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 1);
    // conv cin->8 (9k weights + bias) + fc 8->8 + fc 8->classes; independent
    // of spatial size, linear in the segment's output channels
    const int segment_channels[] = {8, 16, 16, 24};
    for (int e = 1; e <= net.num_segments(); ++e) {
        long long cin = segment_channels[e - 1];
        long long expected = (8 * cin * 9 + 8) + (8 * 8 + 8) + (8 * 4 + 4);
        CHECK(net.exit_branch_param_count(e) == expected);
    }
    // the heads together stay well under the backbone they hang off
    long long heads = 0;
    for (int e = 1; e <= net.num_segments(); ++e) heads += net.exit_branch_param_count(e);
    CHECK(heads < net.backbone_param_count());
}

TEST_CASE("depthwise separable swap drops 1168 params to 216") {
    nn::Rng rng(5);
    elastic::SlotLayer slot("s", 8, 16, 3, 1, 1, elastic::all_operator_kinds(), rng);
    CHECK(param_elems(slot.block(OperatorKind::baseline_conv)) == 1168);
    CHECK(param_elems(slot.block(OperatorKind::depthwise_separable)) == 216);
    CHECK(param_elems(slot.block(OperatorKind::grouped_shuffle)) == 592);
    CHECK(param_elems(slot.block(OperatorKind::lowrank_decomposed)) == 192);
}

TEST_CASE("low-rank fc factorization carries d_in*r + r*d_out weight elements") {
    nn::Rng rng(5);
    auto fc = nn::make_lowrank_fc("f", 20, 12, 3, rng);
    std::vector<nn::Parameter*> ps;
    fc->collect_params(ps);
    long long weights = 0;
    for (nn::Parameter* p : ps) {
        if (p->value.rank() == 2) weights += p->value.numel();
    }
    CHECK(weights == 20 * 3 + 3 * 12);
    CHECK(weights < 20 * 12);
}

TEST_CASE("operator swap preserves every parameter bitwise and is reversible") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 7);
    nn::Tensor x = random_input(11);
    nn::Tensor before = net.forward_to_exit(x, 4, false);
    std::uint64_t digest = net_digest(net);

    auto v = net.apply_compression_operator(1, OperatorKind::depthwise_separable);
    CHECK(v.ops[1] == OperatorKind::depthwise_separable);
    CHECK(net_digest(net) == digest);  // swaps move no weights

    nn::Tensor swapped = net.forward_to_exit(x, 4, false);
    CHECK(swapped.data != before.data);  // different operator, different function

    net.apply_compression_operator(1, OperatorKind::baseline_conv);
    nn::Tensor after = net.forward_to_exit(x, 4, false);
    CHECK(after.data == before.data);  // bitwise restoration
    CHECK(net_digest(net) == digest);

    // idempotence: re-applying the active operator keeps the variant id
    auto v1 = net.apply_compression_operator(0, OperatorKind::baseline_conv);
    auto v2 = net.apply_compression_operator(0, OperatorKind::baseline_conv);
    CHECK(v1.variant_id == v2.variant_id);
}

TEST_CASE("apply_variant validates before mutating") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 7);
    elastic::VariantConfig bad;
    bad.ops = {OperatorKind::baseline_conv};  // wrong slot count
    bad.exit_id = 1;
    CHECK_THROWS_AS(net.apply_variant(bad), std::invalid_argument);

    elastic::VariantConfig bad_exit;
    bad_exit.ops = {OperatorKind::baseline_conv, OperatorKind::baseline_conv, OperatorKind::baseline_conv};
    bad_exit.exit_id = 9;
    CHECK_THROWS_AS(net.apply_variant(bad_exit), std::out_of_range);

    elastic::VariantConfig good;
    good.ops = {OperatorKind::lowrank_decomposed, OperatorKind::grouped_shuffle, OperatorKind::baseline_conv};
    good.exit_id = 2;
    net.apply_variant(good);
    auto active = net.active_variant();
    CHECK(active.ops == good.ops);
    CHECK(active.exit_id == 2);
}

TEST_CASE("forward_to_exit is deterministic and local to its prefix") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 9);
    nn::Tensor x = random_input(13);
    nn::Tensor a = net.forward_to_exit(x, 2, false);
    nn::Tensor b = net.forward_to_exit(x, 2, false);
    CHECK(a.data == b.data);

    // poke a segment-3 weight: exits 1 and 2 must not see it
    nn::Tensor e1 = net.forward_to_exit(x, 1, false);
    for (nn::Parameter* p : net.partition_params(3)) {
        for (float& v : p->value.data) v += 1.0f;
    }
    CHECK(net.forward_to_exit(x, 1, false).data == e1.data);
    CHECK(net.forward_to_exit(x, 2, false).data == a.data);
    CHECK(net.forward_to_exit(x, 3, false).data != a.data);
}

TEST_CASE("switching the exit alone moves no parameters") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 21);
    std::uint64_t digest = net_digest(net);
    for (int e = 1; e <= 4; ++e) {
        net.set_active_exit(e);
        CHECK(net_digest(net) == digest);
    }

    // deeper paths strictly extend shallower ones (weight sharing)
    auto p1 = net.active_path_params(1);
    auto p2 = net.active_path_params(2);
    std::set<const nn::Parameter*> in2(p2.begin(), p2.end());
    int shared = 0;
    for (const nn::Parameter* p : p1) {
        if (in2.count(p)) ++shared;
    }
    long long exit1 = net.exit_branch_param_count(1);
    (void)exit1;
    // everything except exit-1's own branch parameters re-appears in path 2
    CHECK(shared > 0);
    CHECK(static_cast<std::size_t>(shared) < p1.size());
}

TEST_CASE("forward_adaptive honors thresholds and matches the taken exit bitwise") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 17);
    nn::Tensor x = random_input(19);

    auto always_first = net.forward_adaptive(x, 0.0);
    CHECK(always_first.exit_taken == 1);
    CHECK(always_first.logits.data == net.forward_to_exit(x, 1, false).data);

    auto never_early = net.forward_adaptive(x, 1.0 + 1e-9);
    CHECK(never_early.exit_taken == net.num_segments());
    CHECK(never_early.logits.data == net.forward_to_exit(x, 4, false).data);

    auto mid = net.forward_adaptive(x, 0.3);
    CHECK(mid.logits.data == net.forward_to_exit(x, mid.exit_taken, false).data);
    CHECK(mid.confidence >= 0.0);
    CHECK(mid.confidence <= 1.0);

    // the active exit caps the adaptive walk
    net.set_active_exit(2);
    auto capped = net.forward_adaptive(x, 1.0 + 1e-9);
    CHECK(capped.exit_taken == 2);
}

TEST_CASE("variant enumeration covers ops^slots x exits exactly once") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 1);
    CHECK(net.variant_space_size() == 4LL * 4 * 4 * 4);  // 4^3 slot combos x 4 exits

    auto all = net.enumerate_variants(1 << 20);
    CHECK(static_cast<long long>(all.size()) == net.variant_space_size());
    std::set<std::string> ids;
    for (const auto& v : all) ids.insert(v.variant_id);
    CHECK(ids.size() == all.size());  // duplicate-free

    auto truncated = net.enumerate_variants(10);
    REQUIRE(truncated.size() == 10);
    for (std::size_t i = 0; i < truncated.size(); ++i) {
        CHECK(truncated[i].variant_id == all[i].variant_id);  // stable prefix order
    }

    auto again = net.enumerate_variants(1 << 20);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(again[i].variant_id == all[i].variant_id);

    CHECK_THROWS_AS(net.enumerate_variants(0), std::invalid_argument);

    // degenerate single-op single-slot single-exit space
    elastic::ElasticNetwork tiny(
        elastic::parse_arch_text(
            "[network]\nnum_classes=4\n[segment1]\nlayers=conv out=8|relu|conv out=8\nslot=yes\nslot_ops=baseline_conv\n",
            "tiny"),
        1);
    CHECK(tiny.variant_space_size() == 1);
    CHECK(tiny.enumerate_variants(100).size() == 1);
}

TEST_CASE("variant ids round-trip through parse") {
    std::vector<OperatorKind> ops{OperatorKind::depthwise_separable, OperatorKind::baseline_conv,
                                  OperatorKind::lowrank_decomposed};
    std::string id = elastic::make_variant_id(ops, 3);
    CHECK(id == "slot0=depthwise_separable|slot1=baseline_conv|slot2=lowrank_decomposed|exit=3");
    auto v = elastic::parse_variant_id(id);
    CHECK(v.ops == ops);
    CHECK(v.exit_id == 3);
    CHECK(v.variant_id == id);

    CHECK_THROWS_AS(elastic::parse_variant_id("slot0=baseline_conv"), std::invalid_argument);
    CHECK_THROWS_AS(elastic::parse_variant_id("slot1=baseline_conv|exit=1"), std::invalid_argument);
    CHECK_THROWS_AS(elastic::parse_variant_id(""), std::invalid_argument);
}

TEST_CASE("path cost grows with exit depth and ignores post-exit slots") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 1);
    auto variant = [&](OperatorKind s0, OperatorKind s1, OperatorKind s2, int exit_id) {
        elastic::VariantConfig v;
        v.ops = {s0, s1, s2};
        v.exit_id = exit_id;
        v.variant_id = elastic::make_variant_id(v.ops, exit_id);
        return v;
    };
    auto base = OperatorKind::baseline_conv;

    long long prev_flops = 0, prev_params = 0;
    for (int e = 1; e <= 4; ++e) {
        auto acc = net.cost_for(variant(base, base, base, e));
        CHECK(acc.flops > prev_flops);
        CHECK(acc.params > prev_params);
        prev_flops = acc.flops;
        prev_params = acc.params;
    }

    // slot 2 sits in segment 3; with exit 1 its operator cannot matter
    auto a = net.cost_for(variant(base, base, base, 1));
    auto b = net.cost_for(variant(base, base, OperatorKind::depthwise_separable, 1));
    CHECK(a.flops == b.flops);
    CHECK(a.params == b.params);

    // compression at an in-path slot reduces both flops and params
    auto c = net.cost_for(variant(base, OperatorKind::depthwise_separable, base, 4));
    auto d = net.cost_for(variant(base, base, base, 4));
    CHECK(c.flops < d.flops);
    CHECK(c.params < d.params);
}

TEST_CASE("network checkpoints restore the exact forward behavior") {
    testutil::TempDir tmp("elastic-ckpt");
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 31);
    nn::Tensor x = random_input(37);
    nn::Tensor before = net.forward_to_exit(x, 4, false);
    net.save(tmp.file("net.ckpt"));

    elastic::ElasticNetwork other(elastic::parse_arch_text(kToyArch, "toy.arch"), 99);
    CHECK(other.forward_to_exit(x, 4, false).data != before.data);
    other.load(tmp.file("net.ckpt"));
    CHECK(other.forward_to_exit(x, 4, false).data == before.data);
}

TEST_CASE("untrained branches sit near chance accuracy") {
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 41);
    auto ds = data::make_bars_dataset(400, 5);
    auto rep = elastic::branch_diversity_report(net, ds, -1.0);
    REQUIRE(rep.accuracy.size() == 4);
    for (double acc : rep.accuracy) {
        CHECK(acc > 0.10);
        CHECK(acc < 0.45);
    }
    CHECK(rep.flagged_segments.empty());  // floor below any possible delta
    CHECK_THROWS_AS(elastic::branch_diversity_report(net, data::Dataset{}, 0.0), std::invalid_argument);
}

TEST_CASE("diversity flags segments whose exit gains less than the floor") {
    auto rep = elastic::diversity_from_accuracies({0.5, 0.6, 0.6, 0.7}, 0.0);
    REQUIRE(rep.delta.size() == 3);
    CHECK(rep.delta[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.delta[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.delta[2] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.flagged_segments.empty());  // floor 0 flags nothing here

    auto rep2 = elastic::diversity_from_accuracies({0.5, 0.6, 0.6, 0.7}, 0.05);
    CHECK(rep2.flagged_segments == std::vector<int>{3});

    CHECK_THROWS_AS(elastic::diversity_from_accuracies({}, 0.0), std::invalid_argument);
}

TEST_CASE("variant list exports one csv row per variant") {
    testutil::TempDir tmp("variants");
    elastic::ElasticNetwork net(elastic::parse_arch_text(kToyArch, "toy.arch"), 1);
    auto variants = net.enumerate_variants(12);
    elastic::export_variant_csv(tmp.file("v.csv"), variants);
    auto table = util::read_csv(tmp.file("v.csv"));
    CHECK(table.header == std::vector<std::string>{"variant_id", "slot_ops", "exit_id"});
    CHECK(table.rows.size() == 12);
    CHECK(table.rows[0][0] == variants[0].variant_id);
}

}  // TEST_SUITE

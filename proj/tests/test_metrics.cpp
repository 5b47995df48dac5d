#include <cmath>
#include <random>

#include <doctest.h>

#include "serum/kv_tree.hpp"
#include "serum/metrics.hpp"
#include "serum/vocabulary.hpp"
#include "support.hpp"

using namespace serum;
using serum::testing::oracle_anls;
using serum::testing::oracle_tree_distance;
using serum::testing::random_tree;

namespace {

KvTree flat(std::initializer_list<std::pair<const char*, const char*>> pairs) {
    KvTree t;
    for (const auto& [k, v] : pairs) {
        t.push_back(KvNode{k, std::string(v)});
    }
    return t;
}

const std::vector<std::string> kKeys{"company", "date", "total", "address", "item"};

}  // namespace

TEST_CASE("field_f1 examples") {
    const auto gt = flat({{"total", "9.50"}});
    CHECK(field_f1(gt, gt).f1 == 1.0);

    const auto none = field_f1({}, gt);
    CHECK(none.f1 == 0.0);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);

    const auto both_empty = field_f1({}, {});
    CHECK(both_empty.f1 == 1.0);

    const auto extra = field_f1(flat({{"total", "9.50"}, {"date", "2020"}}), gt);
    CHECK(extra.precision == doctest::Approx(0.5));
    CHECK(extra.recall == doctest::Approx(1.0));
    CHECK(extra.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("field_f1 counts duplicates with multiplicity") {
    const auto pred = flat({{"item", "A"}, {"item", "A"}});
    const auto gt = flat({{"item", "A"}});
    const auto c = field_counts(pred, gt);
    CHECK(c.matched == 1);
    CHECK(c.predicted == 2);
    CHECK(c.ground_truth == 1);
}

TEST_CASE("field_f1 is symmetric") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_tree(rng, kKeys, 9, 2, "ab");
        const auto b = random_tree(rng, kKeys, 9, 2, "ab");
        CHECK(field_f1(a, b).f1 == doctest::Approx(field_f1(b, a).f1));
    }
}

TEST_CASE("ted_accuracy examples") {
    const auto gt = flat({{"company", "SUN"}, {"total", "9.50"}});
    CHECK(ted_accuracy(gt, gt) == 1.0);
    CHECK(ted_accuracy({}, gt) == 0.0);
    CHECK_THROWS_AS(ted_accuracy(gt, {}), std::invalid_argument);

    // One leaf off by one character out of four: rename cost 1/4 over TED(empty, gt) = 4.
    const auto near = flat({{"company", "SUN"}, {"total", "9.51"}});
    CHECK(ted_accuracy(near, gt) == doctest::Approx(1.0 - 0.25 / 4.0));
}

TEST_CASE("ted_accuracy matches the recursive forest oracle") {
    std::mt19937_64 rng(17);
    int compared = 0;
    while (compared < 200) {
        const auto gt = random_tree(rng, kKeys, 6, 2, "abc");
        if (gt.empty()) {
            continue;
        }
        const auto pred = random_tree(rng, kKeys, 6, 2, "abc");
        REQUIRE(serum::testing::labeled_size(gt) <= 6);
        REQUIRE(serum::testing::labeled_size(pred) <= 6);
        const double d = oracle_tree_distance(pred, gt);
        CHECK(tree_edit_distance(to_labeled_tree(pred), to_labeled_tree(gt)) == doctest::Approx(d).epsilon(1e-12));
        const double expected = std::max(0.0, 1.0 - d / oracle_tree_distance({}, gt));
        CHECK(ted_accuracy(pred, gt) == doctest::Approx(expected).epsilon(1e-12));
        ++compared;
    }
}

TEST_CASE("ted_accuracy lies in [0, 1] and is 1 only for identical trees") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 300; ++trial) {
        const auto gt = random_tree(rng, kKeys, 8, 3, "ab");
        if (gt.empty()) {
            continue;
        }
        const auto pred = random_tree(rng, kKeys, 8, 3, "ab");
        const double acc = ted_accuracy(pred, gt);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        CHECK((acc == 1.0) == (pred == gt));
    }
}

TEST_CASE("anls examples and invariances") {
    CHECK(anls("Paris", {"Paris"}) == 1.0);
    CHECK(anls("abc", {"xyz"}) == 0.0);
    CHECK(anls("abc", {"abd"}) == doctest::Approx(2.0 / 3.0));
    CHECK(anls("abc", {"xyz", "abd"}) == doctest::Approx(2.0 / 3.0));
    CHECK(anls("  PaRiS ", {"paris"}) == 1.0);
    CHECK(anls("paris", {"  PARIS\t"}) == 1.0);
    CHECK(anls("", {""}) == 1.0);
}

TEST_CASE("anls matches the recursive edit-distance oracle") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> len(0, 8);
    const std::string alphabet = "abAB c";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    auto draw = [&] {
        std::string s;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) {
            s.push_back(alphabet[pick(rng)]);
        }
        return s;
    };
    for (int trial = 0; trial < 500; ++trial) {
        const std::string a = draw();
        const std::string b = draw();
        CHECK(std::abs(anls(a, {b}) - oracle_anls(a, {b})) <= 1e-9);
        CHECK(edit_distance(a, b) == serum::testing::oracle_edit_distance(a, b));
    }
}

TEST_CASE("serialize_total and parse_total") {
    Vocabulary v(default_charset());
    for (const auto& k : kKeys) {
        v.register_key(k);
    }
    CHECK(serialize_total(v, {}).empty());
    CHECK(parse_total(v, std::vector<TokenId>{}).tree.empty());

    const auto single = flat({{"total", "9.50"}});
    CHECK(render_total(v, single) == "<s_total>9.50<e_total>");
    const auto ids = serialize_total(v, single);
    CHECK(v.decode(ids) == "<s_total>9.50<e_total>");
    const auto parsed = parse_total(v, ids);
    CHECK(parsed.tree == single);
    CHECK_FALSE(parsed.malformed);

    CHECK_THROWS_AS(serialize_total(v, flat({{"unknown", "x"}})), std::invalid_argument);
}

TEST_CASE("parse_total repairs malformed sequences") {
    Vocabulary v(default_charset());
    v.register_key("total");
    v.register_key("date");
    const TokenId st = *v.start_tag("total");
    const TokenId et = *v.end_tag("total");
    const TokenId ed = *v.end_tag("date");

    std::vector<TokenId> unclosed{st};
    for (TokenId c : v.encode("9.5")) {
        unclosed.push_back(c);
    }
    const auto a = parse_total(v, unclosed);
    CHECK(a.malformed);
    CHECK(a.tree == flat({{"total", "9.5"}}));

    std::vector<TokenId> stray = v.encode("xx");
    stray.push_back(st);
    stray.push_back(v.encode("1").front());
    stray.push_back(et);
    stray.push_back(ed);
    const auto b = parse_total(v, stray);
    CHECK(b.malformed);
    CHECK(b.tree == flat({{"total", "1"}}));
}

TEST_CASE("serialize_total round trips random nested trees") {
    Vocabulary v(default_charset());
    for (const auto& k : kKeys) {
        v.register_key(k);
    }
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto tree = random_tree(rng, kKeys, 14, 3, "09.ab X");
        REQUIRE(kv_is_well_formed(tree));
        const auto parsed = parse_total(v, serialize_total(v, tree));
        CHECK_FALSE(parsed.malformed);
        CHECK(parsed.tree == tree);
    }
}

TEST_CASE("kv json round trip and flatten") {
    const auto j = nlohmann::ordered_json::parse(R"({"menu": {"name": "TEA", "price": "2"}, "total": "2"})");
    const auto tree = kv_from_json(j);
    CHECK(kv_to_json(tree) == j);
    const auto flat_pairs = kv_flatten(tree);
    REQUIRE(flat_pairs.size() == 3);
    CHECK(flat_pairs[0].first == "menu.name");
    CHECK(flat_pairs[2].first == "total");
    CHECK_THROWS_AS(kv_from_json(nlohmann::ordered_json::parse(R"({"a": 1})")), std::invalid_argument);
    CHECK_FALSE(kv_is_well_formed(flat({{"a", ""}})));
}

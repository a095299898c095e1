#include <doctest.h>

#include <set>
#include <sstream>

#include "kcheck/error.hpp"
#include "support.hpp"

using namespace kcheck;
using namespace kcheck::testing;

TEST_CASE("splitmix64 reference sequence") {
    SplitMix64 rng(1234567);
    const std::uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                                      4593380528125082431ULL, 16408922859458223821ULL};
    for (auto e : expected) CHECK(rng.next() == e);
}

TEST_CASE("splitmix64 derived draws stay in range") {
    SplitMix64 rng(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.uniform_index(7) < 7);
    }
    std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    rng.shuffle(items);
    std::vector<int> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("format_double round-trips") {
    SplitMix64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform_index(40)) - 20);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.0) == "-2");
}

TEST_CASE("read one representation record") {
    std::istringstream in(
        R"({"id":"a","task":"t1","label":1,"model":"m","layer":0,"dim":2,"vec":[0.5,-1],"meta":{"k":"v"}})"
        "\n");
    auto recs = read_representations(in);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].id == "a");
    CHECK(recs[0].vec == std::vector<double>{0.5, -1.0});
    CHECK(recs[0].meta.at("k") == "v");
}

namespace {

std::string error_of(const std::string& text) {
    std::istringstream in(text);
    try {
        read_representations(in);
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("representation reader rejects invalid lines with line numbers") {
    const std::string good = R"({"id":"a","task":"t1","label":1,"model":"m","layer":0,"dim":2,"vec":[1,2]})";
    const std::string short_vec = R"({"id":"b","task":"t1","label":1,"model":"m","layer":0,"dim":3,"vec":[1,2]})";
    const std::string bad_dim = R"({"id":"b","task":"t1","label":1,"model":"m","layer":0,"dim":3,"vec":[1,2,3]})";
    const std::string bad_label = R"({"id":"b","task":"t1","label":2,"model":"m","layer":0,"dim":2,"vec":[1,2]})";
    const std::string bad_task = R"({"id":"b","task":"t9","label":1,"model":"m","layer":0,"dim":2,"vec":[1,2]})";

    auto e = error_of(good + "\n" + short_vec + "\n");
    CHECK(e.find("line 2") != std::string::npos);
    CHECK(error_of(good + "\n" + bad_dim + "\n").find("line 2") != std::string::npos);
    CHECK(error_of(good + "\n" + good + "\n").find("duplicate") != std::string::npos);
    CHECK(error_of(good + "\n\n{not json\n").find("line 3") != std::string::npos);
    CHECK_FALSE(error_of(bad_label).empty());
    CHECK_FALSE(error_of(bad_task).empty());
    CHECK(error_of(good + "\n   \n").empty());
}

TEST_CASE("token score reader validates logprobs") {
    std::istringstream ok(R"({"id":"x","tokens":["a","b"],"logprobs":[-0.5,0]})");
    CHECK(read_token_scores(ok).size() == 1);
    std::istringstream positive(R"({"id":"x","tokens":["a"],"logprobs":[0.1]})");
    CHECK_THROWS_AS(read_token_scores(positive), InputError);
    std::istringstream ragged(R"({"id":"x","tokens":["a","b"],"logprobs":[-0.1]})");
    CHECK_THROWS_AS(read_token_scores(ragged), InputError);
    std::istringstream empty(R"({"id":"x","tokens":[],"logprobs":[]})");
    CHECK_THROWS_AS(read_token_scores(empty), InputError);
}

TEST_CASE("query and passage readers") {
    std::istringstream q(
        R"({"id":"q1","question":"Q?","gold_answers":["A"],"category":"noisy","known_hint":1})"
        "\n"
        R"({"id":"q2","question":"Q?","gold_answers":["B"],"category":"clean","known_hint":null})");
    auto qs = read_queries(q);
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].category == QueryCategory::Noisy);
    CHECK(qs[0].known_hint == 1);
    CHECK_FALSE(qs[1].known_hint.has_value());

    std::istringstream no_gold(R"({"id":"q1","question":"Q?","gold_answers":[],"category":"clean"})");
    CHECK_THROWS_AS(read_queries(no_gold), InputError);

    std::istringstream p(R"({"pid":"p","text":"t","kind":"misleading","retrieval_score":0.5})");
    auto ps = read_passages(p);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].kind == PassageKind::Misleading);
    CHECK(ps[0].retrieval_score == 0.5);
    std::istringstream empty_text(R"({"pid":"p","text":"","kind":"helpful"})");
    CHECK_THROWS_AS(read_passages(empty_text), InputError);
}

TEST_CASE("write_records edge cases") {
    std::ostringstream empty;
    write_records(std::vector<RepresentationRecord>{}, empty);
    CHECK(empty.str().empty());

    std::ostringstream one;
    SplitMix64 rng(1);
    write_records(std::vector<RepresentationRecord>{make_record("a", Task::T2InformedHelp, 1, random_vec(3, rng))},
                  one);
    const std::string text = one.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
    CHECK(text.back() == '\n');
    CHECK(text.rfind(R"({"id":"a","task":"t2","label":1,"model":"m","layer":0,"dim":3,"vec":[)", 0) == 0);
}

TEST_CASE("representation round-trip over 200 random records") {
    SplitMix64 rng(11);
    std::vector<RepresentationRecord> recs;
    for (int i = 0; i < 200; ++i) {
        auto r = make_record("r" + std::to_string(i), static_cast<Task>(rng.uniform_index(4)),
                             static_cast<int>(rng.uniform_index(2)), random_vec(5, rng, 1e3));
        if (i % 3 == 0) r.meta["note"] = "quote \" and \\ and \xc3\xa9";
        recs.push_back(r);
    }
    std::ostringstream out;
    write_records(recs, out);
    std::istringstream in(out.str());
    auto back = read_representations(in);
    CHECK(back == recs);
    std::ostringstream again;
    write_records(back, again);
    CHECK(again.str() == out.str());
}

TEST_CASE("token score and query round-trips") {
    SplitMix64 rng(12);
    std::vector<TokenScoreRecord> ts;
    for (int i = 0; i < 50; ++i) {
        TokenScoreRecord r{"t" + std::to_string(i), {}, {}};
        for (std::size_t j = 0; j <= rng.uniform_index(6); ++j) {
            r.tokens.push_back("tok" + std::to_string(j));
            r.logprobs.push_back(-rng.uniform01() * 5.0);
        }
        ts.push_back(r);
    }
    std::ostringstream out;
    write_records(ts, out);
    std::istringstream in(out.str());
    CHECK(read_token_scores(in) == ts);

    std::vector<QueryRecord> qs{{"q", "What?", {"A", "B"}, QueryCategory::Noisy, 0},
                                {"r", "Who?", {"C"}, QueryCategory::Clean, std::nullopt}};
    std::ostringstream qo;
    write_records(qs, qo);
    std::istringstream qi(qo.str());
    CHECK(read_queries(qi) == qs);
}

namespace {

std::vector<RepresentationRecord> labelled(std::size_t n_pos, std::size_t n_neg) {
    SplitMix64 rng(5);
    std::vector<RepresentationRecord> out;
    for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
        out.push_back(make_record("id" + std::to_string(i), Task::T1Internal, i < n_pos ? 1 : 0, random_vec(2, rng)));
    }
    return out;
}

std::set<std::string> ids(const std::vector<RepresentationRecord>& recs) {
    std::set<std::string> out;
    for (const auto& r : recs) out.insert(r.id);
    return out;
}

}  // namespace

TEST_CASE("split_train_eval partitions per class") {
    auto recs = labelled(150, 150);
    auto [train, eval] = split_train_eval(recs, {100, 42});
    CHECK(train.size() == 200);
    CHECK(eval.size() == 100);
    auto count_pos = [](const auto& v) { return std::count_if(v.begin(), v.end(), [](auto& r) { return r.label == 1; }); };
    CHECK(count_pos(train) == 100);
    CHECK(count_pos(eval) == 50);

    auto all = ids(train);
    for (const auto& id : ids(eval)) CHECK(all.insert(id).second);
    CHECK(all.size() == 300);

    auto [train2, eval2] = split_train_eval(recs, {100, 42});
    CHECK(train2 == train);
    CHECK(eval2 == eval);
    auto [train3, eval3] = split_train_eval(recs, {100, 43});
    CHECK(ids(train3) != ids(train));

    auto [t0, e0] = split_train_eval(recs, {0, 1});
    CHECK(t0.empty());
    CHECK(e0 == recs);

    CHECK_THROWS_AS(split_train_eval(labelled(150, 50), {100, 1}), InputError);
}

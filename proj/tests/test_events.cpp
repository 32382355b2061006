#include <doctest.h>

#include <random>
#include <string>

#include "atc/csv.hpp"
#include "atc/error.hpp"
#include "atc/events.hpp"
#include "atc/sequence.hpp"

using namespace atc;

namespace {

std::vector<EventRecord> user_events(const std::string& user, std::size_t n, double t0 = 0.0) {
    std::vector<EventRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({user, "a", t0 + static_cast<double>(i)});
    return out;
}

}  // namespace

TEST_CASE("csv reader handles quoting and CRLF") {
    auto rows = csv::parse("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n\n\"multi\nline\",z\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].fields == std::vector<std::string>{"x,1", "say \"hi\""});
    CHECK(rows[2].fields == std::vector<std::string>{"multi\nline", "z"});
    CHECK(rows[2].line == 4);
    CHECK_THROWS_AS(csv::parse("\"open\n"), ParseError);
    CHECK(csv::quote("a,b") == "\"a,b\"");
    CHECK(csv::quote("plain") == "plain");
}

TEST_CASE("csv row maps to a record") {
    auto r = parse_event_log("user_id,action,timestamp\nu1,appA,1655000000\n", LogFormat::csv);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == EventRecord{"u1", "appA", 1655000000.0});
}

TEST_CASE("bad timestamp names line and field") {
    try {
        parse_event_log("user_id,action,timestamp\nu1,appA,notatime\n", LogFormat::csv);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.field() == "timestamp");
    }
}

TEST_CASE("jsonl with RFC 3339 timestamps") {
    auto r = parse_event_log(R"({"user_id":"u1","action":"appA","timestamp":"2016-06-01T00:00:00Z"})"
                             "\n"
                             R"({"user_id":"u1","action":"appB","timestamp":"2016-06-01T09:30:15.250+09:00"})"
                             "\n"
                             R"({"user_id":"u2","action":"appB","timestamp":12.5})",
                             LogFormat::jsonl);
    REQUIRE(r.size() == 3);
    // calendar utility: 2016-06-01T00:00:00Z
    CHECK(r[0].timestamp == 1464739200.0);
    CHECK(r[1].timestamp == 1464741015.25);
    CHECK(r[2].timestamp == 12.5);
}

TEST_CASE("ingest rejects malformed input") {
    CHECK_THROWS_AS(parse_event_log("user,action,timestamp\nu,a,1\n", LogFormat::csv), ParseError);
    CHECK_THROWS_AS(parse_event_log("user_id,action,timestamp\nu,a\n", LogFormat::csv), ParseError);
    CHECK_THROWS_AS(parse_event_log("user_id,action,timestamp\nu,a,-1\n", LogFormat::csv), ParseError);
    CHECK_THROWS_AS(parse_event_log("user_id,action,timestamp\nu,\xff,1\n", LogFormat::csv), DataError);
    CHECK_THROWS_AS(parse_event_log("{\"user_id\":\"u\"}\n", LogFormat::jsonl), ParseError);
    CHECK_THROWS_AS(parse_log_format("xml"), UsageError);
}

TEST_CASE("utf-8 BOM and labels with separators") {
    auto r = parse_event_log("\xEF\xBB\xBFuser_id,action,timestamp\nu1,\"a|b c\",1\nu1,T3,2\n", LogFormat::csv);
    REQUIRE(r.size() == 2);
    CHECK(r[0].action == "a\\|b\\sc");
    CHECK(r[1].action == "\\T3");
    CHECK(Token::classify(r[0].action).kind == TokenKind::action);
    CHECK(Token::classify(r[1].action).kind == TokenKind::action);
}

TEST_CASE("escaping round-trips and never produces separators") {
    std::mt19937_64 rng(11);
    const std::string alphabet = "ab|\\ \t\nT31\r";
    for (int i = 0; i < 2000; ++i) {
        std::string label;
        const auto len = 1 + rng() % 8;
        for (std::size_t j = 0; j < len; ++j) label += alphabet[rng() % alphabet.size()];
        const auto enc = escape_action(label);
        CHECK(unescape_action(enc) == label);
        CHECK(enc.find_first_of(" \t\n\r") == std::string::npos);
        CHECK(Token::classify(enc).kind == TokenKind::action);
    }
}

TEST_CASE("min_actions filter") {
    std::vector<EventRecord> recs;
    for (auto& e : user_events("u1", 12)) recs.push_back(e);
    for (auto& e : user_events("u2", 9)) recs.push_back(e);
    for (auto& e : user_events("u3", 10)) recs.push_back(e);
    auto s = build_user_streams(recs, 10);
    REQUIRE(s.size() == 2);
    CHECK(s[0].user_id == "u1");
    CHECK(s[0].events.size() == 12);
    CHECK(s[1].user_id == "u3");
    CHECK(s[1].events.size() == 10);
    CHECK_THROWS_AS(build_user_streams(user_events("u", 3), 10), DataError);
    CHECK_THROWS_AS(build_user_streams(user_events("u", 3), 1), std::invalid_argument);
}

TEST_CASE("streams sort by time and keep input order on ties") {
    std::vector<EventRecord> recs{{"u", "x", 5}, {"u", "y", 1}, {"u", "z", 3}};
    auto s = build_user_streams(recs, 2);
    CHECK(s[0].events[0].timestamp == 1);
    CHECK(s[0].events[1].timestamp == 3);
    CHECK(s[0].events[2].timestamp == 5);

    std::vector<EventRecord> ties{{"u", "first", 7}, {"u", "second", 7}, {"u", "third", 7}};
    s = build_user_streams(ties, 2);
    CHECK(s[0].events[0].action == "first");
    CHECK(s[0].events[1].action == "second");
    CHECK(s[0].events[2].action == "third");
}

TEST_CASE("intervals") {
    UserStream s{"u", {{"u", "a", 0}, {"u", "a", 5}, {"u", "a", 5}, {"u", "a", 65}}};
    CHECK(compute_intervals(s).values == std::vector<double>{5, 0, 60});
    UserStream t{"u", {{"u", "a", 10}, {"u", "a", 10}}};
    CHECK(compute_intervals(t).values == std::vector<double>{0});
}

TEST_CASE("stream building is idempotent and intervals match differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EventRecord> recs;
        const auto n = 20 + rng() % 200;
        for (std::size_t i = 0; i < n; ++i)
            recs.push_back({"u" + std::to_string(rng() % 7), "a" + std::to_string(rng() % 4),
                            static_cast<double>(rng() % 50)});
        std::vector<UserStream> s1;
        try {
            s1 = build_user_streams(recs, 3);
        } catch (const DataError&) {
            continue;
        }
        std::vector<EventRecord> flat;
        for (const auto& s : s1) flat.insert(flat.end(), s.events.begin(), s.events.end());
        CHECK(build_user_streams(flat, 3) == s1);
        for (const auto& s : s1) {
            const auto iv = compute_intervals(s).values;
            REQUIRE(iv.size() == s.events.size() - 1);
            for (std::size_t j = 0; j < iv.size(); ++j) {
                CHECK(iv[j] >= 0.0);
                CHECK(iv[j] == s.events[j + 1].timestamp - s.events[j].timestamp);
            }
        }
    }
}

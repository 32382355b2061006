#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "atc/error.hpp"
#include "atc/sequence.hpp"

using namespace atc;

namespace {

TokenSequence seq_of(std::initializer_list<const char*> words) {
    TokenSequence s;
    for (auto w : words) s.tokens.push_back(Token::classify(w));
    return s;
}

std::vector<std::pair<std::string, std::string>> texts(const std::vector<TrainingPair>& pairs) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : pairs) out.emplace_back(p.word.text, p.context.text);
    return out;
}

UserStream random_stream(std::mt19937_64& rng, std::size_t j) {
    UserStream s{"u", {}};
    double t = 0.0;
    for (std::size_t i = 0; i < j; ++i) {
        if (i) t += (rng() % 4 == 0) ? 0.0 : static_cast<double>(rng() % 5000) / 10.0;
        s.events.push_back({"u", "a" + std::to_string(rng() % 6), t});
    }
    return s;
}

const ExpMixtureModel kModel({0.5, 0.3, 0.2}, {1.0, 0.05, 0.001});

}  // namespace

TEST_CASE("token interleaving") {
    UserStream s{"u", {{"u", "A", 0}, {"u", "B", 2000}, {"u", "C", 2000}}};
    auto seq = build_token_sequence(s, kModel);
    std::vector<std::string> got;
    for (const auto& t : seq.tokens) got.push_back(t.text);
    CHECK(got == std::vector<std::string>{"A", "T3", "B", "T0", "C"});
    CHECK(seq.tokens[1].kind == TokenKind::bin);
}

TEST_CASE("trigrams") {
    auto s = seq_of({"A1", "T1", "A2", "T2", "A3"});
    auto g = extract_trigrams(s);
    REQUIRE(g.size() == 3);
    CHECK(g[0].text == "A1|T1|A2");
    CHECK(g[1].text == "T1|A2|T2");
    CHECK(g[2].text == "A2|T2|A3");
    CHECK(extract_trigrams(seq_of({"A", "T1", "B"})).size() == 1);
    CHECK(extract_trigrams(seq_of({"A"})).empty());
}

TEST_CASE("sequence and trigram counts over random streams") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 300; ++i) {
        const std::size_t j = 2 + rng() % 60;
        auto seq = build_token_sequence(random_stream(rng, j), kModel);
        CHECK(seq.tokens.size() == 2 * j - 1);
        CHECK(extract_trigrams(seq).size() == 2 * j - 3);
        for (std::size_t p = 0; p < seq.tokens.size(); ++p)
            CHECK((seq.tokens[p].kind == TokenKind::action) == (p % 2 == 0));
    }
}

TEST_CASE("pairs for a three-token sequence") {
    auto pairs = texts(generate_training_pairs(seq_of({"A", "T1", "B"})));
    std::vector<std::pair<std::string, std::string>> want{{"A", "T1"}, {"T1", "A"}, {"T1", "B"}, {"B", "T1"}};
    CHECK(pairs == want);
}

TEST_CASE("unit-trigram pairs follow the distance rule") {
    auto pairs = texts(generate_training_pairs(seq_of({"A", "T1", "B", "T2", "C"})));
    auto has = [&](const char* w, const char* c) {
        return std::find(pairs.begin(), pairs.end(), std::pair<std::string, std::string>{w, c}) != pairs.end();
    };
    CHECK(has("A", "B|T2|C"));
    CHECK(has("A", "T1|B|T2"));
    CHECK(has("B|T2|C", "A"));
    CHECK(!has("A", "A|T1|B"));
    CHECK(has("C", "A|T1|B"));
    CHECK(!has("B", "A|T1|B"));

    PairOptions narrow;
    narrow.ngram_window = 1;
    auto p1 = texts(generate_training_pairs(seq_of({"A", "T1", "B", "T2", "C"}), narrow));
    CHECK(std::find(p1.begin(), p1.end(), std::pair<std::string, std::string>{"A", "B|T2|C"}) == p1.end());
    CHECK(std::find(p1.begin(), p1.end(), std::pair<std::string, std::string>{"A", "T1|B|T2"}) != p1.end());
}

// Independent enumeration straight from the rule, compared as multisets.
TEST_CASE("pair enumeration matches a direct oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        auto seq = build_token_sequence(random_stream(rng, 2 + rng() % 15), kModel);
        PairOptions o;
        o.unigram_window = 1 + rng() % 3;
        o.ngram_window = 1 + rng() % 3;
        o.trigram_pairs = rng() % 2;
        const auto& t = seq.tokens;
        const auto tri = extract_trigrams(seq);
        std::multiset<std::pair<std::string, std::string>> want;
        const long n = static_cast<long>(t.size());
        for (long i = 0; i < n; ++i) {
            for (long j = 0; j < n; ++j)
                if (i != j && std::labs(i - j) <= static_cast<long>(o.unigram_window)) want.insert({t[i].text, t[j].text});
            for (long s = 0; s < static_cast<long>(tri.size()); ++s) {
                if (i >= s && i <= s + 2) continue;
                long d = std::min({std::labs(i - s), std::labs(i - s - 1), std::labs(i - s - 2)});
                if (d <= static_cast<long>(o.ngram_window)) {
                    want.insert({t[i].text, tri[s].text});
                    want.insert({tri[s].text, t[i].text});
                }
            }
        }
        if (o.trigram_pairs)
            for (long s = 0; s < static_cast<long>(tri.size()); ++s)
                for (long u = 0; u < static_cast<long>(tri.size()); ++u)
                    if (s != u && std::labs(s - u) <= static_cast<long>(o.ngram_window)) want.insert({tri[s].text, tri[u].text});
        auto got_v = texts(generate_training_pairs(seq, o));
        std::multiset<std::pair<std::string, std::string>> got(got_v.begin(), got_v.end());
        CHECK(got == want);
        CHECK(texts(generate_training_pairs(seq, o)) == got_v);
    }
}

TEST_CASE("unigram pairs are symmetric") {
    std::mt19937_64 rng(4);
    auto seq = build_token_sequence(random_stream(rng, 40), kModel);
    std::multiset<std::pair<std::string, std::string>> uni;
    for (const auto& p : generate_training_pairs(seq))
        if (p.word.kind != TokenKind::trigram && p.context.kind != TokenKind::trigram)
            uni.insert({p.word.text, p.context.text});
    for (const auto& [a, b] : uni) CHECK(uni.count({a, b}) == uni.count({b, a}));
}

TEST_CASE("vocabulary threshold and ordering") {
    std::vector<TokenSequence> seqs{seq_of({"A", "T1", "A", "T1", "A", "T1", "A", "T1", "A", "T2", "B"})};
    auto v = build_vocabulary(seqs, 2);
    CHECK(v.find("A"));
    CHECK(!v.find("B"));
    CHECK(v.token(0).text == "A");
    CHECK(v.count(0) == 5);
    CHECK(v.find("A|T1|A"));

    auto all = build_vocabulary(seqs, 1);
    CHECK(all.find("B"));
    CHECK(all.find("A|T2|B"));
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all.count(i) <= all.count(i - 1));
    CHECK_THROWS_AS(build_vocabulary(seqs, 100), DataError);
}

TEST_CASE("counts add across identical users") {
    auto one = seq_of({"A", "T1", "B", "T2", "A"});
    auto v1 = build_vocabulary({one}, 1);
    auto v3 = build_vocabulary({one, one, one}, 1);
    REQUIRE(v1.size() == v3.size());
    for (std::size_t i = 0; i < v1.size(); ++i) CHECK(v3.count(*v3.find(v1.token(i).text)) == 3 * v1.count(i));
}

TEST_CASE("encoded pairs agree with token pairs") {
    std::mt19937_64 rng(9);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 10; ++i) seqs.push_back(build_token_sequence(random_stream(rng, 30), kModel));
    auto vocab = build_vocabulary(seqs, 1);
    auto ids = encode_training_pairs(seqs, vocab);
    std::vector<IdPair> expect;
    for (const auto& s : seqs)
        for (const auto& p : generate_training_pairs(s))
            expect.push_back({static_cast<std::uint32_t>(*vocab.find(p.word.text)),
                              static_cast<std::uint32_t>(*vocab.find(p.context.text))});
    CHECK(ids == expect);
}

TEST_CASE("corpus round trip and validation") {
    std::vector<TokenSequence> seqs{seq_of({"a\\|b", "T1", "c"}), seq_of({"\\T2"})};
    std::ostringstream out;
    write_corpus(out, seqs);
    CHECK(out.str() == "a\\|b T1 c\n\\T2\n");
    std::istringstream in(out.str());
    auto back = read_corpus(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].tokens == seqs[0].tokens);
    CHECK(back[1].tokens == seqs[1].tokens);

    std::istringstream bad("a T1 T2\n");
    CHECK_THROWS_AS(read_corpus(bad), ParseError);
    std::istringstream bad_end("a\nb T1\n");
    try {
        read_corpus(bad_end);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

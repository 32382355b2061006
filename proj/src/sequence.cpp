#include "atc/sequence.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "atc/error.hpp"

namespace atc {
namespace {

struct Unit {
    bool trigram;
    std::size_t index;  // position for unigrams, start position for trigrams
};

template <class Emit>
void enumerate_pairs(std::size_t len, const PairOptions& o, Emit&& emit) {
    if (o.unigram_window < 1 || o.ngram_window < 1) throw std::invalid_argument("pair windows must be >= 1");
    const std::size_t n_tri = len >= 3 ? len - 2 : 0;
    const std::size_t ng = o.ngram_window;

    for (std::size_t i = 0; i < len; ++i) {
        const std::size_t lo = i >= o.unigram_window ? i - o.unigram_window : 0;
        const std::size_t hi = std::min(len - 1, i + o.unigram_window);
        for (std::size_t j = lo; j <= hi; ++j)
            if (j != i) emit(Unit{false, i}, Unit{false, j});

        if (n_tri == 0) continue;
        // Trigram [s, s+2] excludes i and lies within ng when s+2 < i <= s+2+ng or i < s <= i+ng.
        const std::size_t s_lo = i >= 2 + ng ? i - 2 - ng : 0;
        const std::size_t s_hi = std::min(n_tri - 1, i + ng);
        auto qualifies = [&](std::size_t s) {
            if (s <= i && i <= s + 2) return false;
            const std::size_t dist = s > i ? s - i : i - (s + 2);
            return dist <= ng;
        };
        for (std::size_t s = s_lo; s <= s_hi; ++s)
            if (qualifies(s)) emit(Unit{false, i}, Unit{true, s});
        for (std::size_t s = s_lo; s <= s_hi; ++s)
            if (qualifies(s)) emit(Unit{true, s}, Unit{false, i});
    }

    if (o.trigram_pairs) {
        for (std::size_t s = 0; s < n_tri; ++s) {
            const std::size_t lo = s >= ng ? s - ng : 0;
            const std::size_t hi = std::min(n_tri - 1, s + ng);
            for (std::size_t t = lo; t <= hi; ++t)
                if (t != s) emit(Unit{true, s}, Unit{true, t});
        }
    }
}

bool has_unescaped_bar(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\\') {
            ++i;
            continue;
        }
        if (text[i] == '|') return true;
    }
    return false;
}

bool is_bin_text(std::string_view s) {
    return s.size() >= 2 && s[0] == 'T' &&
           std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Token Token::classify(std::string_view text) {
    if (has_unescaped_bar(text)) return {TokenKind::trigram, std::string(text)};
    if (is_bin_text(text)) return {TokenKind::bin, std::string(text)};
    return {TokenKind::action, std::string(text)};
}

Vocabulary::Vocabulary(std::vector<Token> tokens, std::vector<std::uint64_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
    if (tokens_.size() != counts_.size()) throw std::invalid_argument("vocabulary tokens and counts differ in size");
    for (std::size_t id = 0; id < tokens_.size(); ++id)
        if (!index_.emplace(tokens_[id].text, id).second)
            throw std::invalid_argument("duplicate vocabulary token: " + tokens_[id].text);
}

std::optional<std::size_t> Vocabulary::find(std::string_view text) const {
    auto it = index_.find(std::string(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

TokenSequence build_token_sequence(const UserStream& stream, const ExpMixtureModel& model) {
    TokenSequence seq;
    seq.user_id = stream.user_id;
    const auto& ev = stream.events;
    if (ev.empty()) return seq;
    seq.tokens.reserve(2 * ev.size() - 1);
    for (std::size_t j = 0; j < ev.size(); ++j) {
        if (j > 0) seq.tokens.push_back(Token::bin(assign_bin(model, ev[j].timestamp - ev[j - 1].timestamp)));
        seq.tokens.push_back(Token::action(ev[j].action));
    }
    return seq;
}

std::vector<Token> extract_trigrams(const TokenSequence& seq) {
    std::vector<Token> out;
    const auto& t = seq.tokens;
    if (t.size() < 3) return out;
    out.reserve(t.size() - 2);
    for (std::size_t s = 0; s + 2 < t.size(); ++s) out.push_back(Token::trigram(t[s], t[s + 1], t[s + 2]));
    return out;
}

std::vector<TrainingPair> generate_training_pairs(const TokenSequence& seq, const PairOptions& options) {
    const auto trigrams = extract_trigrams(seq);
    std::vector<TrainingPair> out;
    auto resolve = [&](Unit u) -> const Token& { return u.trigram ? trigrams[u.index] : seq.tokens[u.index]; };
    enumerate_pairs(seq.tokens.size(), options,
                    [&](Unit w, Unit c) { out.push_back(TrainingPair{resolve(w), resolve(c)}); });
    return out;
}

Vocabulary build_vocabulary(const std::vector<TokenSequence>& sequences, std::uint64_t min_count) {
    if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
    std::unordered_map<std::string, std::pair<TokenKind, std::uint64_t>> counts;
    for (const auto& seq : sequences) {
        for (const auto& t : seq.tokens) {
            auto& slot = counts.try_emplace(t.text, t.kind, 0).first->second;
            ++slot.second;
        }
        for (auto& g : extract_trigrams(seq)) {
            auto& slot = counts.try_emplace(std::move(g.text), TokenKind::trigram, 0).first->second;
            ++slot.second;
        }
    }
    std::vector<std::pair<Token, std::uint64_t>> kept;
    for (auto& [text, kc] : counts)
        if (kc.second >= min_count) kept.push_back({Token{kc.first, text}, kc.second});
    if (kept.empty())
        throw DataError("empty vocabulary: no token occurs at least " + std::to_string(min_count) + " times");

    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first.text < b.first.text;
    });
    std::vector<Token> tokens;
    std::vector<std::uint64_t> c;
    for (auto& [t, n] : kept) {
        tokens.push_back(std::move(t));
        c.push_back(n);
    }
    return Vocabulary(std::move(tokens), std::move(c));
}

std::vector<IdPair> encode_training_pairs(const std::vector<TokenSequence>& sequences, const Vocabulary& vocab,
                                          const PairOptions& options) {
    constexpr std::uint32_t kMissing = UINT32_MAX;
    std::vector<IdPair> out;
    std::vector<std::uint32_t> uni, tri;
    auto lookup = [&](std::string_view text) {
        auto id = vocab.find(text);
        return id ? static_cast<std::uint32_t>(*id) : kMissing;
    };
    for (const auto& seq : sequences) {
        uni.clear();
        tri.clear();
        for (const auto& t : seq.tokens) uni.push_back(lookup(t.text));
        for (const auto& g : extract_trigrams(seq)) tri.push_back(lookup(g.text));
        enumerate_pairs(seq.tokens.size(), options, [&](Unit w, Unit c) {
            auto wid = w.trigram ? tri[w.index] : uni[w.index];
            auto cid = c.trigram ? tri[c.index] : uni[c.index];
            if (wid != kMissing && cid != kMissing) out.push_back(IdPair{wid, cid});
        });
    }
    return out;
}

void write_corpus(std::ostream& out, const std::vector<TokenSequence>& sequences) {
    for (const auto& seq : sequences) {
        if (seq.tokens.empty()) continue;
        for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
            if (i) out << ' ';
            out << seq.tokens[i].text;
        }
        out << '\n';
    }
}

std::vector<TokenSequence> read_corpus(std::istream& in) {
    std::vector<TokenSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        TokenSequence seq;
        seq.user_id = std::to_string(line_no);
        std::istringstream words(line);
        std::string w;
        while (words >> w) {
            auto t = Token::classify(w);
            const bool expect_action = seq.tokens.size() % 2 == 0;
            if (t.kind == TokenKind::trigram || (t.kind == TokenKind::action) != expect_action)
                throw ParseError(line_no, "token " + std::to_string(seq.tokens.size() + 1),
                                 "corpus lines must alternate action and bin tokens");
            seq.tokens.push_back(std::move(t));
        }
        if (seq.tokens.size() % 2 == 0)
            throw ParseError(line_no, "token " + std::to_string(seq.tokens.size()), "sequence must end with an action");
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace atc

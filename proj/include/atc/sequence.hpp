#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atc/events.hpp"
#include "atc/mixture.hpp"

namespace atc {

enum class TokenKind { action, bin, trigram };

struct Token {
    TokenKind kind = TokenKind::action;
    std::string text;

    static Token action(std::string escaped_label) { return {TokenKind::action, std::move(escaped_label)}; }
    static Token bin(BinLabel label) { return {TokenKind::bin, label.token()}; }
    static Token trigram(const Token& a, const Token& b, const Token& c) {
        return {TokenKind::trigram, a.text + '|' + b.text + '|' + c.text};
    }

    /// Recovers the kind from canonical text: an unescaped `|` marks a trigram,
    /// `T<digits>` a bin, anything else an (escaped) action.
    static Token classify(std::string_view text);

    friend bool operator==(const Token&, const Token&) = default;
};

/// A1 T1 A2 T2 ... AJ for one user; 2J-1 tokens.
struct TokenSequence {
    std::string user_id;
    std::vector<Token> tokens;
};

struct TrainingPair {
    Token word;
    Token context;

    friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

struct PairOptions {
    std::size_t unigram_window = 1;
    std::size_t ngram_window = 2;
    bool trigram_pairs = false;  // also pair trigrams whose starts differ by 1..ngram_window
};

/// Dense ids ordered by descending corpus count, then text. One table serves
/// both the word and the context role.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<Token> tokens, std::vector<std::uint64_t> counts);

    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const Token& token(std::size_t id) const { return tokens_.at(id); }
    std::uint64_t count(std::size_t id) const { return counts_.at(id); }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
    std::optional<std::size_t> find(std::string_view text) const;

private:
    std::vector<Token> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Compact pair for training: word id and context id in the vocabulary.
struct IdPair {
    std::uint32_t word;
    std::uint32_t context;

    friend bool operator==(IdPair, IdPair) = default;
};

inline constexpr std::uint64_t kDefaultMinCount = 5;

TokenSequence build_token_sequence(const UserStream& stream, const ExpMixtureModel& model);

/// All 2J-3 sliding triples, in order. Empty for sequences shorter than 3.
std::vector<Token> extract_trigrams(const TokenSequence& seq);

/// Pairs for every center position i, in this order:
///   unigram contexts j with 0 < |i-j| <= unigram_window;
///   (unit i, trigram g) for trigrams not covering i whose nearest member is
///   within ngram_window of i, by trigram start;
///   the mirrored (trigram g, unit i) pairs in the same order.
/// With `trigram_pairs`, trigram-trigram pairs follow the per-center pairs.
std::vector<TrainingPair> generate_training_pairs(const TokenSequence& seq, const PairOptions& options = {});

/// Counts unigrams and trigrams over the corpus and keeps those with count >= min_count.
/// Throws DataError if nothing survives.
Vocabulary build_vocabulary(const std::vector<TokenSequence>& sequences, std::uint64_t min_count = kDefaultMinCount);

/// Same enumeration as generate_training_pairs over all sequences, dropping
/// pairs with an out-of-vocabulary side.
std::vector<IdPair> encode_training_pairs(const std::vector<TokenSequence>& sequences, const Vocabulary& vocab,
                                          const PairOptions& options = {});

// Corpus file: one sequence per line, tokens separated by single spaces.
void write_corpus(std::ostream& out, const std::vector<TokenSequence>& sequences);
std::vector<TokenSequence> read_corpus(std::istream& in);

}  // namespace atc

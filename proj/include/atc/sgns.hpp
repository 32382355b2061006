#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atc/sequence.hpp"

namespace atc {

/// Word (v_w) and context (v_c) vectors for every vocabulary token, row-major.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::vector<Token> tokens, std::size_t dim);

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    std::optional<std::size_t> find(std::string_view text) const;

    std::span<double> word(std::size_t id) { return {words_.data() + id * dim_, dim_}; }
    std::span<const double> word(std::size_t id) const { return {words_.data() + id * dim_, dim_}; }
    std::span<double> context(std::size_t id) { return {contexts_.data() + id * dim_, dim_}; }
    std::span<const double> context(std::size_t id) const { return {contexts_.data() + id * dim_, dim_}; }

    std::vector<double>& word_data() noexcept { return words_; }
    const std::vector<double>& word_data() const noexcept { return words_; }
    std::vector<double>& context_data() noexcept { return contexts_; }
    const std::vector<double>& context_data() const noexcept { return contexts_; }

    /// First non-finite entry as (token id, is_context), if any.
    std::optional<std::pair<std::size_t, bool>> find_non_finite() const;

private:
    std::vector<Token> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
    std::vector<double> words_;
    std::vector<double> contexts_;
};

/// q(t) proportional to count(t)^alpha over the context vocabulary.
class NoiseDistribution {
public:
    NoiseDistribution() = default;
    NoiseDistribution(const Vocabulary& vocab, double alpha);

    double alpha() const noexcept { return alpha_; }
    const std::vector<double>& probabilities() const noexcept { return probs_; }

    /// Inverse-CDF draw from a 64-bit engine; const and safe to share across threads.
    std::uint32_t sample(std::mt19937_64& rng) const;

private:
    double alpha_ = 0.75;
    std::vector<double> probs_;
    std::vector<double> cdf_;
};

NoiseDistribution build_noise_distribution(const Vocabulary& vocab, double alpha = 0.75);

struct TrainConfig {
    std::size_t dim = 300;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
    double alpha = 0.75;
    std::uint64_t seed = 1;
    std::size_t threads = 1;  // > 1 trains lock-free and is not reproducible
};

/// Gradient of log s(w.c) + sum_j log s(-w.n_j) with respect to every input.
struct PairGradient {
    std::vector<double> word;
    std::vector<double> context;
    std::vector<std::vector<double>> negatives;
};

double sigmoid(double x) noexcept;

/// Value of the per-pair objective.
double pair_objective(std::span<const double> word, std::span<const double> context,
                      std::span<const std::span<const double>> negatives);

PairGradient pair_gradient(std::span<const double> word, std::span<const double> context,
                           std::span<const std::span<const double>> negatives);

/// One ascent step, lr times the gradient, applied in place. All gradients use
/// the values before the step, so negatives may repeat or coincide with the
/// context row. Returns the objective before the step.
double pair_gradient_step(std::span<double> word, std::span<double> context,
                          std::span<const std::span<double>> negatives, double lr);

struct TrainStats {
    std::vector<double> epoch_loss;  // mean negative objective per pair, one entry per epoch
    std::size_t pairs = 0;
};

/// SGNS over the pair stream. Words start uniform in [-0.5/d, 0.5/d], contexts
/// at zero; the learning rate decays linearly to 1e-4 of its start. Pair order
/// is reshuffled each epoch from the seed. Throws NumericalError on NaN/Inf.
EmbeddingTable train(const std::vector<IdPair>& pairs, const Vocabulary& vocab, const TrainConfig& config,
                     TrainStats* stats = nullptr);

// Embedding file: `V d` header, then one `token v1 ... vd` line per token in id order.
void write_embeddings(std::ostream& out, const EmbeddingTable& table, bool context_vectors = false);
EmbeddingTable read_embeddings(std::istream& in);

}  // namespace atc

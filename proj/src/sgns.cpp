#include "atc/sgns.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "atc/error.hpp"
#include "atc/seed.hpp"

namespace atc {
namespace {

double log_sigmoid(double x) noexcept {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Core update shared by the single-threaded path (table rows) and the
// lock-free path (thread-local copies).
double apply_step(std::span<double> w, std::span<double> c, std::span<const std::span<double>> negs, double lr,
                  std::vector<double>& coeff) {
    const double pos = dot(w, c);
    double objective = log_sigmoid(pos);
    const double g_pos = 1.0 - sigmoid(pos);
    coeff.resize(negs.size());
    for (std::size_t j = 0; j < negs.size(); ++j) {
        const double s = dot(w, negs[j]);
        objective += log_sigmoid(-s);
        coeff[j] = -sigmoid(s);
    }
    for (std::size_t d = 0; d < w.size(); ++d) {
        const double w_old = w[d];
        double grad_w = g_pos * c[d];
        for (std::size_t j = 0; j < negs.size(); ++j) grad_w += coeff[j] * negs[j][d];
        c[d] += lr * g_pos * w_old;
        for (std::size_t j = 0; j < negs.size(); ++j) negs[j][d] += lr * coeff[j] * w_old;
        w[d] += lr * grad_w;
    }
    return objective;
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void check_finite(const EmbeddingTable& table, std::size_t epoch) {
    if (auto bad = table.find_non_finite())
        throw NumericalError("non-finite " + std::string(bad->second ? "context" : "word") +
                             " vector entry for token `" + table.tokens()[bad->first].text + "` after epoch " +
                             std::to_string(epoch + 1));
}

}  // namespace

// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::vector<Token> tokens, std::size_t dim)
    : tokens_(std::move(tokens)), dim_(dim), words_(tokens_.size() * dim, 0.0), contexts_(tokens_.size() * dim, 0.0) {
    if (dim == 0) throw std::invalid_argument("embedding dimension must be >= 1");
    for (std::size_t id = 0; id < tokens_.size(); ++id)
        if (!index_.emplace(tokens_[id].text, id).second)
            throw std::invalid_argument("duplicate embedding token: " + tokens_[id].text);
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view text) const {
    auto it = index_.find(std::string(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::pair<std::size_t, bool>> EmbeddingTable::find_non_finite() const {
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (!std::isfinite(words_[i])) return std::pair{i / dim_, false};
    for (std::size_t i = 0; i < contexts_.size(); ++i)
        if (!std::isfinite(contexts_[i])) return std::pair{i / dim_, true};
    return std::nullopt;
}

NoiseDistribution::NoiseDistribution(const Vocabulary& vocab, double alpha) : alpha_(alpha) {
    if (vocab.empty()) throw DataError("cannot build a noise distribution over an empty vocabulary");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("noise exponent must lie in [0, 1]");
    probs_.reserve(vocab.size());
    double total = 0.0;
    for (auto c : vocab.counts()) {
        probs_.push_back(std::pow(static_cast<double>(c), alpha));
        total += probs_.back();
    }
    double run = 0.0;
    for (auto& p : probs_) {
        p /= total;
        run += p;
        cdf_.push_back(run);
    }
}

std::uint32_t NoiseDistribution::sample(std::mt19937_64& rng) const {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<std::uint32_t>(it - cdf_.begin());
}

NoiseDistribution build_noise_distribution(const Vocabulary& vocab, double alpha) {
    return NoiseDistribution(vocab, alpha);
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double pair_objective(std::span<const double> word, std::span<const double> context,
                      std::span<const std::span<const double>> negatives) {
    double v = log_sigmoid(dot(word, context));
    for (auto n : negatives) v += log_sigmoid(-dot(word, n));
    return v;
}

PairGradient pair_gradient(std::span<const double> word, std::span<const double> context,
                           std::span<const std::span<const double>> negatives) {
    PairGradient g;
    const double g_pos = 1.0 - sigmoid(dot(word, context));
    g.word.assign(word.size(), 0.0);
    g.context.resize(word.size());
    for (std::size_t d = 0; d < word.size(); ++d) {
        g.word[d] = g_pos * context[d];
        g.context[d] = g_pos * word[d];
    }
    for (auto n : negatives) {
        const double s = sigmoid(dot(word, n));
        std::vector<double> gn(word.size());
        for (std::size_t d = 0; d < word.size(); ++d) {
            g.word[d] -= s * n[d];
            gn[d] = -s * word[d];
        }
        g.negatives.push_back(std::move(gn));
    }
    return g;
}

double pair_gradient_step(std::span<double> word, std::span<double> context,
                          std::span<const std::span<double>> negatives, double lr) {
    std::vector<double> coeff;
    return apply_step(word, context, negatives, lr, coeff);
}

EmbeddingTable train(const std::vector<IdPair>& pairs, const Vocabulary& vocab, const TrainConfig& config,
                     TrainStats* stats) {
    if (config.dim < 1) throw std::invalid_argument("dimension must be >= 1");
    if (config.negatives < 1) throw std::invalid_argument("negative sample count must be >= 1");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    const NoiseDistribution noise(vocab, config.alpha);
    for (const auto& p : pairs)
        if (p.word >= vocab.size() || p.context >= vocab.size())
            throw std::invalid_argument("training pair refers to an id outside the vocabulary");

    EmbeddingTable table(vocab.tokens(), config.dim);
    {
        std::mt19937_64 rng(derive_seed(config.seed, "sgns-init"));
        const double d = static_cast<double>(config.dim);
        for (auto& v : table.word_data()) v = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) / d;
    }
    if (stats) {
        stats->pairs = pairs.size();
        stats->epoch_loss.clear();
    }
    if (config.epochs == 0 || pairs.empty()) return table;

    const std::size_t dim = config.dim;
    const std::size_t k = config.negatives;
    const double total = static_cast<double>(pairs.size()) * static_cast<double>(config.epochs);
    const double lr0 = config.learning_rate;
    auto rate_at = [&](double done) { return lr0 * std::max(1e-4, 1.0 - done / total); };

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto draw_negative = [&](std::mt19937_64& rng, std::uint32_t positive) {
        auto n = noise.sample(rng);
        if (n == positive) n = noise.sample(rng);  // one retry, then accept
        return n;
    };

    const std::size_t threads = std::max<std::size_t>(config.threads, 1);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        {
            std::mt19937_64 shuffle_rng(derive_seed(config.seed, "sgns-shuffle", epoch));
            std::shuffle(order.begin(), order.end(), shuffle_rng);
        }
        const double base = static_cast<double>(epoch) * static_cast<double>(pairs.size());
        double epoch_objective = 0.0;

        if (threads == 1) {
            std::mt19937_64 rng(derive_seed(config.seed, "sgns-negatives", epoch));
            std::vector<std::span<double>> negs(k);
            std::vector<double> coeff;
            for (std::size_t t = 0; t < order.size(); ++t) {
                const auto& p = pairs[order[t]];
                for (std::size_t j = 0; j < k; ++j) negs[j] = table.context(draw_negative(rng, p.context));
                const double obj = apply_step(table.word(p.word), table.context(p.context), negs,
                                              rate_at(base + static_cast<double>(t)), coeff);
                if (!std::isfinite(obj))
                    throw NumericalError("non-finite objective at epoch " + std::to_string(epoch + 1) + ", pair " +
                                         std::to_string(t));
                epoch_objective += obj;
            }
        } else {
            // Lock-free workers: rows are copied in and written back with relaxed
            // atomics, so concurrent updates to one row may be lost.
            std::vector<double> partial(threads, 0.0);
            std::vector<std::thread> workers;
            const std::size_t chunk = (order.size() + threads - 1) / threads;
            for (std::size_t w = 0; w < threads; ++w) {
                workers.emplace_back([&, w] {
                    std::mt19937_64 rng(derive_seed(config.seed, "sgns-negatives", epoch * 1024 + w));
                    const std::size_t begin = std::min(order.size(), w * chunk);
                    const std::size_t end = std::min(order.size(), begin + chunk);
                    std::vector<double> buf((2 + k) * dim);
                    std::vector<double*> rows(2 + k);
                    std::vector<std::span<double>> negs(k);
                    std::vector<double> coeff;
                    for (std::size_t t = begin; t < end; ++t) {
                        const auto& p = pairs[order[t]];
                        rows[0] = table.word(p.word).data();
                        rows[1] = table.context(p.context).data();
                        for (std::size_t j = 0; j < k; ++j)
                            rows[2 + j] = table.context(draw_negative(rng, p.context)).data();
                        for (std::size_t r = 0; r < rows.size(); ++r)
                            for (std::size_t d = 0; d < dim; ++d)
                                buf[r * dim + d] = std::atomic_ref<double>(rows[r][d]).load(std::memory_order_relaxed);
                        for (std::size_t j = 0; j < k; ++j) negs[j] = {buf.data() + (2 + j) * dim, dim};
                        const double done = base + static_cast<double>((t - begin) * threads + w);
                        partial[w] += apply_step({buf.data(), dim}, {buf.data() + dim, dim}, negs, rate_at(done), coeff);
                        for (std::size_t r = 0; r < rows.size(); ++r)
                            for (std::size_t d = 0; d < dim; ++d)
                                std::atomic_ref<double>(rows[r][d]).store(buf[r * dim + d], std::memory_order_relaxed);
                    }
                });
            }
            for (auto& t : workers) t.join();
            for (double v : partial) epoch_objective += v;
        }

        check_finite(table, epoch);
        if (stats) stats->epoch_loss.push_back(-epoch_objective / static_cast<double>(pairs.size()));
    }
    return table;
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table, bool context_vectors) {
    out << table.size() << ' ' << table.dim() << '\n';
    std::string line;
    for (std::size_t id = 0; id < table.size(); ++id) {
        line = table.tokens()[id].text;
        auto row = context_vectors ? table.context(id) : table.word(id);
        for (double v : row) {
            line.push_back(' ');
            line += format_double(v);
        }
        line.push_back('\n');
        out << line;
    }
}

EmbeddingTable read_embeddings(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "header", "missing `V d` header");
    std::size_t v = 0, d = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> v >> d) || d == 0) throw ParseError(1, "header", "expected `V d`");
    }
    std::vector<Token> tokens;
    std::vector<double> values;
    values.reserve(v * d);
    for (std::size_t i = 0; i < v; ++i) {
        const std::size_t line_no = i + 2;
        if (!std::getline(in, line)) throw ParseError(line_no, "token", "file ends before " + std::to_string(v) + " rows");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok.empty()) throw ParseError(line_no, "token", "empty token");
        tokens.push_back(Token::classify(tok));
        std::string num;
        for (std::size_t j = 0; j < d; ++j) {
            if (!(ls >> num)) throw ParseError(line_no, "value " + std::to_string(j + 1), "missing value");
            double x = 0.0;
            auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), x);
            if (ec != std::errc() || ptr != num.data() + num.size())
                throw ParseError(line_no, "value " + std::to_string(j + 1), "not a number: " + num);
            values.push_back(x);
        }
        if (ls >> num) throw ParseError(line_no, "record", "more than " + std::to_string(d) + " values");
    }
    EmbeddingTable table(std::move(tokens), d);
    table.word_data() = std::move(values);
    return table;
}

}  // namespace atc

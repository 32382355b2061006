#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atc/events.hpp"

namespace atc {

/// Mixture of exponentials, f(x) = sum_k w_k * r_k * exp(-r_k * x).
/// Components are kept in ascending-mean (descending-rate) order so that bin
/// T1 is always the shortest-mean component and TK the longest.
class ExpMixtureModel {
public:
    ExpMixtureModel() = default;

    /// Validates and sorts the components. Throws std::invalid_argument if a
    /// weight is negative, a rate is not positive, or the weights do not sum to 1.
    ExpMixtureModel(std::vector<double> weights, std::vector<double> rates);

    std::size_t k() const noexcept { return rates_.size(); }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& rates() const noexcept { return rates_; }
    double mean(std::size_t component) const { return 1.0 / rates_.at(component); }
    std::vector<double> means() const;

    /// log(w_k) + log(r_k) - r_k * x
    double log_joint(std::size_t component, double x) const noexcept {
        return log_weight_rate_[component] - rates_[component] * x;
    }

    /// Mixture log-density at x > 0.
    double log_density(double x) const;
    double log_likelihood(std::span<const double> data) const;

private:
    std::vector<double> weights_;
    std::vector<double> rates_;
    std::vector<double> log_weight_rate_;
};

/// n x K membership probabilities, row-major.
class ResponsibilityMatrix {
public:
    ResponsibilityMatrix() = default;
    ResponsibilityMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t i, std::size_t k) { return data_[i * cols_ + k]; }
    double operator()(std::size_t i, std::size_t k) const { return data_[i * cols_ + k]; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    /// Index of the largest entry of row i; the lowest index wins ties.
    std::size_t argmax(std::size_t i) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Time-bin label: 0 is the zero-interval bin, 1..K the mixture components.
struct BinLabel {
    std::size_t index = 0;

    std::string token() const { return "T" + std::to_string(index); }
    static BinLabel parse(std::string_view token);

    friend bool operator==(BinLabel, BinLabel) = default;
    friend auto operator<=>(BinLabel, BinLabel) = default;
};

enum class Criterion { dnml_approx, bic };

Criterion parse_criterion(std::string_view name);
std::string_view to_string(Criterion c);

struct FitDiagnostics {
    std::size_t iterations = 0;
    double log_likelihood = 0.0;
    std::size_t restart = 0;  // restart index that produced the returned fit
    bool converged = false;
    std::vector<double> trace;                     // log-likelihood per iteration, chosen restart
    std::vector<std::vector<double>> restart_traces;
    std::vector<std::string> warnings;

    // Filled by select_model.
    Criterion criterion = Criterion::dnml_approx;
    std::map<std::size_t, double> codelengths;
    std::map<std::size_t, double> dnml_codelengths;
    std::map<std::size_t, double> bic_codelengths;
};

struct EmOptions {
    std::size_t k = 2;
    std::uint64_t seed = 0;
    double tol = 1e-8;  // relative log-likelihood change
    std::size_t max_iter = 500;
    std::size_t restarts = 10;
    std::size_t threads = 1;  // restarts run concurrently when > 1; results do not depend on it
};

struct MixtureFit {
    ExpMixtureModel model;
    ResponsibilityMatrix gamma;
    FitDiagnostics diagnostics;
};

inline constexpr std::size_t kDefaultSampleSize = 10'000;

/// Drops zero intervals, then draws `n` values uniformly without replacement
/// (or keeps all positives when there are fewer). Deterministic in `seed`.
IntervalSample sample_intervals(const IntervalSample& sample, std::size_t n, std::uint64_t seed);

/// Membership probabilities under `model` plus the data log-likelihood.
ResponsibilityMatrix e_step(const ExpMixtureModel& model, std::span<const double> data,
                            double* log_likelihood = nullptr);

/// Weights are mean responsibilities, component means are
/// responsibility-weighted data means, rates their reciprocals.
/// Components whose mass is below 1e-12 are dropped.
ExpMixtureModel m_step(std::span<const double> data, const ResponsibilityMatrix& gamma);

/// EM with `restarts` quantile-seeded starts; the best final log-likelihood wins.
MixtureFit fit_em(std::span<const double> data, const EmOptions& options);

/// Stochastic complexity of a multinomial with `k` categories over `n` draws,
/// computed with the linear-time recurrence. Returns the natural log.
double log_multinomial_complexity(std::size_t n, std::size_t k);

/// Codelength in nats (dnml_approx) or the BIC score (bic). Lower is better.
double codelength(const ExpMixtureModel& model, std::span<const double> data,
                  const ResponsibilityMatrix& gamma, Criterion criterion);

struct SelectOptions {
    std::size_t k_min = 1;
    std::size_t k_max = 8;
    Criterion criterion = Criterion::dnml_approx;
    EmOptions em;  // `k` is ignored
};

/// Fits every K in [k_min, k_max] and keeps the one with the smallest codelength.
MixtureFit select_model(std::span<const double> data, const SelectOptions& options);

/// T0 for x == 0, otherwise the component with the largest w_k r_k exp(-r_k x).
/// Throws std::invalid_argument for negative or non-finite x.
BinLabel assign_bin(const ExpMixtureModel& model, double x);

// Model file (JSON).
std::string model_to_json(const ExpMixtureModel& model, const FitDiagnostics& diagnostics,
                          const std::string& config_hash = {});
ExpMixtureModel model_from_json(std::string_view text);

}  // namespace atc

#include "atc/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "atc/error.hpp"
#include "atc/seed.hpp"

namespace atc {
namespace {

constexpr double kDegenerateMass = 1e-12;

// Neumaier compensated sum; keeps the log-likelihood trace accurate well
// below the monotonicity slack.
class CompensatedSum {
public:
    void add(double v) noexcept {
        double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
        else comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

void check_data(std::span<const double> data) {
    if (data.empty()) throw std::invalid_argument("EM needs at least one interval");
    for (double x : data)
        if (!(x > 0.0) || !std::isfinite(x))
            throw std::invalid_argument("EM data must be finite and strictly positive");
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct RunResult {
    std::vector<double> weights;
    std::vector<double> rates;
    std::vector<double> trace;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// One EM run. Each pass evaluates the log-likelihood of the current parameters
// and accumulates the sufficient statistics of the next M-step in one sweep.
RunResult run_em(std::span<const double> data, std::vector<double> weights, std::vector<double> rates,
                 double tol, std::size_t max_iter) {
    RunResult out;
    const double n = static_cast<double>(data.size());
    std::vector<double> lwr, a, mass, weighted;

    for (std::size_t t = 0;; ++t) {
        const std::size_t k = rates.size();
        lwr.resize(k);
        a.resize(k);
        mass.assign(k, 0.0);
        weighted.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) lwr[c] = std::log(weights[c]) + std::log(rates[c]);

        CompensatedSum ll;
        for (double x : data) {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                a[c] = lwr[c] - rates[c] * x;
                m = std::max(m, a[c]);
            }
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                a[c] = std::exp(a[c] - m);
                s += a[c];
            }
            ll.add(m + std::log(s));
            const double inv = 1.0 / s;
            for (std::size_t c = 0; c < k; ++c) {
                const double g = a[c] * inv;
                mass[c] += g;
                weighted[c] += g * x;
            }
        }
        const double cur = ll.value();
        if (!std::isfinite(cur)) throw NumericalError("EM log-likelihood became non-finite");
        out.trace.push_back(cur);

        if (out.trace.size() >= 2) {
            const double prev = out.trace[out.trace.size() - 2];
            if (std::abs(cur - prev) <= tol * std::abs(prev)) {
                out.converged = true;
                break;
            }
        }
        if (t == max_iter) break;

        std::vector<double> nw, nr;
        for (std::size_t c = 0; c < k; ++c) {
            if (mass[c] < kDegenerateMass) {
                out.warnings.push_back("component with rate " + std::to_string(rates[c]) +
                                       " lost all responsibility mass and was dropped");
                continue;
            }
            nw.push_back(mass[c] / n);
            nr.push_back(mass[c] / weighted[c]);
        }
        const double total = std::accumulate(nw.begin(), nw.end(), 0.0);
        for (auto& w : nw) w /= total;
        weights = std::move(nw);
        rates = std::move(nr);
        ++out.iterations;
    }
    out.weights = std::move(weights);
    out.rates = std::move(rates);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExpMixtureModel

ExpMixtureModel::ExpMixtureModel(std::vector<double> weights, std::vector<double> rates) {
    if (weights.empty() || weights.size() != rates.size())
        throw std::invalid_argument("mixture needs matching, non-empty weight and rate lists");
    double total = 0.0;
    for (std::size_t c = 0; c < rates.size(); ++c) {
        if (!(weights[c] >= 0.0) || !std::isfinite(weights[c]))
            throw std::invalid_argument("mixture weights must be finite and non-negative");
        if (!(rates[c] > 0.0) || !std::isfinite(rates[c]))
            throw std::invalid_argument("mixture rates must be finite and positive");
        total += weights[c];
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");

    std::vector<std::size_t> order(rates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (rates[x] != rates[y]) return rates[x] > rates[y];
        return weights[x] > weights[y];
    });
    for (auto c : order) {
        weights_.push_back(weights[c]);
        rates_.push_back(rates[c]);
        log_weight_rate_.push_back(std::log(weights[c]) + std::log(rates[c]));
    }
}

std::vector<double> ExpMixtureModel::means() const {
    std::vector<double> out;
    for (double r : rates_) out.push_back(1.0 / r);
    return out;
}

double ExpMixtureModel::log_density(double x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k(); ++c) m = std::max(m, log_joint(c, x));
    double s = 0.0;
    for (std::size_t c = 0; c < k(); ++c) s += std::exp(log_joint(c, x) - m);
    return m + std::log(s);
}

double ExpMixtureModel::log_likelihood(std::span<const double> data) const {
    CompensatedSum sum;
    for (double x : data) sum.add(log_density(x));
    return sum.value();
}

// ---------------------------------------------------------------------------

std::size_t ResponsibilityMatrix::argmax(std::size_t i) const {
    auto r = row(i);
    return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

BinLabel BinLabel::parse(std::string_view token) {
    if (token.size() < 2 || token[0] != 'T') throw std::invalid_argument("not a bin token: " + std::string(token));
    std::size_t v = 0;
    for (char c : token.substr(1)) {
        if (c < '0' || c > '9') throw std::invalid_argument("not a bin token: " + std::string(token));
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return BinLabel{v};
}

Criterion parse_criterion(std::string_view name) {
    if (name == "dnml_approx" || name == "dnml") return Criterion::dnml_approx;
    if (name == "bic") return Criterion::bic;
    throw UsageError("unknown criterion `" + std::string(name) + "` (expected dnml_approx or bic)");
}

std::string_view to_string(Criterion c) { return c == Criterion::bic ? "bic" : "dnml_approx"; }

IntervalSample sample_intervals(const IntervalSample& sample, std::size_t n, std::uint64_t seed) {
    if (sample.values.empty()) throw DataError("no intervals to sample from");
    if (n == 0) throw std::invalid_argument("sample size must be positive");
    std::vector<double> positive;
    positive.reserve(sample.values.size());
    for (double x : sample.values) {
        if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("intervals must be finite and non-negative");
        if (x > 0.0) positive.push_back(x);
    }
    if (positive.empty()) throw DataError("no positive intervals to estimate the mixture from");
    if (positive.size() <= n) return IntervalSample{std::move(positive)};

    IntervalSample out;
    out.values.reserve(n);
    std::mt19937_64 rng(seed);
    std::sample(positive.begin(), positive.end(), std::back_inserter(out.values), n, rng);
    return out;
}

ResponsibilityMatrix e_step(const ExpMixtureModel& model, std::span<const double> data, double* log_likelihood) {
    const std::size_t k = model.k();
    ResponsibilityMatrix gamma(data.size(), k);
    CompensatedSum ll;
    std::vector<double> a(k);
    for (std::size_t i = 0; i < data.size(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            a[c] = model.log_joint(c, data[i]);
            m = std::max(m, a[c]);
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            a[c] = std::exp(a[c] - m);
            s += a[c];
        }
        ll.add(m + std::log(s));
        for (std::size_t c = 0; c < k; ++c) gamma(i, c) = a[c] / s;
    }
    if (log_likelihood) *log_likelihood = ll.value();
    return gamma;
}

ExpMixtureModel m_step(std::span<const double> data, const ResponsibilityMatrix& gamma) {
    if (gamma.rows() != data.size()) throw std::invalid_argument("responsibility rows must match the data");
    std::vector<double> mass(gamma.cols(), 0.0), weighted(gamma.cols(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t c = 0; c < gamma.cols(); ++c) {
            mass[c] += gamma(i, c);
            weighted[c] += gamma(i, c) * data[i];
        }
    std::vector<double> w, r;
    for (std::size_t c = 0; c < gamma.cols(); ++c) {
        if (mass[c] < kDegenerateMass) continue;
        w.push_back(mass[c] / static_cast<double>(data.size()));
        r.push_back(mass[c] / weighted[c]);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    return ExpMixtureModel(std::move(w), std::move(r));
}

MixtureFit fit_em(std::span<const double> data, const EmOptions& options) {
    check_data(data);
    if (options.k < 1) throw std::invalid_argument("K must be at least 1");
    if (!(options.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
    const std::size_t k = options.k;

    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());

    auto start = [&](std::size_t r) {
        std::vector<double> rates(k);
        std::mt19937_64 rng(derive_seed(options.seed, "em-restart", r));
        std::uniform_real_distribution<double> jitter(0.1, 0.9);
        for (std::size_t c = 0; c < k; ++c) {
            double u = r == 0 ? 0.5 : jitter(rng);
            rates[c] = 1.0 / quantile_sorted(sorted, (static_cast<double>(c) + u) / static_cast<double>(k));
        }
        return run_em(data, std::vector<double>(k, 1.0 / static_cast<double>(k)), std::move(rates), options.tol,
                      options.max_iter);
    };

    std::vector<RunResult> runs(restarts);
    if (options.threads > 1) {
        for (std::size_t base = 0; base < restarts; base += options.threads) {
            std::vector<std::future<RunResult>> batch;
            for (std::size_t r = base; r < std::min(restarts, base + options.threads); ++r)
                batch.push_back(std::async(std::launch::async, start, r));
            for (std::size_t j = 0; j < batch.size(); ++j) runs[base + j] = batch[j].get();
        }
    } else {
        for (std::size_t r = 0; r < restarts; ++r) runs[r] = start(r);
    }

    std::size_t best = 0;
    for (std::size_t r = 1; r < restarts; ++r)
        if (runs[r].trace.back() > runs[best].trace.back()) best = r;

    MixtureFit fit;
    fit.model = ExpMixtureModel(runs[best].weights, runs[best].rates);
    fit.gamma = e_step(fit.model, data, &fit.diagnostics.log_likelihood);
    auto& d = fit.diagnostics;
    d.iterations = runs[best].iterations;
    d.restart = best;
    d.converged = runs[best].converged;
    d.trace = runs[best].trace;
    d.warnings = runs[best].warnings;
    for (auto& run : runs) d.restart_traces.push_back(std::move(run.trace));
    return fit;
}

double log_multinomial_complexity(std::size_t n, std::size_t k) {
    if (k == 0) throw std::invalid_argument("multinomial needs at least one category");
    if (n == 0 || k == 1) return 0.0;

    // Binary case summed directly; larger k by C(n, j+2) = C(n, j+1) + n/j * C(n, j).
    const double nd = static_cast<double>(n);
    const double lgn = std::lgamma(nd + 1.0);
    long double c2 = 0.0L;
    for (std::size_t h = 0; h <= n; ++h) {
        const double hd = static_cast<double>(h);
        const double rest = nd - hd;
        double lt = lgn - std::lgamma(hd + 1.0) - std::lgamma(rest + 1.0);
        if (h > 0) lt += hd * std::log(hd / nd);
        if (h < n) lt += rest * std::log(rest / nd);
        c2 += std::exp(static_cast<long double>(lt));
    }
    long double prev = 1.0L, cur = c2;
    for (std::size_t j = 1; j + 2 <= k; ++j) {
        long double next = cur + static_cast<long double>(nd) / static_cast<long double>(j) * prev;
        prev = cur;
        cur = next;
    }
    return static_cast<double>(std::log(cur));
}

double codelength(const ExpMixtureModel& model, std::span<const double> data, const ResponsibilityMatrix& gamma,
                  Criterion criterion) {
    check_data(data);
    const double n = static_cast<double>(data.size());
    const std::size_t k = model.k();

    if (criterion == Criterion::bic) {
        const double params = 2.0 * static_cast<double>(k) - 1.0;
        return -2.0 * model.log_likelihood(data) + params * std::log(n);
    }

    if (gamma.rows() != data.size() || gamma.cols() != k)
        throw std::invalid_argument("responsibility matrix does not match model and data");

    std::vector<double> count(k, 0.0), sum(k, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto z = gamma.argmax(i);
        count[z] += 1.0;
        sum[z] += data[i];
    }
    auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    // Fisher-information volume of the rate over [1/max, 1/min]; floored at 0 for a narrow range.
    const double log_range = std::log(*hi / *lo);
    const double range_term = log_range > 1.0 ? std::log(log_range) : 0.0;
    // Clusters with fewer than two points pay the full-sample parametric penalty
    // instead of a negative one.
    const double small_cluster_half_log = 0.5 * std::log(n / (2.0 * std::numbers::pi));

    double assignments = log_multinomial_complexity(data.size(), k);
    double given = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] == 0.0) continue;
        assignments -= count[c] * std::log(count[c] / n);
        const double mean = sum[c] / count[c];
        given += count[c] * (1.0 + std::log(mean));
        given += (count[c] >= 2.0 ? 0.5 * std::log(count[c] / (2.0 * std::numbers::pi)) : small_cluster_half_log);
        given += range_term;
    }
    return given + assignments;
}

MixtureFit select_model(std::span<const double> data, const SelectOptions& options) {
    if (options.k_min < 1 || options.k_max < options.k_min) throw std::invalid_argument("empty K range");
    MixtureFit best;
    double best_len = std::numeric_limits<double>::infinity();
    std::map<std::size_t, double> dnml, bic;
    std::vector<std::string> warnings;

    for (std::size_t k = options.k_min; k <= options.k_max; ++k) {
        EmOptions em = options.em;
        em.k = k;
        auto fit = fit_em(data, em);
        dnml[k] = codelength(fit.model, data, fit.gamma, Criterion::dnml_approx);
        bic[k] = codelength(fit.model, data, fit.gamma, Criterion::bic);
        for (auto& w : fit.diagnostics.warnings) warnings.push_back("K=" + std::to_string(k) + ": " + w);
        const double len = options.criterion == Criterion::bic ? bic[k] : dnml[k];
        if (len < best_len) {
            best_len = len;
            best = std::move(fit);
        }
    }
    auto& d = best.diagnostics;
    d.criterion = options.criterion;
    d.dnml_codelengths = dnml;
    d.bic_codelengths = bic;
    d.codelengths = options.criterion == Criterion::bic ? bic : dnml;
    d.warnings = std::move(warnings);
    return best;
}

BinLabel assign_bin(const ExpMixtureModel& model, double x) {
    if (!std::isfinite(x) || x < 0.0) throw std::invalid_argument("interval must be finite and non-negative");
    if (x == 0.0) return BinLabel{0};
    std::size_t best = 0;
    double best_score = model.log_joint(0, x);
    for (std::size_t c = 1; c < model.k(); ++c) {
        double s = model.log_joint(c, x);
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return BinLabel{best + 1};
}

std::string model_to_json(const ExpMixtureModel& model, const FitDiagnostics& diagnostics,
                          const std::string& config_hash) {
    nlohmann::ordered_json j;
    j["k"] = model.k();
    j["weights"] = model.weights();
    j["rates"] = model.rates();
    j["bin_means"] = model.means();
    j["criterion"] = std::string(to_string(diagnostics.criterion));
    nlohmann::ordered_json lengths = nlohmann::ordered_json::object();
    for (const auto& [k, v] : diagnostics.codelengths) lengths[std::to_string(k)] = v;
    j["codelengths"] = lengths;
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    return j.dump(2) + "\n";
}

ExpMixtureModel model_from_json(std::string_view text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("model file is not a JSON object");
    try {
        auto weights = j.at("weights").get<std::vector<double>>();
        auto rates = j.at("rates").get<std::vector<double>>();
        if (j.contains("k") && j.at("k").get<std::size_t>() != rates.size())
            throw DataError("model file: `k` does not match the number of rates");
        double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-9) throw DataError("model file: weights do not sum to 1");
        return ExpMixtureModel(std::move(weights), std::move(rates));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
}

}  // namespace atc

#include "atc/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "atc/csv.hpp"
#include "atc/error.hpp"
#include "atc/seed.hpp"

namespace atc {
namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::vector<std::string> action_tokens(const EmbeddingTable& emb) {
    std::vector<std::string> out;
    for (const auto& t : emb.tokens())
        if (t.kind == TokenKind::action) out.push_back(t.text);
    return out;
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, field, "not a number: `" + s + "`");
    return v;
}

}  // namespace

std::string format_number(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double cosine(std::span<const double> a, std::span<const double> b, std::string_view label_a,
              std::string_view label_b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors with different dimensions");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0) throw DataError("zero-norm vector for `" + std::string(label_a) + "`");
    if (bb == 0.0) throw DataError("zero-norm vector for `" + std::string(label_b) + "`");
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

ReferenceVector reference_vector(const EmbeddingTable& emb, BinLabel bin, const std::vector<std::string>& actions) {
    ReferenceVector ref;
    ref.bin = bin;
    ref.vector.assign(emb.dim(), 0.0);
    const std::string b = bin.token();
    for (const auto& a : actions) {
        auto id = emb.find(b + '|' + a + '|' + b);
        if (!id) continue;
        auto v = emb.word(*id);
        for (std::size_t d = 0; d < v.size(); ++d) ref.vector[d] += v[d];
        ++ref.members;
    }
    if (ref.members == 0) throw DataError("empty reference set: no `" + b + "|A|" + b + "` trigram in the vocabulary");
    for (auto& x : ref.vector) x /= static_cast<double>(ref.members);
    return ref;
}

AtcScore action_atc(const EmbeddingTable& emb, std::string_view action, const ReferenceVector& v_long,
                    const ReferenceVector& v_short) {
    auto id = emb.find(action);
    if (!id || emb.tokens()[*id].kind != TokenKind::action) {
        auto known = action_tokens(emb);
        std::stable_sort(known.begin(), known.end(), [&](const std::string& x, const std::string& y) {
            return edit_distance(action, x) < edit_distance(action, y);
        });
        std::string hint;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, known.size()); ++i) hint += (i ? ", " : "") + known[i];
        throw DataError("unknown action `" + std::string(action) + "`" + (hint.empty() ? "" : "; closest: " + hint));
    }
    const auto a = emb.word(*id);
    AtcScore s;
    s.action = std::string(action);
    s.r = cosine(v_long.vector, a, v_long.bin.token() + " reference", action) -
          cosine(v_short.vector, a, v_short.bin.token() + " reference", action);
    return s;
}

AtcReport compute_atc(const EmbeddingTable& emb, const ExpMixtureModel& model, const AtcOptions& options,
                      const Vocabulary* vocab) {
    const BinLabel long_bin = options.long_bin.value_or(BinLabel{model.k()});
    const BinLabel short_bin = options.short_bin.value_or(BinLabel{1});
    if (long_bin.index > model.k() || short_bin.index > model.k())
        throw std::invalid_argument("reference bin exceeds the number of mixture components");
    if (long_bin == short_bin) throw std::invalid_argument("long and short reference bins must differ");

    const auto actions = action_tokens(emb);
    const auto v_long = reference_vector(emb, long_bin, actions);
    const auto v_short = reference_vector(emb, short_bin, actions);

    AtcReport report;
    for (const auto& a : actions) {
        auto s = action_atc(emb, a, v_long, v_short);
        if (vocab) {
            if (auto id = vocab->find(a)) s.occurrences = vocab->count(*id);
        }
        report.scores.push_back(std::move(s));
    }
    report.metadata["long_bin"] = long_bin.token();
    report.metadata["short_bin"] = short_bin.token();
    report.metadata["long_reference_members"] = std::to_string(v_long.members);
    report.metadata["short_reference_members"] = std::to_string(v_short.members);
    report.metadata["actions"] = std::to_string(report.scores.size());
    return report;
}

void standardize(std::vector<AtcScore>& scores, const std::vector<std::string>& groups) {
    if (!groups.empty() && groups.size() != scores.size())
        throw std::invalid_argument("group keys must be parallel to the scores");
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < scores.size(); ++i) members[groups.empty() ? std::string("all") : groups[i]].push_back(i);

    for (const auto& [group, idx] : members) {
        if (idx.size() < 2) throw DataError("group `" + group + "` has fewer than two scores to standardize");
        double mean = 0.0;
        for (auto i : idx) mean += scores[i].r;
        mean /= static_cast<double>(idx.size());
        double var = 0.0;
        for (auto i : idx) var += (scores[i].r - mean) * (scores[i].r - mean);
        var /= static_cast<double>(idx.size());
        if (!(var > 0.0)) throw DataError("group `" + group + "` has zero variance");
        const double sd = std::sqrt(var);
        for (auto i : idx) scores[i].r_std = (scores[i].r - mean) / sd;
    }
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile of an empty sample");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<CategoryCi> category_mean_ci(const std::vector<AtcScore>& scores,
                                         const std::map<std::string, std::string>& category_of,
                                         const CategoryOptions& options, std::vector<std::string>* warnings) {
    if (options.resamples < 100) throw std::invalid_argument("bootstrap needs at least 100 resamples");
    if (!(options.level > 0.0 && options.level < 1.0)) throw std::invalid_argument("CI level must lie in (0, 1)");

    std::map<std::string, std::vector<double>> values;
    for (const auto& [action, category] : category_of) values.try_emplace(category);
    for (const auto& s : scores) {
        auto it = category_of.find(s.action);
        if (it != category_of.end()) values[it->second].push_back(s.r_std.value_or(s.r));
    }

    std::vector<CategoryCi> out;
    std::vector<double> means(options.resamples);
    for (const auto& [category, v] : values) {
        if (v.empty()) {
            if (warnings) warnings->push_back("category `" + category + "` has no scored actions; omitted");
            continue;
        }
        CategoryCi row;
        row.category = category;
        row.n_actions = v.size();
        double sum = 0.0;
        for (double x : v) sum += x;
        row.mean = sum / static_cast<double>(v.size());

        const std::uint64_t cat_seed = derive_seed(options.seed, category);
        for (std::size_t b = 0; b < options.resamples; ++b) {
            std::mt19937_64 rng(derive_seed(cat_seed, "bootstrap", b));
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += v[rng() % v.size()];
            means[b] = s / static_cast<double>(v.size());
        }
        std::sort(means.begin(), means.end());
        row.ci_low = percentile_sorted(means, (1.0 - options.level) / 2.0);
        row.ci_high = percentile_sorted(means, (1.0 + options.level) / 2.0);
        out.push_back(row);
    }
    return out;
}

CohortDiff cohort_diff(const AtcReport& a, const AtcReport& b, std::string label_a, std::string label_b) {
    auto index = [](const AtcReport& r, const std::string& label) {
        std::map<std::string, double> m;
        for (const auto& s : r.scores) {
            if (!s.r_std) throw DataError("cohort `" + label + "` report is not standardized");
            m[s.action] = *s.r_std;
        }
        return m;
    };
    const auto ma = index(a, label_a);
    const auto mb = index(b, label_b);

    CohortDiff out;
    out.label_a = std::move(label_a);
    out.label_b = std::move(label_b);
    for (const auto& [action, va] : ma) {
        auto it = mb.find(action);
        if (it == mb.end()) {
            out.only_in_a.push_back(action);
            continue;
        }
        out.rows.push_back(CohortDiffRow{action, va, it->second, va - it->second});
    }
    for (const auto& [action, vb] : mb)
        if (!ma.contains(action)) out.only_in_b.push_back(action);
    if (out.rows.empty()) throw DataError("cohorts share no actions");
    return out;
}

std::vector<std::vector<EventRecord>> split_windows(const std::vector<EventRecord>& records, double width,
                                                    double* t0_out) {
    if (records.empty()) throw DataError("no events to split into windows");
    if (!(width > 0.0) || !std::isfinite(width)) throw std::invalid_argument("window width must be positive");

    double t0 = records.front().timestamp, t1 = t0;
    for (const auto& r : records) {
        t0 = std::min(t0, r.timestamp);
        t1 = std::max(t1, r.timestamp);
    }
    const auto count = static_cast<std::size_t>(std::floor((t1 - t0) / width)) + 1;
    std::vector<std::vector<EventRecord>> parts(count);
    for (const auto& r : records) {
        auto w = static_cast<std::size_t>(std::floor((r.timestamp - t0) / width));
        parts[std::min(w, count - 1)].push_back(r);
    }
    if (t0_out) *t0_out = t0;
    return parts;
}

std::vector<WindowReport> windowed_atc(const std::vector<EventRecord>& records, const ExpMixtureModel& model,
                                       const WindowedConfig& config) {
    double t0 = 0.0;
    auto parts = split_windows(records, config.window_seconds, &t0);
    const std::size_t count = parts.size();

    std::vector<WindowReport> out;
    for (std::size_t w = 0; w < count; ++w) {
        WindowReport wr;
        wr.index = w;
        wr.start = t0 + static_cast<double>(w) * config.window_seconds;
        try {
            auto streams = build_user_streams(std::move(parts[w]), config.min_actions);
            ExpMixtureModel local = model;
            if (config.refit) {
                auto sample = sample_intervals(pool_intervals(streams), config.sample_size, config.sample_seed);
                local = select_model(sample.values, config.selection).model;
            }
            std::vector<TokenSequence> seqs;
            for (const auto& s : streams) seqs.push_back(build_token_sequence(s, local));
            auto vocab = build_vocabulary(seqs, config.min_count);
            auto pairs = encode_training_pairs(seqs, vocab, config.pairs);
            auto emb = train(pairs, vocab, config.train);
            auto report = compute_atc(emb, local, config.atc, &vocab);
            standardize(report.scores);
            report.metadata["scope"] = "window " + std::to_string(w);
            report.metadata["standardization"] = "window";
            wr.report = std::move(report);
        } catch (const DataError& e) {
            wr.warning = std::string("window ") + std::to_string(w) + " skipped: " + e.what();
        }
        out.push_back(std::move(wr));
    }
    return out;
}

LinearFit pearson_linreg(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("series lengths differ");
    if (x.size() < 3) throw DataError("correlation needs at least three points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("correlation undefined for a zero-variance series");

    LinearFit fit;
    fit.n = x.size();
    fit.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double df = n - 2.0;
    if (std::abs(fit.r) >= 1.0) {
        fit.p_value = 0.0;
    } else {
        const double t = fit.r * std::sqrt(df / (1.0 - fit.r * fit.r));
        boost::math::students_t dist(df);
        fit.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
    }
    return fit;
}

std::string atc_report_csv(const AtcReport& report) {
    std::string out = "token,r,r_std,occurrences\n";
    for (const auto& s : report.scores)
        out += csv::join({s.action, format_number(s.r), s.r_std ? format_number(*s.r_std) : std::string(),
                          std::to_string(s.occurrences)}) +
               '\n';
    return out;
}

AtcReport read_atc_report_csv(std::string_view text) {
    AtcReport report;
    for (const auto& row : csv::read_table(text, {"token", "r", "r_std", "occurrences"})) {
        AtcScore s;
        s.action = row.fields[0];
        s.r = parse_double(row.fields[1], row.line, "r");
        if (!row.fields[2].empty()) s.r_std = parse_double(row.fields[2], row.line, "r_std");
        const auto& occ = row.fields[3];
        auto [ptr, ec] = std::from_chars(occ.data(), occ.data() + occ.size(), s.occurrences);
        if (ec != std::errc() || ptr != occ.data() + occ.size())
            throw ParseError(row.line, "occurrences", "not a count: `" + occ + "`");
        report.scores.push_back(std::move(s));
    }
    return report;
}

std::string cohort_diff_csv(const CohortDiff& diff) {
    std::string out = "token,r_std_a,r_std_b,diff\n";
    for (const auto& r : diff.rows)
        out += csv::join({r.action, format_number(r.r_std_a), format_number(r.r_std_b), format_number(r.diff)}) + '\n';
    return out;
}

std::string category_csv(const std::vector<CategoryCi>& rows) {
    std::string out = "category,mean,ci_low,ci_high,n_actions\n";
    for (const auto& r : rows)
        out += csv::join({r.category, format_number(r.mean), format_number(r.ci_low), format_number(r.ci_high),
                          std::to_string(r.n_actions)}) +
               '\n';
    return out;
}

std::map<std::string, std::string> read_category_map_csv(std::string_view text) {
    std::map<std::string, std::string> out;
    for (const auto& row : csv::read_table(text, {"action", "category"})) {
        if (row.fields[0].empty()) throw ParseError(row.line, "action", "empty action label");
        out[escape_action(row.fields[0])] = row.fields[1];
    }
    return out;
}

std::map<std::size_t, double> read_covariate_csv(std::string_view text) {
    std::map<std::size_t, double> out;
    for (const auto& row : csv::read_table(text, {"window_index", "value"})) {
        std::size_t w = 0;
        const auto& f = row.fields[0];
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), w);
        if (ec != std::errc() || ptr != f.data() + f.size())
            throw ParseError(row.line, "window_index", "not a window index: `" + f + "`");
        if (!out.emplace(w, parse_double(row.fields[1], row.line, "value")).second)
            throw ParseError(row.line, "window_index", "duplicate window index");
    }
    return out;
}

}  // namespace atc

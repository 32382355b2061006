#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atc/events.hpp"
#include "atc/mixture.hpp"
#include "atc/sequence.hpp"
#include "atc/sgns.hpp"

namespace atc {

/// a.b / (|a| |b|). Throws DataError naming `label_a`/`label_b` on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b, std::string_view label_a = "a",
              std::string_view label_b = "b");

/// Mean word vector of the trigrams `bin|A|bin` present in the table.
struct ReferenceVector {
    BinLabel bin;
    std::vector<double> vector;
    std::size_t members = 0;
};

ReferenceVector reference_vector(const EmbeddingTable& emb, BinLabel bin, const std::vector<std::string>& actions);

struct AtcScore {
    std::string action;  // escaped action token
    double r = 0.0;
    std::optional<double> r_std;
    std::uint64_t occurrences = 0;
};

struct AtcReport {
    std::vector<AtcScore> scores;
    std::map<std::string, std::string> metadata;
};

/// cos(v_long, a) - cos(v_short, a). Unknown actions raise DataError listing
/// the closest known labels.
AtcScore action_atc(const EmbeddingTable& emb, std::string_view action, const ReferenceVector& v_long,
                    const ReferenceVector& v_short);

struct AtcOptions {
    std::optional<BinLabel> long_bin;   // default: TK
    std::optional<BinLabel> short_bin;  // default: T1
};

/// Scores every action token of the table, in table (vocabulary id) order.
/// Occurrence counts come from `vocab` when given.
AtcReport compute_atc(const EmbeddingTable& emb, const ExpMixtureModel& model, const AtcOptions& options = {},
                      const Vocabulary* vocab = nullptr);

/// z-scores within each group using the population standard deviation.
/// `groups` is parallel to `scores`; empty means a single group.
void standardize(std::vector<AtcScore>& scores, const std::vector<std::string>& groups = {});

struct CategoryCi {
    std::string category;
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_actions = 0;
};

struct CategoryOptions {
    std::size_t resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

/// Percentile-bootstrap CI of the mean standardized score (raw r when
/// unstandardized) per category, ordered by category name. Categories named in
/// the map without any scored action are skipped and reported in `warnings`.
std::vector<CategoryCi> category_mean_ci(const std::vector<AtcScore>& scores,
                                         const std::map<std::string, std::string>& category_of,
                                         const CategoryOptions& options = {},
                                         std::vector<std::string>* warnings = nullptr);

/// Linear-interpolation percentile of sorted data, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

struct CohortDiffRow {
    std::string action;
    double r_std_a = 0.0;
    double r_std_b = 0.0;
    double diff = 0.0;  // a - b
};

struct CohortDiff {
    std::string label_a;
    std::string label_b;
    std::vector<CohortDiffRow> rows;  // by action
    std::vector<std::string> only_in_a;
    std::vector<std::string> only_in_b;
};

CohortDiff cohort_diff(const AtcReport& a, const AtcReport& b, std::string label_a = "a", std::string label_b = "b");

struct WindowedConfig {
    double window_seconds = 7.0 * 86400.0;
    std::size_t min_actions = kDefaultMinActions;
    std::uint64_t min_count = kDefaultMinCount;
    PairOptions pairs;
    TrainConfig train;
    AtcOptions atc;
    // Per-window refitting of the mixture instead of reusing the global one.
    bool refit = false;
    SelectOptions selection;
    std::size_t sample_size = kDefaultSampleSize;
    std::uint64_t sample_seed = 0;
};

struct WindowReport {
    std::size_t index = 0;
    double start = 0.0;  // window covers [start, start + width)
    std::optional<AtcReport> report;
    std::string warning;
};

/// Partitions events into half-open windows [t0 + i*width, t0 + (i+1)*width)
/// where t0 is the earliest timestamp (returned through `t0`).
std::vector<std::vector<EventRecord>> split_windows(const std::vector<EventRecord>& records, double width,
                                                    double* t0 = nullptr);

/// Splits events into fixed-width windows from the earliest timestamp and runs
/// corpus building, training and ATC per window with the given mixture.
/// Windows without usable data come back empty with a warning.
std::vector<WindowReport> windowed_atc(const std::vector<EventRecord>& records, const ExpMixtureModel& model,
                                       const WindowedConfig& config);

struct LinearFit {
    std::size_t n = 0;
    double r = 0.0;
    double p_value = 1.0;  // two-sided, t test with n-2 degrees of freedom
    double slope = 0.0;
    double intercept = 0.0;
};

LinearFit pearson_linreg(std::span<const double> x, std::span<const double> y);

// CSV interfaces.
std::string atc_report_csv(const AtcReport& report);
AtcReport read_atc_report_csv(std::string_view text);
std::string cohort_diff_csv(const CohortDiff& diff);
std::string category_csv(const std::vector<CategoryCi>& rows);
std::map<std::string, std::string> read_category_map_csv(std::string_view text);
std::map<std::size_t, double> read_covariate_csv(std::string_view text);

std::string format_number(double v);

}  // namespace atc

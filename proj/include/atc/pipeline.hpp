#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atc/analysis.hpp"
#include "atc/error.hpp"
#include "atc/events.hpp"
#include "atc/mixture.hpp"
#include "atc/sgns.hpp"

namespace atc {

/// Every knob of a batch run. Defaults here are the recorded defaults.
struct PipelineConfig {
    // ingest
    std::string input;
    std::string format = "csv";
    std::size_t min_actions = kDefaultMinActions;
    std::string out_dir = "out";

    // fit-mixture
    std::size_t sample_size = kDefaultSampleSize;
    std::size_t k_min = 1;
    std::size_t k_max = 8;
    std::string criterion = "dnml_approx";
    double em_tol = 1e-8;
    std::size_t em_max_iter = 500;
    std::size_t em_restarts = 10;

    // build-corpus / train
    std::size_t unigram_window = 1;
    std::size_t ngram_window = 2;
    bool trigram_pairs = false;
    std::uint64_t min_count = kDefaultMinCount;
    std::size_t dim = 300;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
    double alpha = 0.75;
    bool save_context = false;

    // atc and follow-up analyses
    std::string long_bin;   // empty: TK
    std::string short_bin;  // empty: T1
    std::string category_map;
    std::size_t bootstrap_resamples = 1000;
    double ci_level = 0.95;
    std::string atc_a;
    std::string atc_b;
    std::string label_a = "a";
    std::string label_b = "b";
    double window_days = 7.0;
    bool refit_windows = false;
    std::string covariate;
    std::string token;

    // synth
    std::size_t synth_users = 200;
    std::size_t synth_length = 500;
    std::string synth_actions = "L:1000,S:1";

    // global
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    bool deterministic = false;
};

struct ConfigField {
    std::string key;  // config-file key; the flag is `--` + key with `_` replaced by `-`
    std::string help;
    std::function<void(PipelineConfig&, std::string_view)> set;  // throws UsageError on a bad value
    std::function<std::string(const PipelineConfig&)> get;
};

/// The field table, sorted by key.
const std::vector<ConfigField>& config_fields();

void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const PipelineConfig& config, std::string_view key);

/// Applies `key = value` lines on top of `config`. `#` starts a comment line;
/// blank lines are ignored. Unknown keys are usage errors.
void apply_config_text(PipelineConfig& config, std::string_view text);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

/// All fields as `key = value` lines in key order; feeding the text back
/// through apply_config_text reproduces the config.
std::string serialize_config(const PipelineConfig& config);

/// SHA-256 of the serialized config without `out_dir`, lowercase hex.
std::string config_hash(const PipelineConfig& config);

std::string sha256_hex(std::string_view bytes);

/// Failure inside a named stage. `exit_code` follows the CLI convention:
/// 1 usage, 2 data, 3 numerical.
class StageError : public Error {
public:
    StageError(std::string stage, int exit_code, const std::string& what)
        : Error("stage " + stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}

    const std::string& stage() const noexcept { return stage_; }
    int exit_code() const noexcept { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

/// Exit code for an exception escaping a stage.
int exit_code_for(const std::exception& e) noexcept;

/// Artifact file names inside `out_dir`.
namespace artifact {
inline constexpr const char* model = "model.json";
inline constexpr const char* corpus = "corpus.txt";
inline constexpr const char* embeddings = "embeddings.txt";
inline constexpr const char* context_embeddings = "embeddings.ctx.txt";
inline constexpr const char* atc = "atc.csv";
inline constexpr const char* atc_meta = "atc.csv.meta.json";
inline constexpr const char* categories = "categories.csv";
inline constexpr const char* diff = "diff.csv";
inline constexpr const char* diff_meta = "diff.csv.meta.json";
inline constexpr const char* dynamics = "dynamics.csv";
inline constexpr const char* correlation = "correlation.csv";
inline constexpr const char* synthetic = "synthetic.csv";
inline constexpr const char* config = "config.txt";
inline constexpr const char* manifest = "run.json";
}  // namespace artifact

/// Writes `content` to `path.partial`, then renames it over `path`.
void write_artifact(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

struct StageResult {
    std::vector<std::filesystem::path> artifacts;
    std::vector<std::string> warnings;
    std::vector<std::string> notes;  // progress lines for the log
};

// Each stage reads its inputs from disk (the previous stage's artifacts in
// `out_dir`), writes its own artifacts and refreshes config.txt and run.json.
StageResult run_fit_mixture(const PipelineConfig& config);
StageResult run_build_corpus(const PipelineConfig& config);
StageResult run_train(const PipelineConfig& config);
StageResult run_atc(const PipelineConfig& config);
StageResult run_categories(const PipelineConfig& config);
StageResult run_diff(const PipelineConfig& config);
StageResult run_dynamics(const PipelineConfig& config);
StageResult run_correlate(const PipelineConfig& config);
StageResult run_synth(const PipelineConfig& config);

/// fit-mixture, build-corpus, train, atc.
StageResult run_pipeline(const PipelineConfig& config);

struct PlantedAction {
    std::string label;
    double mean_interval = 1.0;  // seconds
};

struct SyntheticSpec {
    std::size_t users = 200;
    std::size_t length = 500;  // actions per user
    std::vector<PlantedAction> actions;
    std::uint64_t seed = 1;
};

/// "L:1000,S:1" -> {{"L", 1000}, {"S", 1}}.
std::vector<PlantedAction> parse_planted_actions(std::string_view text);

/// Event-log CSV (`user_id,action,timestamp`). Actions are drawn uniformly;
/// the gap between consecutive actions a, b is exponential with mean
/// sqrt(m_a * m_b), so an action whose own mean is long sits between long gaps
/// when it repeats. Needs at least two actions with distinct means.
std::string generate_synthetic(const SyntheticSpec& spec);

}  // namespace atc

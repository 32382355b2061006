#include "atc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <system_error>

#include <openssl/evp.h>

#include <json.hpp>

#include "atc/csv.hpp"
#include "atc/seed.hpp"
#include "atc/sequence.hpp"

namespace atc {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        throw UsageError("`" + std::string(key) + "` expects a non-negative integer, got `" + std::string(v) + "`");
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw UsageError("`" + std::string(key) + "` expects a number, got `" + std::string(v) + "`");
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("`" + std::string(key) + "` expects true or false, got `" + std::string(v) + "`");
}

template <class T>
ConfigField field(std::string key, std::string help, T PipelineConfig::*member) {
    ConfigField f;
    f.key = key;
    f.help = std::move(help);
    f.set = [key, member](PipelineConfig& c, std::string_view v) {
        if constexpr (std::is_same_v<T, std::string>)
            c.*member = std::string(v);
        else if constexpr (std::is_same_v<T, bool>)
            c.*member = parse_bool(key, v);
        else if constexpr (std::is_same_v<T, double>)
            c.*member = parse_real(key, v);
        else
            c.*member = static_cast<T>(parse_unsigned(key, v));
    };
    f.get = [member](const PipelineConfig& c) -> std::string {
        if constexpr (std::is_same_v<T, std::string>)
            return c.*member;
        else if constexpr (std::is_same_v<T, bool>)
            return c.*member ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>)
            return format_number(c.*member);
        else
            return std::to_string(c.*member);
    };
    return f;
}

std::vector<ConfigField> make_fields() {
    using C = PipelineConfig;
    std::vector<ConfigField> f{
        field("input", "event log path", &C::input),
        field("format", "event log format: csv or jsonl", &C::format),
        field("min_actions", "drop users with fewer actions", &C::min_actions),
        field("out_dir", "artifact directory", &C::out_dir),
        field("sample_size", "intervals sampled for the mixture fit", &C::sample_size),
        field("k_min", "smallest mixture size tried", &C::k_min),
        field("k_max", "largest mixture size tried", &C::k_max),
        field("criterion", "model selection: dnml_approx or bic", &C::criterion),
        field("em_tol", "relative log-likelihood tolerance", &C::em_tol),
        field("em_max_iter", "EM iteration cap per restart", &C::em_max_iter),
        field("em_restarts", "EM restarts per K", &C::em_restarts),
        field("unigram_window", "unigram context window", &C::unigram_window),
        field("ngram_window", "trigram context window", &C::ngram_window),
        field("trigram_pairs", "also pair trigrams with trigrams", &C::trigram_pairs),
        field("min_count", "vocabulary count threshold", &C::min_count),
        field("dim", "embedding dimension", &C::dim),
        field("negatives", "negative samples per pair", &C::negatives),
        field("epochs", "training epochs", &C::epochs),
        field("learning_rate", "initial learning rate", &C::learning_rate),
        field("alpha", "noise distribution exponent", &C::alpha),
        field("save_context", "also write context vectors", &C::save_context),
        field("long_bin", "long reference bin (default TK)", &C::long_bin),
        field("short_bin", "short reference bin (default T1)", &C::short_bin),
        field("category_map", "CSV action,category", &C::category_map),
        field("bootstrap_resamples", "bootstrap resamples", &C::bootstrap_resamples),
        field("ci_level", "confidence level", &C::ci_level),
        field("atc_a", "first cohort ATC report", &C::atc_a),
        field("atc_b", "second cohort ATC report", &C::atc_b),
        field("label_a", "first cohort label", &C::label_a),
        field("label_b", "second cohort label", &C::label_b),
        field("window_days", "dynamics window width in days", &C::window_days),
        field("refit_windows", "refit the mixture in every window", &C::refit_windows),
        field("covariate", "CSV window_index,value", &C::covariate),
        field("token", "action to correlate (default: all)", &C::token),
        field("synth_users", "synthetic users", &C::synth_users),
        field("synth_length", "synthetic actions per user", &C::synth_length),
        field("synth_actions", "planted actions, label:mean,...", &C::synth_actions),
        field("seed", "root seed", &C::seed),
        field("threads", "worker threads", &C::threads),
        field("deterministic", "force single-threaded reproducible runs", &C::deterministic),
    };
    std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return f;
}

const ConfigField& find_field(std::string_view key) {
    const auto& f = config_fields();
    auto it = std::lower_bound(f.begin(), f.end(), key, [](const ConfigField& x, std::string_view k) { return x.key < k; });
    if (it == f.end() || it->key != key) throw UsageError("unknown config key `" + std::string(key) + "`");
    return *it;
}

template <class F>
auto in_stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, exit_code_for(e), e.what());
    }
}

void append(StageResult& into, StageResult from) {
    for (auto& p : from.artifacts)
        if (std::find(into.artifacts.begin(), into.artifacts.end(), p) == into.artifacts.end())
            into.artifacts.push_back(std::move(p));
    for (auto& w : from.warnings) into.warnings.push_back(std::move(w));
    for (auto& n : from.notes) into.notes.push_back(std::move(n));
}

fs::path out_path(const PipelineConfig& c, const char* name) { return fs::path(c.out_dir) / name; }

std::size_t worker_threads(const PipelineConfig& c) {
    if (c.threads == 0) throw UsageError("threads must be at least 1");
    return c.deterministic ? 1 : c.threads;
}

std::vector<EventRecord> ingest_records(const PipelineConfig& c) {
    if (c.input.empty()) throw UsageError("no input event log given (--input)");
    const auto format = parse_log_format(c.format);
    return parse_event_log(read_file(c.input), format);
}

std::vector<UserStream> ingest(const PipelineConfig& c) {
    return in_stage("ingest", [&] {
        if (c.min_actions < 2) throw UsageError("min_actions must be at least 2");
        return build_user_streams(ingest_records(c), c.min_actions);
    });
}

ExpMixtureModel load_model(const PipelineConfig& c) { return model_from_json(read_file(out_path(c, artifact::model))); }

std::vector<TokenSequence> load_corpus(const PipelineConfig& c) {
    std::istringstream in(read_file(out_path(c, artifact::corpus)));
    auto seqs = read_corpus(in);
    if (seqs.empty()) throw DataError("corpus is empty");
    return seqs;
}

PairOptions pair_options(const PipelineConfig& c) {
    PairOptions p;
    p.unigram_window = c.unigram_window;
    p.ngram_window = c.ngram_window;
    p.trigram_pairs = c.trigram_pairs;
    if (p.unigram_window < 1 || p.ngram_window < 1) throw UsageError("context windows must be at least 1");
    return p;
}

TrainConfig train_config(const PipelineConfig& c) {
    TrainConfig t;
    t.dim = c.dim;
    t.negatives = c.negatives;
    t.epochs = c.epochs;
    t.learning_rate = c.learning_rate;
    t.alpha = c.alpha;
    t.seed = derive_seed(c.seed, "train");
    t.threads = worker_threads(c);
    if (t.dim == 0) throw UsageError("dim must be at least 1");
    if (!(t.learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (!(t.alpha >= 0.0 && t.alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    return t;
}

SelectOptions select_options(const PipelineConfig& c) {
    SelectOptions s;
    s.k_min = c.k_min;
    s.k_max = c.k_max;
    s.criterion = parse_criterion(c.criterion);
    s.em.seed = derive_seed(c.seed, "em");
    s.em.tol = c.em_tol;
    s.em.max_iter = c.em_max_iter;
    s.em.restarts = c.em_restarts;
    s.em.threads = worker_threads(c);
    if (s.k_min < 1 || s.k_max < s.k_min) throw UsageError("K range must satisfy 1 <= k_min <= k_max");
    if (s.em.restarts < 1) throw UsageError("em_restarts must be at least 1");
    return s;
}

AtcOptions atc_options(const PipelineConfig& c) {
    AtcOptions a;
    try {
        if (!c.long_bin.empty()) a.long_bin = BinLabel::parse(c.long_bin);
        if (!c.short_bin.empty()) a.short_bin = BinLabel::parse(c.short_bin);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return a;
}

// Rewrites config.txt and run.json to cover whatever artifacts exist now.
void write_manifest(const PipelineConfig& c, StageResult& result) {
    const auto hash = config_hash(c);
    write_artifact(out_path(c, artifact::config), "# config_hash = " + hash + "\n" + serialize_config(c));

    nlohmann::ordered_json j;
    j["config_hash"] = hash;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& f : config_fields()) cfg[f.key] = f.get(c);
    j["config"] = cfg;
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const char* name : {artifact::model, artifact::corpus, artifact::embeddings, artifact::context_embeddings,
                             artifact::atc, artifact::atc_meta, artifact::categories, artifact::diff,
                             artifact::diff_meta, artifact::dynamics, artifact::correlation, artifact::synthetic,
                             artifact::config}) {
        const auto p = out_path(c, name);
        if (fs::exists(p)) files[name] = sha256_hex(read_file(p));
    }
    j["artifacts"] = files;
    write_artifact(out_path(c, artifact::manifest), j.dump(2) + "\n");
    result.artifacts.push_back(out_path(c, artifact::config));
    result.artifacts.push_back(out_path(c, artifact::manifest));
}

StageResult emit(const PipelineConfig& c, StageResult r) {
    write_manifest(c, r);
    return r;
}

std::string json_meta(const PipelineConfig& c, const std::map<std::string, std::string>& fields) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(c);
    for (const auto& [k, v] : fields) j[k] = v;
    return j.dump(2) + "\n";
}

double draw_exponential(std::mt19937_64& rng, double mean) {
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    return -mean * std::log(u);
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = make_fields();
    return fields;
}

void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value) {
    find_field(key).set(config, value);
}

std::string get_config_value(const PipelineConfig& config, std::string_view key) { return find_field(key).get(config); }

void apply_config_text(PipelineConfig& config, std::string_view text) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected `key = value`");
        set_config_value(config, trim(std::string_view(line).substr(0, eq)),
                         trim(std::string_view(line).substr(eq + 1)));
    }
}

void apply_config_file(PipelineConfig& config, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open config file `" + path.string() + "`");
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(config, ss.str());
}

std::string serialize_config(const PipelineConfig& config) {
    std::string out;
    for (const auto& f : config_fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

std::string config_hash(const PipelineConfig& config) {
    std::string text;
    for (const auto& f : config_fields())
        if (f.key != "out_dir") text += f.key + " = " + f.get(config) + "\n";
    return sha256_hex(text);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

int exit_code_for(const std::exception& e) noexcept {
    if (auto s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return 1;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    return 2;
}

void write_artifact(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path partial = path;
    partial += ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write `" + partial.string() + "`");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.close();
        if (!out) throw DataError("failed writing `" + partial.string() + "`");
    }
    fs::rename(partial, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open `" + path.string() + "`");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

StageResult run_fit_mixture(const PipelineConfig& config) {
    const auto options = in_stage("fit-mixture", [&] { return select_options(config); });
    const auto streams = ingest(config);
    return in_stage("fit-mixture", [&] {
        const auto sample =
            sample_intervals(pool_intervals(streams), config.sample_size, derive_seed(config.seed, "sample"));
        auto fit = select_model(sample.values, options);

        StageResult r;
        const auto path = out_path(config, artifact::model);
        write_artifact(path, model_to_json(fit.model, fit.diagnostics, config_hash(config)));
        r.artifacts.push_back(path);
        r.warnings = fit.diagnostics.warnings;
        r.notes.push_back("fit-mixture: " + std::to_string(sample.values.size()) + " intervals from " +
                          std::to_string(streams.size()) + " users, selected K=" + std::to_string(fit.model.k()) +
                          " by " + std::string(to_string(options.criterion)));
        return emit(config, std::move(r));
    });
}

StageResult run_build_corpus(const PipelineConfig& config) {
    const auto streams = ingest(config);
    return in_stage("build-corpus", [&] {
        const auto model = load_model(config);
        std::vector<TokenSequence> seqs;
        seqs.reserve(streams.size());
        for (const auto& s : streams) seqs.push_back(build_token_sequence(s, model));
        std::ostringstream out;
        write_corpus(out, seqs);

        StageResult r;
        const auto path = out_path(config, artifact::corpus);
        write_artifact(path, out.str());
        r.artifacts.push_back(path);
        r.notes.push_back("build-corpus: " + std::to_string(seqs.size()) + " sequences");
        return emit(config, std::move(r));
    });
}

StageResult run_train(const PipelineConfig& config) {
    return in_stage("train", [&] {
        const auto tc = train_config(config);
        const auto pairs_opt = pair_options(config);
        const auto seqs = load_corpus(config);
        const auto vocab = build_vocabulary(seqs, config.min_count);
        const auto pairs = encode_training_pairs(seqs, vocab, pairs_opt);
        if (pairs.empty()) throw DataError("no training pairs survive the vocabulary filter");

        TrainStats stats;
        const auto table = train(pairs, vocab, tc, &stats);

        StageResult r;
        std::ostringstream out;
        write_embeddings(out, table, false);
        const auto path = out_path(config, artifact::embeddings);
        write_artifact(path, out.str());
        r.artifacts.push_back(path);
        const auto ctx_path = out_path(config, artifact::context_embeddings);
        if (config.save_context) {
            std::ostringstream ctx;
            write_embeddings(ctx, table, true);
            write_artifact(ctx_path, ctx.str());
            r.artifacts.push_back(ctx_path);
        } else if (fs::exists(ctx_path)) {
            fs::remove(ctx_path);
        }
        std::string losses;
        for (double l : stats.epoch_loss) losses += " " + format_number(l);
        r.notes.push_back("train: vocabulary " + std::to_string(vocab.size()) + ", " + std::to_string(pairs.size()) +
                          " pairs per epoch, loss per epoch:" + losses);
        return emit(config, std::move(r));
    });
}

StageResult run_atc(const PipelineConfig& config) {
    return in_stage("atc", [&] {
        const auto options = atc_options(config);
        const auto model = load_model(config);
        const auto vocab = build_vocabulary(load_corpus(config), config.min_count);
        std::istringstream in(read_file(out_path(config, artifact::embeddings)));
        const auto table = read_embeddings(in);

        auto report = compute_atc(table, model, options, &vocab);
        standardize(report.scores);
        report.metadata["standardization"] = "all";

        StageResult r;
        const auto path = out_path(config, artifact::atc);
        write_artifact(path, atc_report_csv(report));
        write_artifact(out_path(config, artifact::atc_meta), json_meta(config, report.metadata));
        r.artifacts.push_back(path);
        r.artifacts.push_back(out_path(config, artifact::atc_meta));
        r.notes.push_back("atc: " + std::to_string(report.scores.size()) + " actions scored, references " +
                          report.metadata["long_bin"] + " and " + report.metadata["short_bin"]);
        return emit(config, std::move(r));
    });
}

StageResult run_pipeline(const PipelineConfig& config) {
    StageResult all;
    append(all, run_fit_mixture(config));
    append(all, run_build_corpus(config));
    append(all, run_train(config));
    append(all, run_atc(config));
    return all;
}

StageResult run_categories(const PipelineConfig& config) {
    return in_stage("categories", [&] {
        if (config.category_map.empty()) throw UsageError("no category map given (--category-map)");
        const auto report = read_atc_report_csv(read_file(out_path(config, artifact::atc)));
        const auto categories = read_category_map_csv(read_file(config.category_map));
        CategoryOptions opt;
        opt.resamples = config.bootstrap_resamples;
        opt.level = config.ci_level;
        opt.seed = derive_seed(config.seed, "bootstrap");

        StageResult r;
        const auto rows = category_mean_ci(report.scores, categories, opt, &r.warnings);
        const auto path = out_path(config, artifact::categories);
        write_artifact(path, category_csv(rows));
        r.artifacts.push_back(path);
        r.notes.push_back("categories: " + std::to_string(rows.size()) + " categories");
        return emit(config, std::move(r));
    });
}

StageResult run_diff(const PipelineConfig& config) {
    return in_stage("diff", [&] {
        if (config.atc_a.empty() || config.atc_b.empty())
            throw UsageError("diff needs both --atc-a and --atc-b");
        const auto a = read_atc_report_csv(read_file(config.atc_a));
        const auto b = read_atc_report_csv(read_file(config.atc_b));
        const auto d = cohort_diff(a, b, config.label_a, config.label_b);

        auto join = [](const std::vector<std::string>& v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
            return s;
        };
        StageResult r;
        const auto path = out_path(config, artifact::diff);
        write_artifact(path, cohort_diff_csv(d));
        write_artifact(out_path(config, artifact::diff_meta),
                       json_meta(config, {{"label_a", d.label_a},
                                          {"label_b", d.label_b},
                                          {"diff", d.label_a + " - " + d.label_b},
                                          {"only_in_a", join(d.only_in_a)},
                                          {"only_in_b", join(d.only_in_b)}}));
        r.artifacts.push_back(path);
        r.artifacts.push_back(out_path(config, artifact::diff_meta));
        if (!d.only_in_a.empty())
            r.warnings.push_back(std::to_string(d.only_in_a.size()) + " actions only in " + d.label_a);
        if (!d.only_in_b.empty())
            r.warnings.push_back(std::to_string(d.only_in_b.size()) + " actions only in " + d.label_b);
        return emit(config, std::move(r));
    });
}

StageResult run_dynamics(const PipelineConfig& config) {
    const auto records = in_stage("ingest", [&] { return ingest_records(config); });
    return in_stage("dynamics", [&] {
        if (!(config.window_days > 0.0)) throw UsageError("window_days must be positive");
        WindowedConfig wc;
        wc.window_seconds = config.window_days * 86400.0;
        wc.min_actions = config.min_actions;
        wc.min_count = config.min_count;
        wc.pairs = pair_options(config);
        wc.train = train_config(config);
        wc.atc = atc_options(config);
        wc.refit = config.refit_windows;
        wc.selection = select_options(config);
        wc.sample_size = config.sample_size;
        wc.sample_seed = derive_seed(config.seed, "sample");
        const auto model = load_model(config);
        const auto windows = windowed_atc(records, model, wc);

        StageResult r;
        std::string out = "window_index,window_start,token,r,r_std,occurrences\n";
        std::size_t filled = 0;
        for (const auto& w : windows) {
            if (!w.report) {
                r.warnings.push_back(w.warning);
                continue;
            }
            ++filled;
            for (const auto& s : w.report->scores)
                out += csv::join({std::to_string(w.index), format_number(w.start), s.action, format_number(s.r),
                                  s.r_std ? format_number(*s.r_std) : std::string(), std::to_string(s.occurrences)}) +
                       "\n";
        }
        const auto path = out_path(config, artifact::dynamics);
        write_artifact(path, out);
        r.artifacts.push_back(path);
        r.notes.push_back("dynamics: " + std::to_string(filled) + " of " + std::to_string(windows.size()) +
                          " windows scored");
        return emit(config, std::move(r));
    });
}

StageResult run_correlate(const PipelineConfig& config) {
    return in_stage("correlate", [&] {
        if (config.covariate.empty()) throw UsageError("no covariate file given (--covariate)");
        const auto covariate = read_covariate_csv(read_file(config.covariate));
        const auto rows = csv::read_table(read_file(out_path(config, artifact::dynamics)),
                                          {"window_index", "window_start", "token", "r", "r_std", "occurrences"});

        std::map<std::string, std::map<std::size_t, double>> series;
        for (const auto& row : rows) {
            const auto& f = row.fields;
            if (!config.token.empty() && f[2] != config.token) continue;
            std::size_t w = 0;
            auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), w);
            if (ec != std::errc() || p != f[0].data() + f[0].size())
                throw ParseError(row.line, "window_index", "not an integer: `" + f[0] + "`");
            const std::string& v = f[4].empty() ? f[3] : f[4];
            double y = 0.0;
            auto [q, ec2] = std::from_chars(v.data(), v.data() + v.size(), y);
            if (ec2 != std::errc() || q != v.data() + v.size())
                throw ParseError(row.line, f[4].empty() ? "r" : "r_std", "not a number: `" + v + "`");
            series[f[2]][w] = y;
        }
        if (!config.token.empty() && series.empty())
            throw DataError("token `" + config.token + "` does not occur in the dynamics report");

        StageResult r;
        std::string out = "token,n,r,p_value,slope,intercept\n";
        for (const auto& [token, by_window] : series) {
            std::vector<double> x, y;
            for (const auto& [w, v] : by_window) {
                auto it = covariate.find(w);
                if (it == covariate.end()) continue;
                x.push_back(it->second);
                y.push_back(v);
            }
            try {
                const auto fit = pearson_linreg(x, y);
                out += csv::join({token, std::to_string(fit.n), format_number(fit.r), format_number(fit.p_value),
                                  format_number(fit.slope), format_number(fit.intercept)}) +
                       "\n";
            } catch (const DataError& e) {
                if (!config.token.empty()) throw;
                r.warnings.push_back("token " + token + " skipped: " + e.what());
            }
        }
        const auto path = out_path(config, artifact::correlation);
        write_artifact(path, out);
        r.artifacts.push_back(path);
        return emit(config, std::move(r));
    });
}

StageResult run_synth(const PipelineConfig& config) {
    return in_stage("synth", [&] {
        SyntheticSpec spec;
        spec.users = config.synth_users;
        spec.length = config.synth_length;
        spec.actions = parse_planted_actions(config.synth_actions);
        spec.seed = derive_seed(config.seed, "synth");

        StageResult r;
        const auto path = out_path(config, artifact::synthetic);
        write_artifact(path, generate_synthetic(spec));
        r.artifacts.push_back(path);
        r.notes.push_back("synth: " + std::to_string(spec.users * spec.length) + " events");
        return emit(config, std::move(r));
    });
}

std::vector<PlantedAction> parse_planted_actions(std::string_view text) {
    std::vector<PlantedAction> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto item = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (item.empty()) continue;
        const auto colon = item.rfind(':');
        if (colon == std::string::npos || colon == 0)
            throw UsageError("planted action `" + item + "` must look like label:mean_seconds");
        PlantedAction a;
        a.label = item.substr(0, colon);
        a.mean_interval = parse_real("synth_actions", trim(std::string_view(item).substr(colon + 1)));
        out.push_back(std::move(a));
    }
    return out;
}

std::string generate_synthetic(const SyntheticSpec& spec) {
    if (spec.actions.size() < 2) throw UsageError("synthetic data needs at least two planted actions");
    std::set<std::string> labels;
    std::set<double> means;
    for (const auto& a : spec.actions) {
        if (a.label.empty()) throw UsageError("planted action with an empty label");
        if (!(a.mean_interval > 0.0) || !std::isfinite(a.mean_interval))
            throw UsageError("planted mean for `" + a.label + "` must be positive");
        if (!labels.insert(a.label).second) throw UsageError("duplicate planted action `" + a.label + "`");
        means.insert(a.mean_interval);
    }
    if (means.size() < 2) throw UsageError("planted actions need at least two distinct means");
    if (spec.users == 0 || spec.length == 0) throw UsageError("synthetic users and length must be positive");

    constexpr double kBase = 1.6e9;
    const std::size_t width = std::to_string(spec.users).size();
    const std::size_t n_actions = spec.actions.size();
    std::mt19937_64 rng(spec.seed);

    std::string out = "user_id,action,timestamp\n";
    out.reserve(spec.users * spec.length * 32);
    for (std::size_t u = 0; u < spec.users; ++u) {
        std::string uid = std::to_string(u + 1);
        uid = "u" + std::string(width - uid.size(), '0') + uid;
        double t = kBase;
        std::size_t prev = 0;
        for (std::size_t j = 0; j < spec.length; ++j) {
            const std::size_t a = static_cast<std::size_t>(rng() % n_actions);
            if (j > 0)
                t += draw_exponential(rng, std::sqrt(spec.actions[prev].mean_interval * spec.actions[a].mean_interval));
            out += uid;
            out += ',';
            out += csv::quote(spec.actions[a].label);
            out += ',';
            out += format_number(t);
            out += '\n';
            prev = a;
        }
    }
    return out;
}

}  // namespace atc

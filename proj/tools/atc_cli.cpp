// atc: batch commands for action timing context analysis.
//
// Precedence: built-in defaults, then --config file, then flags.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "atc/pipeline.hpp"

namespace {

using atc::PipelineConfig;
using atc::StageResult;

std::string flag_name(const std::string& key) {
    std::string out = "--" + key;
    for (auto& c : out)
        if (c == '_') c = '-';
    return out;
}

void report(const StageResult& r) {
    for (const auto& n : r.notes) std::cerr << n << '\n';
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& p : r.artifacts) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Action timing context: interval mixtures, timed-token embeddings and ATC scores"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    app.add_option("--config", config_file, "flat key = value config file; flags override it");

    // One flag per config field. Values are kept as text and applied after the
    // config file so flags win.
    std::map<std::string, std::string> raw;
    for (const auto& f : atc::config_fields()) {
        const std::string help = f.help + " [" + f.get(PipelineConfig{}) + "]";
        if (f.get(PipelineConfig{}) == "false" || f.get(PipelineConfig{}) == "true")
            app.add_flag(flag_name(f.key), raw[f.key], help);
        else
            app.add_option(flag_name(f.key), raw[f.key], help);
    }

    struct Command {
        const char* name;
        const char* help;
        StageResult (*run)(const PipelineConfig&);
    };
    const Command commands[] = {
        {"synth", "write a synthetic event log with planted timing contexts", atc::run_synth},
        {"fit-mixture", "fit the interval mixture and write model.json", atc::run_fit_mixture},
        {"build-corpus", "write the interleaved action/bin corpus", atc::run_build_corpus},
        {"train", "train embeddings on the corpus", atc::run_train},
        {"atc", "score every action and write atc.csv", atc::run_atc},
        {"run", "fit-mixture, build-corpus, train and atc in order", atc::run_pipeline},
        {"categories", "bootstrap CIs of mean ATC per category", atc::run_categories},
        {"diff", "difference of standardized ATC between two cohorts (a - b)", atc::run_diff},
        {"dynamics", "ATC per fixed-width time window", atc::run_dynamics},
        {"correlate", "correlate windowed ATC with a covariate series", atc::run_correlate},
    };
    for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        PipelineConfig config;
        if (!config_file.empty()) atc::apply_config_file(config, config_file);
        for (const auto& f : atc::config_fields())
            if (app.count(flag_name(f.key)) > 0) atc::set_config_value(config, f.key, raw[f.key]);

        for (const auto& c : commands) {
            if (app.got_subcommand(c.name)) {
                report(c.run(config));
                return 0;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return atc::exit_code_for(e);
    }
    return 1;
}

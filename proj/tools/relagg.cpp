// relagg: run gender-from-ratings experiments described by a JSON config.
//
//   relagg run   --config cfg.json [--method p1] [--seed 3] [--out r.json] [--format json|table]
//   relagg suite --config cfg.json [--out table.txt] [--format table|json]
//
// Exit codes: 0 ok, 1 configuration, 2 data, 3 training.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relagg/relagg.hpp"

namespace {

struct Overrides {
    std::optional<double> pseudo_count;
    std::optional<std::size_t> k;
    std::optional<std::size_t> n_samples;
    std::optional<std::size_t> k_train;
    std::optional<std::size_t> k_test;
    std::optional<double> l2;
    std::optional<std::size_t> latent_dim;
    std::optional<std::string> init;
    std::optional<double> mf_l2;
    std::optional<double> lr_l2;
    std::optional<std::size_t> epochs;
    std::optional<std::string> stopping;
};

void apply(relagg::Json& params, const char* key, const auto& value) {
    if (value) params[key] = *value;
}

relagg::ReportFormat parse_format(const std::string& f) {
    return f == "json" ? relagg::ReportFormat::Json : relagg::ReportFormat::Table;
}

void write(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text << std::flush;
    } else {
        relagg::write_text(out, text);
    }
}

int run_command(const std::string& config_path, const std::string& method, std::optional<std::uint64_t> seed,
                std::optional<std::size_t> folds, bool paper_stopping, const Overrides& o, const std::string& out,
                const std::string& format) {
    auto configs = relagg::load_config(config_path);
    relagg::ExperimentConfig config;
    if (!method.empty()) {
        auto it = std::find_if(configs.begin(), configs.end(), [&](const auto& c) { return c.method == method; });
        if (it != configs.end()) {
            config = *it;
        } else {
            if (configs.empty()) throw relagg::ConfigError("config has no experiments to take data settings from");
            config = configs.front();
            config.method = method;
            config.params = relagg::Json::object();
        }
    } else if (configs.size() == 1) {
        config = configs.front();
    } else {
        throw relagg::ConfigError("config lists " + std::to_string(configs.size()) +
                                  " experiments; pick one with --method or use `relagg suite`");
    }
    if (seed) config.seed = *seed;
    if (folds) config.folds = *folds;
    if (paper_stopping) config.paper_stopping = true;
    apply(config.params, "pseudo_count", o.pseudo_count);
    apply(config.params, "k", o.k);
    apply(config.params, "n_samples", o.n_samples);
    apply(config.params, "k_train", o.k_train);
    apply(config.params, "k_test", o.k_test);
    apply(config.params, "l2", o.l2);
    apply(config.params, "latent_dim", o.latent_dim);
    apply(config.params, "init", o.init);
    apply(config.params, "mf_l2", o.mf_l2);
    apply(config.params, "lr_l2", o.lr_l2);
    apply(config.params, "epochs", o.epochs);
    apply(config.params, "stopping", o.stopping);

    const auto report = relagg::run_experiment(config);
    write(out, parse_format(format) == relagg::ReportFormat::Json ? relagg::render_json_line(report)
                                                                   : relagg::render_table(report));
    return 0;
}

int suite_command(const std::string& config_path, std::optional<std::uint64_t> seed, bool paper_stopping,
                  const std::string& out, const std::string& format) {
    auto configs = relagg::load_config(config_path);
    for (auto& c : configs) {
        if (seed) c.seed = *seed;
        if (paper_stopping) c.paper_stopping = true;
    }
    const auto entries = relagg::run_suite(configs);
    int code = 0;
    for (const auto& e : entries) {
        if (!e.report) {
            std::cerr << "relagg: " << e.method << ": " << e.error << '\n';
            if (code == 0) code = e.error_code;
        }
    }
    if (parse_format(format) == relagg::ReportFormat::Table) {
        write(out, relagg::render_table(entries));
    } else {
        std::string text;
        for (const auto& e : entries) {
            text += e.report ? relagg::render_json_line(*e.report)
                             : relagg::Json{{"method", e.method}, {"error", e.error}}.dump() + "\n";
        }
        write(out, text);
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predict user gender from movie ratings with relational aggregators"};
    app.require_subcommand(1);

    std::string config_path;
    std::string method;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds;
    bool paper_stopping = false;
    std::string out;
    std::string format;
    Overrides o;

    auto* run = app.add_subcommand("run", "run one method and report test MSE and log loss");
    run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--method", method, "method name")
        ->check(CLI::IsMember(relagg::registered_methods()));
    run->add_option("--seed", seed, "random seed");
    run->add_option("--folds", folds, "cross-validation folds");
    run->add_flag("--paper-stopping", paper_stopping, "stop gradient training on test log loss (replication only)");
    run->add_option("--out", out, "output file (default stdout)");
    run->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}))->default_val("json");
    run->add_option("--pseudo-count", o.pseudo_count, "p1/p2 pseudo-count c");
    run->add_option("--k", o.k, "nb-limited subset size");
    run->add_option("--n-samples", o.n_samples, "random subsets averaged per prediction");
    run->add_option("--k-train", o.k_train, "dropout training subset size");
    run->add_option("--k-test", o.k_test, "dropout test subset size");
    run->add_option("--l2", o.l2, "L2 penalty");
    run->add_option("--latent-dim", o.latent_dim, "matrix factorization rank");
    run->add_option("--init", o.init, "mf init")->check(CLI::IsMember({"random", "gender-seeded"}));
    run->add_option("--mf-l2", o.mf_l2, "matrix factorization L2 penalty");
    run->add_option("--lr-l2", o.lr_l2, "stacked classifier L2 penalty");
    run->add_option("--epochs", o.epochs, "SGD epochs");
    run->add_option("--stopping", o.stopping, "early or fixed")->check(CLI::IsMember({"early", "fixed"}));

    std::string suite_config;
    std::optional<std::uint64_t> suite_seed;
    bool suite_paper = false;
    std::string suite_out;
    std::string suite_format;
    auto* suite = app.add_subcommand("suite", "run every experiment in a config and print a results table");
    suite->add_option("--config", suite_config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    suite->add_option("--seed", suite_seed, "random seed for every experiment");
    suite->add_flag("--paper-stopping", suite_paper, "stop gradient training on test log loss (replication only)");
    suite->add_option("--out", suite_out, "output file (default stdout)");
    suite->add_option("--format", suite_format, "table or json")
        ->check(CLI::IsMember({"json", "table"}))
        ->default_val("table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*run) return run_command(config_path, method, seed, folds, paper_stopping, o, out, format);
        return suite_command(suite_config, suite_seed, suite_paper, suite_out, suite_format);
    } catch (const std::exception& e) {
        std::cerr << "relagg: " << e.what() << '\n';
        return relagg::exit_code_for(e);
    }
}

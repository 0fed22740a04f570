// fedgkd: run federated experiments, self-verify, and summarise metric files.
//
//   fedgkd run --config exp.json [--seed N] [--diag] [--workers N] [--out DIR]
//   fedgkd verify [--suite NAME]
//   fedgkd summarize --dir DIR

#include <cstdint>
#include <exception>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedgkd/config.hpp"
#include "fedgkd/errors.hpp"
#include "fedgkd/experiment.hpp"
#include "fedgkd/verify.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message, const std::string& field = {}) {
    nlohmann::ordered_json err{{"error", kind}, {"message", message}};
    if (!field.empty()) err["field"] = field;
    std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator: FedAvg, FedProx, FedGKD, FedGKD-Vote"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool diag = false;
    std::optional<std::size_t> workers;
    std::string out_dir;
    bool quiet = false;
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the master seed");
    run->add_flag("--diag", diag, "Record drift/inexactness diagnostics under \"diag\"");
    run->add_option("--workers", workers, "Parallel client workers (0 = all cores)");
    run->add_option("--out", out_dir, "Override the output directory");
    run->add_flag("-q,--quiet", quiet, "No per-round progress lines");

    auto* ver = app.add_subcommand("verify", "Run built-in verification suites");
    std::optional<std::string> suite;
    std::optional<std::size_t> corrupt_layer;
    ver->add_option("--suite", suite, "Only this suite: gradients, kl, reductions, partition, algebra");
    ver->add_option("--corrupt-layer", corrupt_layer, "Perturb this layer's analytic gradient (sensitivity check)");

    auto* sum = app.add_subcommand("summarize", "Summarise metrics.jsonl files into curves.csv");
    std::string sum_dir;
    sum->add_option("--dir", sum_dir, "Run directory, or a directory of run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            fedgkd::ExperimentConfig cfg = fedgkd::parse_config(config_path);
            if (seed) cfg.fed.seed = *seed;
            if (diag) cfg.diagnostics.enabled = true;
            if (workers) cfg.fed.workers = *workers;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            const int status = fedgkd::run_experiment(cfg, quiet ? nullptr : &std::cout);
            if (status != 0) {
                std::cerr << "run failed; see " << (cfg.output_dir / fedgkd::kErrorFile).string() << '\n';
                return status;
            }
            std::cout << "wrote " << cfg.output_dir.string() << '\n';
            return 0;
        }

        if (*ver) {
            fedgkd::VerifyOptions opts;
            opts.suite = suite;
            opts.corrupt_layer = corrupt_layer;
            const auto results = fedgkd::verify(opts);
            int failed = 0;
            for (const auto& r : results) {
                std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.suite << ": " << r.name;
                if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
                std::cout << '\n';
                failed += r.passed ? 0 : 1;
            }
            std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
            return failed == 0 ? 0 : 1;
        }

        if (*sum) {
            const auto summaries = fedgkd::summarize_dir(sum_dir);
            std::cout << std::left << std::setw(20) << "run" << std::setw(8) << "rounds" << std::setw(12) << "best"
                      << std::setw(8) << "@round" << "final\n";
            for (const auto& s : summaries)
                std::cout << std::left << std::setw(20) << s.label << std::setw(8) << s.rounds << std::setw(12)
                          << s.best_accuracy << std::setw(8) << s.best_round << s.final_accuracy << '\n';
            return 0;
        }
    } catch (const fedgkd::ConfigError& e) {
        print_error("config", e.what(), e.field());
        return 1;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return 1;
    }
    return 0;
}

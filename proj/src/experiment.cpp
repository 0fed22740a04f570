#include "fedgkd/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "fedgkd/checkpoint.hpp"
#include "fedgkd/errors.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json round_record_to_json(const RoundRecord& r) {
    ordered_json j;
    j["round"] = r.round;
    j["test_accuracy"] = r.test_accuracy;
    j["test_loss"] = r.test_loss;
    j["mean_train_loss"] = r.mean_train_loss;
    j["payload_multiplier"] = r.payload_multiplier;
    j["teacher_count"] = r.teacher_count;
    ordered_json clients = ordered_json::array();
    for (const ClientRoundInfo& c : r.clients) {
        ordered_json cj;
        cj["id"] = c.client_id;
        cj["n"] = c.num_samples;
        cj["train_loss"] = c.train_loss;
        cj["clamp_events"] = c.clamp_events;
        if (!c.vote_gammas.empty()) cj["vote_gammas"] = c.vote_gammas;
        clients.push_back(std::move(cj));
    }
    j["clients"] = std::move(clients);
    if (r.drift) {
        ordered_json d;
        d["global_grad_norm"] = r.drift->global_grad_norm;
        d["min_global_grad_norm"] = r.drift->min_global_grad_norm;
        d["mean_param_distance"] = r.drift->mean_param_distance();
        d["mean_output_kl"] = r.drift->mean_output_kl();
        ordered_json per = ordered_json::array();
        for (const ClientDrift& c : r.drift->clients)
            per.push_back({{"id", c.client_id},
                           {"param_distance", c.param_distance},
                           {"output_kl", c.output_kl},
                           {"inexactness", c.inexactness}});
        d["clients"] = std::move(per);
        j["diag"] = std::move(d);
    }
    return j;
}

ordered_json partition_audit(const std::vector<ClientShard>& shards, std::size_t num_classes) {
    ordered_json clients = ordered_json::array();
    for (const ClientShard& s : shards) {
        ordered_json c;
        c["id"] = s.client_id;
        c["n_train"] = s.num_samples();
        auto counts = s.train.class_counts();
        counts.resize(num_classes, 0);
        c["class_counts"] = counts;
        if (s.val) {
            auto vcounts = s.val->class_counts();
            vcounts.resize(num_classes, 0);
            c["n_val"] = s.val->size();
            c["val_class_counts"] = vcounts;
        }
        clients.push_back(std::move(c));
    }
    return ordered_json{{"num_classes", num_classes}, {"clients", std::move(clients)}};
}

ordered_json summary_to_json(const RunSummary& s) {
    ordered_json j;
    j["label"] = s.label;
    j["rounds"] = s.rounds;
    j["best_accuracy"] = s.best_accuracy;
    j["best_round"] = s.best_round;
    j["final_accuracy"] = s.final_accuracy;
    j["final_test_loss"] = s.final_test_loss;
    return j;
}

std::vector<json> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error&) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": invalid JSON");
        }
        if (!row.contains("round") || !row.contains("test_accuracy"))
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": missing round/test_accuracy");
        if (!rows.empty() && row["round"].get<std::size_t>() <= rows.back()["round"].get<std::size_t>())
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": rounds must strictly increase");
        rows.push_back(std::move(row));
    }
    return rows;
}

RunSummary summarize_metrics(const std::vector<json>& rows, std::string label) {
    RunSummary s;
    s.label = std::move(label);
    s.rounds = rows.size();
    bool first = true;
    for (const json& row : rows) {
        const double acc = row["test_accuracy"].get<double>();
        s.accuracy_curve.push_back(acc);
        if (first || acc > s.best_accuracy) {
            s.best_accuracy = acc;
            s.best_round = row["round"].get<std::size_t>();
            first = false;
        }
    }
    if (!rows.empty()) {
        s.final_accuracy = rows.back()["test_accuracy"].get<double>();
        s.final_test_loss = rows.back().value("test_loss", 0.0);
    }
    return s;
}

namespace {

void write_json(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
    cfg.validate();

    Dataset train, test;
    if (cfg.source == DatasetSource::toy) {
        train = gen_toy_dataset(cfg.toy_train_size, derive_seed(cfg.fed.seed, Stream::toy_train));
        test = gen_toy_dataset(cfg.toy_test_size, derive_seed(cfg.fed.seed, Stream::toy_test));
    } else {
        train = load_csv_dataset(cfg.train_csv, cfg.num_classes);
        test = load_csv_dataset(cfg.test_csv, cfg.num_classes);
        if (test.feature_width() != train.feature_width())
            throw DataError("test set has " + std::to_string(test.feature_width()) + " features, training set " +
                            std::to_string(train.feature_width()));
    }
    const MlpSpec spec = cfg.model_spec(train.feature_width());

    PartitionSpec pspec = cfg.partition;
    pspec.num_clients = cfg.fed.num_clients;
    pspec.seed = cfg.effective_partition_seed();
    std::vector<ClientShard> shards = dirichlet_partition(train, pspec);

    const auto& dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
    write_json(dir / kResolvedConfigFile, config_to_json(cfg));
    write_json(dir / kPartitionAuditFile, partition_audit(shards, cfg.num_classes));
    std::filesystem::remove(dir / kErrorFile);

    std::ofstream metrics(dir / kMetricsFile, std::ios::trunc);
    std::ofstream timing(dir / kTimingFile, std::ios::trunc);
    if (!metrics || !timing) throw DataError("cannot write metrics into " + dir.string());

    Federation fed(cfg.fed, spec, std::move(shards), std::move(test), cfg.diagnostics);
    std::vector<json> rows;
    for (std::size_t t = 0; t < cfg.fed.rounds; ++t) {
        RoundRecord rec;
        try {
            rec = fed.run_round();
        } catch (const RoundFailed& e) {
            ordered_json err{{"error", "round_failed"}, {"round", e.round()}, {"message", e.what()}};
            if (e.client()) err["client"] = *e.client();
            write_json(dir / kErrorFile, err);
            if (log) *log << err.dump() << '\n';
            return 2;
        }
        const ordered_json line = round_record_to_json(rec);
        metrics << line.dump() << '\n' << std::flush;
        timing << ordered_json{{"round", rec.round}, {"wall_seconds", rec.wall_seconds}}.dump() << '\n';
        rows.push_back(json::parse(line.dump()));
        if (log)
            *log << "round " << rec.round << "  acc " << std::fixed << std::setprecision(4) << rec.test_accuracy
                 << "  test_loss " << rec.test_loss << "  train_loss " << rec.mean_train_loss << '\n';
    }

    save_checkpoint(dir / kCheckpointFile, spec, fed.global());
    const RunSummary summary = summarize_metrics(rows, std::string(to_string(cfg.fed.strategy)));
    ordered_json sj = summary_to_json(summary);
    sj["strategy"] = to_string(cfg.fed.strategy);
    write_json(dir / kSummaryFile, sj);

    std::ofstream curve(dir / kCurveFile, std::ios::trunc);
    curve << "round," << to_string(cfg.fed.strategy) << '\n';
    for (const json& row : rows) curve << row["round"].get<std::size_t>() << ',' << row["test_accuracy"].dump() << '\n';
    return 0;
}

std::vector<RunSummary> summarize_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> runs;
    if (std::filesystem::exists(dir / kMetricsFile)) runs.push_back(dir);
    if (std::filesystem::is_directory(dir)) {
        std::vector<std::filesystem::path> subdirs;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_directory() && std::filesystem::exists(entry.path() / kMetricsFile)) subdirs.push_back(entry.path());
        std::sort(subdirs.begin(), subdirs.end());
        runs.insert(runs.end(), subdirs.begin(), subdirs.end());
    }
    if (runs.empty()) throw DataError("no " + std::string(kMetricsFile) + " under " + dir.string());

    std::vector<RunSummary> out;
    std::set<std::string> labels;
    for (const auto& run : runs) {
        std::string label = run == dir ? dir.filename().string() : run.filename().string();
        if (std::filesystem::exists(run / kResolvedConfigFile)) {
            std::ifstream in(run / kResolvedConfigFile);
            const json cfg = json::parse(in, nullptr, false);
            if (cfg.is_object() && cfg.contains("strategy")) {
                const std::string strategy = cfg["strategy"].get<std::string>();
                if (!labels.count(strategy)) label = strategy;
            }
        }
        if (label.empty() || labels.count(label)) label = run.filename().string() + "_" + std::to_string(out.size());
        labels.insert(label);
        out.push_back(summarize_metrics(read_metrics(run / kMetricsFile), label));
    }

    std::ofstream csv(dir / "curves.csv", std::ios::trunc);
    csv << "round";
    for (const auto& s : out) csv << ',' << s.label;
    csv << '\n';
    std::size_t longest = 0;
    for (const auto& s : out) longest = std::max(longest, s.accuracy_curve.size());
    for (std::size_t t = 0; t < longest; ++t) {
        csv << t;
        for (const auto& s : out) {
            csv << ',';
            if (t < s.accuracy_curve.size()) csv << json(s.accuracy_curve[t]).dump();
        }
        csv << '\n';
    }

    ordered_json all = ordered_json::array();
    for (const auto& s : out) all.push_back(summary_to_json(s));
    write_json(dir / "summaries.json", all);
    return out;
}

}  // namespace fedgkd

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgkd/config.hpp"
#include "fedgkd/data.hpp"
#include "fedgkd/federation.hpp"

namespace fedgkd {

// Files written into ExperimentConfig::output_dir.
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kTimingFile = "timing.jsonl";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kCheckpointFile = "checkpoint.fgkd";
inline constexpr const char* kPartitionAuditFile = "partition_audit.json";
inline constexpr const char* kResolvedConfigFile = "config.resolved.json";
inline constexpr const char* kCurveFile = "curve.csv";
inline constexpr const char* kErrorFile = "error.json";

/// One metrics.jsonl line. Wall time is deliberately absent (it goes to timing.jsonl)
/// so identical runs produce identical bytes.
nlohmann::ordered_json round_record_to_json(const RoundRecord& record);

/// Per-client class counts of the training (and validation) split.
nlohmann::ordered_json partition_audit(const std::vector<ClientShard>& shards, std::size_t num_classes);

struct RunSummary {
    std::string label;
    std::size_t rounds = 0;
    double best_accuracy = 0.0;
    std::size_t best_round = 0;
    double final_accuracy = 0.0;
    double final_test_loss = 0.0;
    std::vector<double> accuracy_curve;
};

nlohmann::ordered_json summary_to_json(const RunSummary& s);

/// Parses a metrics.jsonl file. Throws DataError on a bad line or a non-increasing round.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);
RunSummary summarize_metrics(const std::vector<nlohmann::json>& rows, std::string label);

/// Loads data, partitions, runs every round, and writes the artifacts above.
/// Returns 0 on success and 2 if a round failed (error.json describes it).
int run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Summarises `dir/metrics.jsonl` or every `dir/*/metrics.jsonl`, writes
/// `dir/curves.csv` (round plus one accuracy column per run) and `dir/summaries.json`.
std::vector<RunSummary> summarize_dir(const std::filesystem::path& dir);

}  // namespace fedgkd

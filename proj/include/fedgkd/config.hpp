#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "fedgkd/data.hpp"
#include "fedgkd/federation.hpp"
#include "fedgkd/nn.hpp"

namespace fedgkd {

enum class DatasetSource { toy, csv };

/// One experiment, fully resolved: every default is filled in after parsing.
struct ExperimentConfig {
    FedConfig fed;
    PartitionSpec partition;
    std::optional<std::uint64_t> partition_seed;  // master seed when unset

    DatasetSource source = DatasetSource::toy;
    std::size_t num_classes = 4;
    std::size_t toy_train_size = 2000;
    std::size_t toy_test_size = 1000;
    std::filesystem::path train_csv;
    std::filesystem::path test_csv;

    std::vector<std::size_t> hidden_widths = {32, 32};
    std::optional<std::vector<std::size_t>> layer_widths;  // overrides hidden_widths
    Activation activation = Activation::relu;

    std::filesystem::path output_dir = "runs/latest";
    DiagnosticsOptions diagnostics;

    /// Network for data with `input_width` features. Throws ConfigError on width mismatch.
    MlpSpec model_spec(std::size_t input_width) const;
    std::uint64_t effective_partition_seed() const noexcept;
    void validate() const;
};

/// Reads a JSON config. Relative CSV paths resolve against the config file's directory.
/// Unknown keys and inconsistent values raise ConfigError naming the dotted field.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

}  // namespace fedgkd

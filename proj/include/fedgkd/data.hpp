#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedgkd/matrix.hpp"

namespace fedgkd {

struct Dataset {
    Matrix xs;                // n x d'
    std::vector<int> ys;      // n labels in [0, num_classes)
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return ys.size(); }
    std::size_t feature_width() const noexcept { return xs.cols(); }

    /// Throws DataError if empty, shapes disagree, or a label is out of range.
    void validate() const;
    std::vector<std::size_t> class_counts() const;
};

/// Rows of ds at the given indices, in that order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

struct ClientShard {
    std::size_t client_id = 0;
    Dataset train;
    std::optional<Dataset> val;
    // Positions of train (then val) rows in the source dataset, for auditing.
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;

    std::size_t num_samples() const noexcept { return train.size(); }
};

struct PartitionSpec {
    double alpha = 0.1;
    std::size_t num_clients = 20;
    std::uint64_t seed = 0;
    double val_fraction = 0.0;

    void validate() const;
};

/// Quadrant of (x, y): 0 = (+,+), 1 = (-,+), 2 = (-,-), 3 = (+,-). Zero counts as positive.
int quadrant_label(double x, double y) noexcept;

/// n points uniform in the open square (-4, 4)^2, labelled by quadrant.
Dataset gen_toy_dataset(std::size_t n, std::uint64_t seed);

/// Per-class Dirichlet(alpha) label skew across spec.num_clients clients.
///
/// For each class the examples are shuffled, a proportion vector is drawn, and counts
/// are fixed by largest-remainder rounding (ties go to the lower client id). Clients
/// left empty receive one example from the currently largest shard. When
/// spec.val_fraction > 0 every shard is then split with train_val_split.
std::vector<ClientShard> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

/// Moves ceil(fraction * n_k) randomly chosen training rows into the validation set.
/// fraction == 0 leaves the shard untouched. Throws if training would become empty.
ClientShard train_val_split(const ClientShard& shard, double fraction, std::uint64_t seed);

/// Rows of comma-separated features followed by an integer label. Blank lines are skipped.
Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes);

}  // namespace fedgkd

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgkd/data.hpp"
#include "fedgkd/diagnostics.hpp"
#include "fedgkd/errors.hpp"
#include "fedgkd/losses.hpp"
#include "fedgkd/nn.hpp"

namespace fedgkd {

struct FedConfig {
    std::size_t num_clients = 20;
    double participation = 0.2;
    std::size_t rounds = 100;
    std::size_t local_epochs = 20;
    std::size_t batch_size = 64;
    Strategy strategy = Strategy::fedavg;
    std::size_t buffer_size = 5;
    DistillConfig distill;
    ProxConfig prox;
    SgdHyper sgd;
    double vote_lambda = 0.1;
    std::optional<double> vote_beta;  // 1 / buffer_size when unset
    std::uint64_t seed = 0;
    std::size_t workers = 1;          // 0 = OpenMP default

    double beta() const noexcept;
    /// ceil(participation * num_clients)
    std::size_t clients_per_round() const noexcept;
    void validate() const;
};

/// The last `capacity` global models, oldest first.
class TeacherBuffer {
public:
    explicit TeacherBuffer(std::size_t capacity);

    void push(std::size_t round_tag, ParamVector params);

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return entries_.empty(); }

    /// age 0 is the most recent model w_t, age m is w_{t-m}.
    const ParamVector& at_age(std::size_t age) const;
    std::size_t tag_at_age(std::size_t age) const;

private:
    struct Entry {
        std::size_t tag;
        ParamVector params;
    };
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

/// Elementwise mean of the buffered models (over current occupancy).
ParamVector ensemble_teacher(const TeacherBuffer& buffer);

/// gamma_i = 2 lambda softmax(-L / beta)_i, so sum_i gamma_i = 2 lambda.
std::vector<double> vote_coefficients(std::span<const double> val_losses, double lambda, double beta);

/// ceil(C K) distinct ids, uniform without replacement, sorted. Deterministic in (seed, round).
std::vector<std::size_t> sample_clients(std::size_t round, const FedConfig& cfg);

struct ClientResult {
    std::size_t client_id = 0;
    ParamVector params;
    std::size_t num_samples = 0;
    double train_loss = 0.0;          // mean objective over the final local epoch
    std::size_t clamp_events = 0;
    std::vector<double> vote_gammas;  // fedgkd_vote only
};

/// Raised when local training produces a non-finite loss or parameters.
class ClientAbort : public NumericError {
public:
    ClientAbort(std::size_t client_id, const std::string& what)
        : NumericError("client " + std::to_string(client_id) + ": " + what), client_id_(client_id) {}
    std::size_t client_id() const noexcept { return client_id_; }

private:
    std::size_t client_id_;
};

/// E epochs of minibatch SGD on the strategy's local objective, starting from `global`.
/// Batches are cut from a per-epoch shuffle seeded by (seed, round, client id).
/// `teachers` must match the strategy (see check_arity); fedprox anchors at `global`.
ClientResult client_update(const ClientShard& shard, const MlpSpec& spec, const ParamVector& global,
                           std::span<const Teacher> teachers, const FedConfig& cfg, std::size_t round);

/// sum_k (n_k / sum n) w_k over the given results. Results are combined in client-id
/// order, so the output does not depend on list order.
ParamVector aggregate(std::span<const ClientResult> results);

struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};

Evaluation evaluate(const MlpSpec& spec, const ParamVector& params, const Dataset& ds,
                    Exec exec = Exec::parallel);

/// Model copies sent per client per round, relative to FedAvg.
std::size_t payload_multiplier(const FedConfig& cfg, std::size_t buffer_occupancy);

struct ClientRoundInfo {
    std::size_t client_id = 0;
    std::size_t num_samples = 0;
    double train_loss = 0.0;
    std::size_t clamp_events = 0;
    std::vector<double> vote_gammas;
};

struct RoundRecord {
    std::size_t round = 0;
    double test_accuracy = 0.0;
    double test_loss = 0.0;
    double mean_train_loss = 0.0;
    double wall_seconds = 0.0;
    std::size_t payload_multiplier = 1;
    std::size_t teacher_count = 0;
    std::vector<ClientRoundInfo> clients;
    std::optional<DriftReport> drift;
};

class RoundFailed : public std::runtime_error {
public:
    RoundFailed(std::size_t round, std::optional<std::size_t> client, const std::string& what)
        : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round), client_(client) {}
    std::size_t round() const noexcept { return round_; }
    std::optional<std::size_t> client() const noexcept { return client_; }

private:
    std::size_t round_;
    std::optional<std::size_t> client_;
};

struct DiagnosticsOptions {
    bool enabled = false;
    InexactnessProbe probe;
};

/// Server state plus the round loop. Client updates within a round run on up to
/// cfg.workers OpenMP threads; everything after them is a sequential barrier.
class Federation {
public:
    Federation(FedConfig cfg, MlpSpec spec, std::vector<ClientShard> shards, Dataset test,
               DiagnosticsOptions diag = {});

    /// Runs one round. On failure throws RoundFailed and leaves the state untouched.
    RoundRecord run_round();

    std::size_t round() const noexcept { return round_; }
    const ParamVector& global() const noexcept { return global_; }
    const TeacherBuffer& buffer() const noexcept { return buffer_; }
    const FedConfig& config() const noexcept { return cfg_; }
    const MlpSpec& spec() const noexcept { return spec_; }
    std::span<const ClientShard> shards() const noexcept { return shards_; }

    /// Replace the global model (and restart the teacher buffer from it).
    void reset_global(ParamVector w0);

private:
    FedConfig cfg_;
    MlpSpec spec_;
    std::vector<ClientShard> shards_;
    Dataset test_;
    DiagnosticsOptions diag_;
    ParamVector global_;
    TeacherBuffer buffer_;
    std::size_t round_ = 0;
    std::optional<double> min_grad_norm_;
};

}  // namespace fedgkd

#include "fedgkd/federation.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>

#include "fedgkd/errors.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

double FedConfig::beta() const noexcept {
    return vote_beta ? *vote_beta : 1.0 / static_cast<double>(std::max<std::size_t>(buffer_size, 1));
}

std::size_t FedConfig::clients_per_round() const noexcept {
    const double raw = std::ceil(participation * static_cast<double>(num_clients) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 0.0)), 1, num_clients);
}

void FedConfig::validate() const {
    if (num_clients < 1) throw ConfigError("federation.num_clients", "must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0))
        throw ConfigError("federation.participation", "must be in (0, 1]");
    if (participation * static_cast<double>(num_clients) < 1.0 - 1e-9)
        throw ConfigError("federation.participation",
                          "participation * num_clients = " +
                              std::to_string(participation * static_cast<double>(num_clients)) +
                              " selects fewer than one client per round");
    if (rounds < 1) throw ConfigError("federation.rounds", "must be >= 1");
    if (local_epochs < 1) throw ConfigError("federation.local_epochs", "must be >= 1");
    if (batch_size < 1) throw ConfigError("federation.batch_size", "must be >= 1");
    if (buffer_size < 1) throw ConfigError("federation.buffer_size", "must be >= 1");
    distill.validate();
    prox.validate();
    sgd.validate();
    if (!(vote_lambda > 0.0) || !std::isfinite(vote_lambda))
        throw ConfigError("federation.vote_lambda", "must be > 0");
    if (!(beta() > 0.0) || !std::isfinite(beta())) throw ConfigError("federation.vote_beta", "must be > 0");
}

TeacherBuffer::TeacherBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("federation.buffer_size", "must be >= 1");
}

void TeacherBuffer::push(std::size_t round_tag, ParamVector params) {
    entries_.push_back({round_tag, std::move(params)});
    while (entries_.size() > capacity_) entries_.pop_front();
}

const ParamVector& TeacherBuffer::at_age(std::size_t age) const {
    if (age >= entries_.size())
        throw std::out_of_range("teacher buffer holds " + std::to_string(entries_.size()) +
                                " models, asked for age " + std::to_string(age));
    return entries_[entries_.size() - 1 - age].params;
}

std::size_t TeacherBuffer::tag_at_age(std::size_t age) const {
    if (age >= entries_.size()) throw std::out_of_range("teacher buffer age out of range");
    return entries_[entries_.size() - 1 - age].tag;
}

ParamVector ensemble_teacher(const TeacherBuffer& buffer) {
    if (buffer.empty()) throw std::invalid_argument("ensemble_teacher: empty buffer");
    // Running mean: identical entries reproduce the entry exactly.
    ParamVector mean = buffer.at_age(buffer.size() - 1);
    for (std::size_t k = 1; k < buffer.size(); ++k) {
        const ParamVector& w = buffer.at_age(buffer.size() - 1 - k);
        if (w.size() != mean.size()) throw ShapeError("ensemble_teacher: buffered models differ in size");
        const double inv = 1.0 / static_cast<double>(k + 1);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (w[i] - mean[i]) * inv;
    }
    return mean;
}

std::vector<double> vote_coefficients(std::span<const double> val_losses, double lambda, double beta) {
    if (!(lambda > 0.0) || !(beta > 0.0)) throw ConfigError("federation.vote_lambda", "lambda and beta must be > 0");
    std::vector<double> scores(val_losses.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = -val_losses[i] / beta;
    std::vector<double> gammas = softmax(scores);
    for (double& g : gammas) g *= 2.0 * lambda;
    return gammas;
}

std::vector<std::size_t> sample_clients(std::size_t round, const FedConfig& cfg) {
    const std::size_t k = cfg.num_clients, m = cfg.clients_per_round();
    std::vector<std::size_t> ids(k);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = make_rng(cfg.seed, Stream::sampling, {round});
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, k - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ClientResult client_update(const ClientShard& shard, const MlpSpec& spec, const ParamVector& global,
                           std::span<const Teacher> teachers, const FedConfig& cfg, std::size_t round) {
    check_params(global, spec);
    ObjectiveTerms terms;
    terms.strategy = cfg.strategy;
    terms.teachers = teachers;
    terms.anchor = &global;
    terms.distill = cfg.distill;
    terms.prox = cfg.prox;
    check_arity(terms);

    const std::size_t n = shard.num_samples();
    if (n == 0) throw DataError("client " + std::to_string(shard.client_id) + " has no training data");

    Rng rng = make_rng(cfg.seed, Stream::client, {round, shard.client_id});
    ParamVector w = global;
    MomentumState momentum;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    ClientResult result;
    result.client_id = shard.client_id;
    result.num_samples = n;
    double last_epoch_loss = 0.0;
    std::size_t last_epoch_batches = 0;

    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        last_epoch_loss = 0.0;
        last_epoch_batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            // Row order inside a batch does not change the objective; sorting makes a
            // full batch reduce in the same order as the unshuffled shard.
            std::sort(idx.begin(), idx.end());
            const Dataset batch = subset(shard.train, idx);

            const ObjectiveValue value = local_objective(spec, w, batch.xs, batch.ys, terms);
            if (!std::isfinite(value.loss))
                throw ClientAbort(shard.client_id, "non-finite loss at epoch " + std::to_string(epoch) +
                                                       ", batch starting at " + std::to_string(start));
            result.clamp_events += value.clamp_events;
            const ParamVector grad = objective_gradient(spec, w, value);
            sgd_step(w, grad, momentum, cfg.sgd);
            last_epoch_loss += value.loss;
            ++last_epoch_batches;
        }
    }
    if (!w.all_finite()) throw ClientAbort(shard.client_id, "non-finite parameters after local training");

    result.params = std::move(w);
    result.train_loss = last_epoch_loss / static_cast<double>(std::max<std::size_t>(last_epoch_batches, 1));
    return result;
}

ParamVector aggregate(std::span<const ClientResult> results) {
    if (results.empty()) throw std::invalid_argument("aggregate: no client results");
    std::vector<std::size_t> order(results.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return results[a].client_id < results[b].client_id; });

    // Weighted running mean; exact when all vectors agree.
    ParamVector mean;
    double seen = 0.0;
    for (std::size_t k : order) {
        const ClientResult& r = results[k];
        if (r.num_samples == 0) throw std::invalid_argument("aggregate: client with zero samples");
        if (mean.empty()) {
            mean = r.params;
            seen = static_cast<double>(r.num_samples);
            continue;
        }
        if (r.params.size() != mean.size())
            throw ShapeError("aggregate: client " + std::to_string(r.client_id) + " sent " +
                             std::to_string(r.params.size()) + " parameters, expected " + std::to_string(mean.size()));
        seen += static_cast<double>(r.num_samples);
        const double share = static_cast<double>(r.num_samples) / seen;
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += share * (r.params[i] - mean[i]);
    }
    return mean;
}

Evaluation evaluate(const MlpSpec& spec, const ParamVector& params, const Dataset& ds, Exec exec) {
    const ForwardCache cache = forward(params, spec, ds.xs, exec);
    const Matrix probs = softmax_rows(cache.logits());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = probs.row(i);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == ds.ys[i]) ++correct;
    }
    Evaluation ev;
    ev.accuracy = ds.size() ? static_cast<double>(correct) / static_cast<double>(ds.size()) : 0.0;
    ev.loss = cross_entropy(probs, ds.ys).loss;
    return ev;
}

std::size_t payload_multiplier(const FedConfig& cfg, std::size_t buffer_occupancy) {
    switch (cfg.strategy) {
        case Strategy::fedavg:
        case Strategy::fedprox: return 1;
        case Strategy::fedgkd: return cfg.buffer_size > 1 ? 2 : 1;
        case Strategy::fedgkd_vote: return std::max<std::size_t>(buffer_occupancy, 1);
    }
    return 1;
}

Federation::Federation(FedConfig cfg, MlpSpec spec, std::vector<ClientShard> shards, Dataset test,
                       DiagnosticsOptions diag)
    : cfg_(std::move(cfg)),
      spec_(std::move(spec)),
      shards_(std::move(shards)),
      test_(std::move(test)),
      diag_(diag),
      buffer_(std::max<std::size_t>(cfg_.buffer_size, 1)) {
    cfg_.validate();
    spec_.validate();
    diag_.probe.validate();
    if (shards_.size() != cfg_.num_clients)
        throw ConfigError("federation.num_clients", std::to_string(cfg_.num_clients) + " clients configured but " +
                                                        std::to_string(shards_.size()) + " shards given");
    for (std::size_t k = 0; k < shards_.size(); ++k) {
        const ClientShard& s = shards_[k];
        if (s.client_id != k) throw ConfigError("shards", "shard " + std::to_string(k) + " carries client id " + std::to_string(s.client_id));
        if (s.num_samples() == 0) throw ConfigError("shards", "client " + std::to_string(k) + " has no training data");
        if (s.train.feature_width() != spec_.input_width())
            throw ConfigError("model.layer_widths", "input width " + std::to_string(spec_.input_width()) +
                                                        " but data has " + std::to_string(s.train.feature_width()) + " features");
        if (cfg_.strategy == Strategy::fedgkd_vote && (!s.val || s.val->size() == 0))
            throw ConfigError("partition.val_fraction",
                              "fedgkd_vote scores teachers on client validation data; client " + std::to_string(k) + " has none");
    }
    test_.validate();
    if (test_.num_classes != spec_.output_width())
        throw ConfigError("model.layer_widths", "output width " + std::to_string(spec_.output_width()) +
                                                    " but the data has " + std::to_string(test_.num_classes) + " classes");
    reset_global(init_params(spec_, cfg_.seed));
}

void Federation::reset_global(ParamVector w0) {
    check_params(w0, spec_);
    global_ = std::move(w0);
    buffer_ = TeacherBuffer(cfg_.buffer_size);
    buffer_.push(round_, global_);
    min_grad_norm_.reset();
}

RoundRecord Federation::run_round() {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t t = round_;
    const std::vector<std::size_t> sampled = sample_clients(t, cfg_);
    const std::size_t occupancy = buffer_.size();

    ParamVector ensemble;
    if (cfg_.strategy == Strategy::fedgkd) ensemble = ensemble_teacher(buffer_);

    std::vector<ClientResult> results(sampled.size());
    std::vector<std::exception_ptr> failures(sampled.size());
    const int threads = cfg_.workers == 0 ? omp_get_max_threads() : static_cast<int>(cfg_.workers);

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        try {
            const ClientShard& shard = shards_[sampled[i]];
            std::vector<Teacher> teachers;
            std::vector<double> gammas;
            if (cfg_.strategy == Strategy::fedgkd) {
                teachers.push_back({&ensemble, cfg_.distill.gamma});
            } else if (cfg_.strategy == Strategy::fedgkd_vote) {
                std::vector<double> losses(occupancy);
                for (std::size_t age = 0; age < occupancy; ++age)
                    losses[age] = evaluate(spec_, buffer_.at_age(age), *shard.val).loss;
                gammas = vote_coefficients(losses, cfg_.vote_lambda, cfg_.beta());
                for (std::size_t age = 0; age < occupancy; ++age) teachers.push_back({&buffer_.at_age(age), gammas[age]});
            }
            results[i] = client_update(shard, spec_, global_, teachers, cfg_, t);
            results[i].vote_gammas = std::move(gammas);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }

    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i]) continue;
        try {
            std::rethrow_exception(failures[i]);
        } catch (const std::exception& e) {
            throw RoundFailed(t, sampled[i], e.what());
        }
    }

    ParamVector next = aggregate(results);
    if (!next.all_finite()) throw RoundFailed(t, std::nullopt, "aggregated model is not finite");

    RoundRecord record;
    record.round = t;
    record.payload_multiplier = payload_multiplier(cfg_, occupancy);
    record.teacher_count = cfg_.strategy == Strategy::fedgkd ? 1 : cfg_.strategy == Strategy::fedgkd_vote ? occupancy : 0;
    double loss_sum = 0.0;
    for (const ClientResult& r : results) {
        record.clients.push_back({r.client_id, r.num_samples, r.train_loss, r.clamp_events, r.vote_gammas});
        loss_sum += r.train_loss;
    }
    record.mean_train_loss = loss_sum / static_cast<double>(results.size());

    std::optional<double> min_norm = min_grad_norm_;
    if (diag_.enabled) {
        std::vector<LocalUpdate> updates;
        for (const ClientResult& r : results) updates.push_back({r.client_id, &r.params});
        DriftReport report = drift_report(spec_, global_, updates, shards_, diag_.probe);
        min_norm = min_norm ? std::min(*min_norm, report.global_grad_norm) : report.global_grad_norm;
        report.min_global_grad_norm = *min_norm;
        record.drift = std::move(report);
    }

    const Evaluation ev = evaluate(spec_, next, test_);
    record.test_accuracy = ev.accuracy;
    record.test_loss = ev.loss;

    // Commit.
    global_ = std::move(next);
    buffer_.push(t + 1, global_);
    round_ = t + 1;
    min_grad_norm_ = min_norm;

    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

}  // namespace fedgkd

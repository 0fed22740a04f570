// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fedgkd/config.hpp"
#include "fedgkd/data.hpp"
#include "fedgkd/diagnostics.hpp"
#include "fedgkd/experiment.hpp"
#include "fedgkd/federation.hpp"
#include "fedgkd/losses.hpp"
#include "fedgkd/rng.hpp"

using namespace fedgkd;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s.precision(2);
    s << std::scientific << v;
    return s.str();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome gradient_correctness() {
    const auto start = Clock::now();
    GradCheckOptions opts;
    opts.points = 100;
    double worst = 0.0;
    std::string where;
    for (Activation act : {Activation::tanh, Activation::relu}) {
        const MlpSpec spec{{4, 8, 6, 3}, act};
        for (GradCheckLoss loss : all_grad_check_losses()) {
            const GradCheckReport r = finite_diff_check(spec, loss, 2024, opts);
            if (r.points < 100) return {false, std::string(to_string(loss)) + " checked only " + std::to_string(r.points) + " points"};
            if (r.max_rel_error >= worst) {
                worst = r.max_rel_error;
                where = std::string(to_string(loss)) + "/" + std::string(to_string(act));
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 30.0,
            "max rel err " + sci(worst) + " (" + where + "), 100 points x 5 losses x 2 activations, " + fmt(elapsed) + " s"};
}

Outcome kl_oracle() {
    std::mt19937_64 rng(7);
    std::gamma_distribution<double> g(0.8, 1.0);
    double worst = 0.0, worst_self = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 2 + rng() % 9;
        std::vector<double> p(c), q(c);
        double sp = 0, sq = 0;
        for (std::size_t j = 0; j < c; ++j) { p[j] = g(rng) + 1e-9; q[j] = g(rng) + 1e-9; sp += p[j]; sq += q[j]; }
        for (std::size_t j = 0; j < c; ++j) { p[j] /= sp; q[j] /= sq; }
        long double closed = 0.0L;
        for (std::size_t j = 0; j < c; ++j)
            closed += static_cast<long double>(p[j]) * (std::log(static_cast<long double>(p[j])) - std::log(static_cast<long double>(q[j])));
        worst = std::max(worst, std::abs(kl_div(p, q) - static_cast<double>(closed)));
        worst_self = std::max(worst_self, std::abs(kl_div(p, p)));
    }
    const std::vector<double> onehot{1.0, 0.0, 0.0};
    worst_self = std::max(worst_self, std::abs(kl_div(onehot, onehot)));
    return {worst < 1e-10 && worst_self == 0.0, "max abs diff " + sci(worst) + " over 1000 pairs, max |KL(p||p)| " + sci(worst_self)};
}

struct ToyFederation {
    Dataset test;
    std::vector<ClientShard> shards;
};

ToyFederation toy_federation(std::size_t clients, double alpha, double val_fraction, std::uint64_t seed,
                             std::size_t train_size = 2000, std::size_t test_size = 1000) {
    ToyFederation f;
    const Dataset train = gen_toy_dataset(train_size, derive_seed(seed, Stream::toy_train));
    f.test = gen_toy_dataset(test_size, derive_seed(seed, Stream::toy_test));
    f.shards = dirichlet_partition(train, PartitionSpec{alpha, clients, seed, val_fraction});
    return f;
}

ParamVector train_toy(FedConfig cfg, double val_fraction, std::size_t rounds) {
    cfg.num_clients = 10;
    cfg.participation = 0.3;
    cfg.local_epochs = 2;
    cfg.batch_size = 32;
    cfg.seed = 31;
    ToyFederation f = toy_federation(10, 0.5, val_fraction, 31, 1000, 200);
    Federation fed(cfg, MlpSpec{{2, 32, 32, 4}}, std::move(f.shards), std::move(f.test));
    for (std::size_t t = 0; t < rounds; ++t) fed.run_round();
    return fed.global();
}

Outcome reduction_equivalences() {
    const auto start = Clock::now();
    const std::size_t rounds = 30;
    FedConfig avg;
    avg.strategy = Strategy::fedavg;
    const ParamVector w_avg = train_toy(avg, 0.0, rounds);

    FedConfig gkd = avg;
    gkd.strategy = Strategy::fedgkd;
    gkd.distill.gamma = 0.0;
    const bool gkd_ok = train_toy(gkd, 0.0, rounds) == w_avg;

    FedConfig prox = avg;
    prox.strategy = Strategy::fedprox;
    prox.prox.mu = 0.0;
    const bool prox_ok = train_toy(prox, 0.0, rounds) == w_avg;

    FedConfig single = avg;
    single.strategy = Strategy::fedgkd;
    single.buffer_size = 1;
    single.distill.gamma = 0.2;
    FedConfig vote = single;
    vote.strategy = Strategy::fedgkd_vote;
    vote.vote_lambda = 0.1;
    const bool vote_ok = train_toy(vote, 0.1, rounds) == train_toy(single, 0.1, rounds);

    const double elapsed = seconds_since(start);
    auto mark = [](bool b) { return b ? "ok" : "MISMATCH"; };
    return {gkd_ok && prox_ok && vote_ok && elapsed < 120.0,
            std::string("fedgkd(gamma=0) ") + mark(gkd_ok) + ", fedprox(mu=0) " + mark(prox_ok) + ", vote(M=1) vs fedgkd(M=1) " +
                mark(vote_ok) + ", " + std::to_string(rounds) + " rounds each, " + fmt(elapsed) + " s"};
}

Outcome aggregation_algebra() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 3.0);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        ParamVector v(1 + rng() % 50);
        for (double& x : v) x = g(rng);
        std::vector<ClientResult> same;
        TeacherBuffer buf(1 + rng() % 6);
        for (std::size_t k = 0; k < 1 + rng() % 8; ++k) same.push_back({k, v, 1 + rng() % 100, 0.0, 0, {}});
        for (std::size_t k = 0; k < buf.capacity() + 2; ++k) buf.push(k, v);
        worst = std::max(worst, l2_distance(aggregate(same), v));
        worst = std::max(worst, l2_distance(ensemble_teacher(buf), v));
    }
    const std::vector<ClientResult> weighted{{0, ParamVector(std::vector<double>{0.0}), 1, 0.0, 0, {}},
                                             {1, ParamVector(std::vector<double>{4.0}), 3, 0.0, 0, {}}};
    const double example = aggregate(weighted)[0];
    const double example_err = std::abs(example - 3.0);
    return {worst <= 1e-12 && example_err <= 1e-12,
            "identity error " + sci(worst) + " over 200 random vectors, n=(1,3) mean of ([0],[4]) = " + fmt(example, 17)};
}

Outcome vote_coefficients_check() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    double worst_sum = 0.0, worst_sym = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 1 + rng() % 10;
        const double lambda = 0.01 + u(rng), beta = 0.05 + u(rng);
        std::vector<double> losses(m);
        for (double& l : losses) l = u(rng);
        double sum = 0.0;
        for (double gm : vote_coefficients(losses, lambda, beta)) sum += gm;
        worst_sum = std::max(worst_sum, std::abs(sum - 2.0 * lambda));

        const std::vector<double> equal(m, u(rng));
        const auto ge = vote_coefficients(equal, lambda, beta);
        for (double gm : ge) worst_sym = std::max(worst_sym, std::abs(gm - ge[0]));
    }
    return {worst_sum <= 1e-12 && worst_sym == 0.0,
            "max |sum - 2 lambda| " + sci(worst_sum) + ", max spread for equal losses " + sci(worst_sym)};
}

Outcome partition_invariants() {
    std::mt19937_64 rng(12);
    std::size_t covers = 0;
    for (int combo = 0; combo < 50; ++combo) {
        const std::size_t n = 40 + rng() % 1000;
        PartitionSpec p;
        p.alpha = std::pow(10.0, -2.0 + 4.0 * std::uniform_real_distribution<double>(0, 1)(rng));
        p.num_clients = 1 + rng() % 40;
        p.seed = rng();
        const Dataset ds = gen_toy_dataset(n, rng());
        std::vector<std::size_t> all;
        bool nonempty = true;
        for (const ClientShard& s : dirichlet_partition(ds, p)) {
            nonempty = nonempty && s.num_samples() > 0;
            all.insert(all.end(), s.train_indices.begin(), s.train_indices.end());
        }
        std::sort(all.begin(), all.end());
        bool exact = nonempty && all.size() == n;
        for (std::size_t i = 0; exact && i < n; ++i) exact = all[i] == i;
        covers += exact ? 1 : 0;
    }

    // Mean over clients of TV(local label distribution, global label distribution).
    auto mean_tv = [](const Dataset& d, double alpha, std::uint64_t seed) {
        const auto shards = dirichlet_partition(d, PartitionSpec{alpha, 10, seed, 0.0});
        const auto global = d.class_counts();
        double total = 0.0;
        for (const ClientShard& s : shards) {
            const auto local = s.train.class_counts();
            double tv = 0.0;
            for (std::size_t c = 0; c < global.size(); ++c)
                tv += std::abs(static_cast<double>(local[c]) / static_cast<double>(s.num_samples()) -
                               static_cast<double>(global[c]) / static_cast<double>(d.size()));
            total += 0.5 * tv;
        }
        return total / static_cast<double>(shards.size());
    };
    const Dataset ds = gen_toy_dataset(2000, 3);
    double skewed = 0.0, flat = 0.0;
    std::size_t wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double a = mean_tv(ds, 0.1, seed), b = mean_tv(ds, 10.0, seed);
        skewed += a / 20.0;
        flat += b / 20.0;
        wins += a > b ? 1 : 0;
    }
    return {covers == 50 && skewed > flat,
            std::to_string(covers) + "/50 disjoint covers; mean TV alpha=0.1 " + fmt(skewed) + " vs alpha=10 " + fmt(flat) + " (" +
                std::to_string(wins) + "/20 seeds)"};
}

struct ToyOutcome {
    double final_accuracy = 0.0;
    double mean_drift = 0.0;
};

ToyOutcome toy_run(Strategy strategy, std::uint64_t seed) {
    FedConfig cfg;
    cfg.strategy = strategy;
    cfg.num_clients = 3;
    cfg.participation = 1.0;
    cfg.rounds = 50;
    cfg.local_epochs = 5;
    cfg.seed = seed;
    ToyFederation f = toy_federation(3, 0.1, 0.0, seed);
    DiagnosticsOptions diag;
    diag.enabled = true;
    Federation fed(cfg, MlpSpec{{2, 32, 32, 4}}, std::move(f.shards), std::move(f.test), diag);
    ToyOutcome out;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        const RoundRecord r = fed.run_round();
        out.mean_drift += r.drift->mean_output_kl() / static_cast<double>(cfg.rounds);
        out.final_accuracy = r.test_accuracy;
    }
    return out;
}

Outcome toy_reproduction() {
    const auto start = Clock::now();
    double acc_avg = 0, acc_gkd = 0, drift_avg = 0, drift_gkd = 0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
        const ToyOutcome a = toy_run(Strategy::fedavg, static_cast<std::uint64_t>(s));
        const ToyOutcome g = toy_run(Strategy::fedgkd, static_cast<std::uint64_t>(s));
        acc_avg += a.final_accuracy / seeds;
        acc_gkd += g.final_accuracy / seeds;
        drift_avg += a.mean_drift / seeds;
        drift_gkd += g.mean_drift / seeds;
    }
    const double elapsed = seconds_since(start);
    return {acc_gkd >= acc_avg && drift_gkd < drift_avg && elapsed < 300.0,
            "final acc fedgkd " + fmt(acc_gkd, 4) + " vs fedavg " + fmt(acc_avg, 4) + "; output-KL drift " + fmt(drift_gkd, 4) +
                " vs " + fmt(drift_avg, 4) + "; 5 seeds, " + fmt(elapsed) + " s"};
}

Outcome determinism() {
    const auto root = std::filesystem::temp_directory_path() / "fedgkd_acceptance_determinism";
    std::filesystem::remove_all(root);
    nlohmann::json doc = {{"strategy", "fedgkd_vote"},
                          {"seed", 17},
                          {"toy", {{"train_size", 1000}, {"test_size", 300}}},
                          {"federation", {{"num_clients", 8}, {"participation", 0.5}, {"rounds", 6}, {"local_epochs", 2}, {"batch_size", 32}}},
                          {"diagnostics", {{"enabled", true}}}};
    ExperimentConfig cfg = config_from_json(doc);
    std::vector<std::string> outputs;
    const std::vector<std::pair<std::string, std::size_t>> runs{{"w1a", 1}, {"w1b", 1}, {"w4a", 4}, {"w4b", 4}};
    for (const auto& [name, workers] : runs) {
        cfg.output_dir = root / name;
        cfg.fed.workers = workers;
        if (run_experiment(cfg) != 0) return {false, "run " + name + " failed"};
        outputs.push_back(slurp(root / name / kMetricsFile));
    }
    const bool same_serial = outputs[0] == outputs[1];
    const bool same_parallel = outputs[2] == outputs[3];
    const bool across = outputs[0] == outputs[2];
    std::filesystem::remove_all(root);
    return {same_serial && same_parallel && across && !outputs[0].empty(),
            std::string("1 worker rerun ") + (same_serial ? "identical" : "DIFFERS") + ", 4 workers rerun " +
                (same_parallel ? "identical" : "DIFFERS") + ", 1 vs 4 workers " + (across ? "identical" : "DIFFERS") + " (" +
                std::to_string(outputs[0].size()) + " bytes)"};
}

Outcome fedavg_is_gd() {
    const Dataset pooled = gen_toy_dataset(500, 4);
    const auto shards = dirichlet_partition(pooled, PartitionSpec{0.3, 5, 8, 0.0});
    FedConfig cfg;
    cfg.strategy = Strategy::fedavg;
    cfg.num_clients = 5;
    cfg.participation = 1.0;
    cfg.local_epochs = 1;
    cfg.batch_size = pooled.size();
    cfg.sgd = SgdHyper{0.1, 0.0, 0.0};
    const MlpSpec spec{{2, 16, 16, 4}, Activation::relu};
    Federation fed(cfg, spec, shards, gen_toy_dataset(100, 5));
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        // Reference: one full-batch GD step on the pooled weighted objective from the same point.
        ParamVector expected = fed.global();
        const ParamVector g = full_batch_gradient(spec, expected, pooled);
        for (std::size_t i = 0; i < expected.size(); ++i) expected[i] -= cfg.sgd.learning_rate * g[i];
        fed.run_round();
        double err = 0.0;
        for (std::size_t i = 0; i < expected.size(); ++i) err = std::max(err, std::abs(expected[i] - fed.global()[i]));
        worst = std::max(worst, err);
    }
    return {worst <= 1e-10, "max |w_fedavg - w_gd| " + sci(worst) + " over 10 rounds, 5 clients"};
}

Outcome communication_accounting() {
    auto multipliers = [](Strategy s, std::size_t m, double val_fraction) {
        FedConfig cfg;
        cfg.strategy = s;
        cfg.buffer_size = m;
        cfg.num_clients = 3;
        cfg.participation = 1.0;
        cfg.local_epochs = 1;
        cfg.batch_size = 64;
        ToyFederation f = toy_federation(3, 1.0, val_fraction, 2, 300, 100);
        Federation fed(cfg, MlpSpec{{2, 8, 4}}, std::move(f.shards), std::move(f.test));
        std::vector<std::size_t> out;
        for (int t = 0; t < 6; ++t) out.push_back(fed.run_round().payload_multiplier);
        return out;
    };
    auto show = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t x : v) s += std::to_string(x);
        return s;
    };
    const auto avg = multipliers(Strategy::fedavg, 5, 0.0);
    const auto prox = multipliers(Strategy::fedprox, 5, 0.0);
    const auto gkd1 = multipliers(Strategy::fedgkd, 1, 0.0);
    const auto gkd5 = multipliers(Strategy::fedgkd, 5, 0.0);
    const auto vote = multipliers(Strategy::fedgkd_vote, 4, 0.1);
    const std::vector<std::size_t> ones(6, 1), twos(6, 2), occupancy{1, 2, 3, 4, 4, 4};
    const bool ok = avg == ones && prox == ones && gkd1 == ones && gkd5 == twos && vote == occupancy;
    return {ok, "fedavg " + show(avg) + ", fedprox " + show(prox) + ", fedgkd M=1 " + show(gkd1) + ", fedgkd M=5 " + show(gkd5) +
                    ", vote M=4 " + show(vote) + " (rounds 0-5)"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1. gradient correctness", gradient_correctness},
        {"2. KL oracle", kl_oracle},
        {"3. reduction equivalences", reduction_equivalences},
        {"4. aggregation/ensemble algebra", aggregation_algebra},
        {"5. vote coefficients", vote_coefficients_check},
        {"6. partition invariants", partition_invariants},
        {"7. toy experiment: fedgkd vs fedavg", toy_reproduction},
        {"8. determinism across workers", determinism},
        {"9. fedavg equals gradient descent", fedavg_is_gd},
        {"10. communication accounting", communication_accounting},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::cout << (o.passed ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
        failures += o.passed ? 0 : 1;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}

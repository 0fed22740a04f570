#include "fedgkd/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "fedgkd/data.hpp"
#include "fedgkd/diagnostics.hpp"
#include "fedgkd/errors.hpp"
#include "fedgkd/federation.hpp"
#include "fedgkd/losses.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

namespace {

constexpr std::array<std::string_view, 5> kSuites = {"gradients", "kl", "reductions", "partition", "algebra"};

struct Recorder {
    std::string suite;
    std::vector<CheckResult>& out;

    void check(std::string name, bool ok, std::string detail = {}) {
        out.push_back({suite, std::move(name), ok, std::move(detail)});
    }
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << v;
    return s.str();
}

void gradient_suite(Recorder& rec, const VerifyOptions& opts) {
    GradCheckOptions gopts;
    gopts.points = opts.grad_points;
    if (opts.corrupt_layer) {
        const std::size_t layer = *opts.corrupt_layer;
        gopts.tamper = [layer](const MlpSpec& spec, ParamVector& g) {
            if (layer >= spec.num_layers()) return;
            const std::size_t off = spec.weight_offset(layer);
            g[off] += 0.05 + std::abs(g[off]);
        };
    }
    for (Activation act : {Activation::tanh, Activation::relu}) {
        const MlpSpec spec{{3, 6, 5, 3}, act};
        for (GradCheckLoss loss : all_grad_check_losses()) {
            const GradCheckReport r = finite_diff_check(spec, loss, 17, gopts);
            std::string detail = "max rel err " + fmt(r.max_rel_error);
            if (r.max_rel_error >= 1e-4) detail += ", worst at layer " + std::to_string(r.worst_layer);
            rec.check(std::string(to_string(loss)) + "/" + std::string(to_string(act)), r.max_rel_error < 1e-4, detail);
        }
    }
}

void kl_suite(Recorder& rec) {
    const double half_vs_quarter = kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75});
    rec.check("closed form [.5,.5] || [.25,.75]", std::abs(half_vs_quarter - (0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0))) < 1e-15,
              fmt(half_vs_quarter));
    const double onehot = kl_div(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5});
    rec.check("closed form [1,0] || [.5,.5]", std::abs(onehot - std::log(2.0)) < 1e-15, fmt(onehot));

    Rng rng = make_rng(3, Stream::verify);
    std::gamma_distribution<double> g(0.7, 1.0);
    double worst = 0.0, worst_self = 0.0, most_negative = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(5), q(5);
        double sp = 0, sq = 0;
        for (std::size_t j = 0; j < 5; ++j) { p[j] = g(rng) + 1e-9; q[j] = g(rng) + 1e-9; sp += p[j]; sq += q[j]; }
        for (std::size_t j = 0; j < 5; ++j) { p[j] /= sp; q[j] /= sq; }
        double direct = 0.0;
        for (std::size_t j = 0; j < 5; ++j) direct += p[j] * (std::log(p[j]) - std::log(q[j]));
        const double v = kl_div(p, q);
        worst = std::max(worst, std::abs(v - direct));
        worst_self = std::max(worst_self, std::abs(kl_div(p, p)));
        most_negative = std::min(most_negative, v);
    }
    rec.check("random pairs vs log-difference form", worst < 1e-10, "max abs diff " + fmt(worst));
    rec.check("KL(p||p) == 0", worst_self == 0.0, fmt(worst_self));
    rec.check("nonnegative", most_negative >= 0.0, fmt(most_negative));
}

std::pair<Dataset, std::vector<ClientShard>> small_federation_data(double val_fraction) {
    const Dataset train = gen_toy_dataset(240, 11);
    PartitionSpec p;
    p.alpha = 0.5;
    p.num_clients = 4;
    p.seed = 5;
    p.val_fraction = val_fraction;
    return {gen_toy_dataset(200, 12), dirichlet_partition(train, p)};
}

ParamVector train_small(FedConfig cfg, double val_fraction) {
    auto [test, shards] = small_federation_data(val_fraction);
    cfg.num_clients = 4;
    cfg.participation = 0.5;
    cfg.local_epochs = 2;
    cfg.batch_size = 16;
    cfg.seed = 99;
    Federation fed(cfg, MlpSpec{{2, 8, 4}}, std::move(shards), std::move(test));
    for (int t = 0; t < 3; ++t) fed.run_round();
    return fed.global();
}

void reduction_suite(Recorder& rec) {
    FedConfig base;
    base.strategy = Strategy::fedavg;
    const ParamVector avg = train_small(base, 0.0);

    FedConfig gkd = base;
    gkd.strategy = Strategy::fedgkd;
    gkd.distill.gamma = 0.0;
    rec.check("fedgkd(gamma=0) == fedavg", train_small(gkd, 0.0) == avg);

    FedConfig prox = base;
    prox.strategy = Strategy::fedprox;
    prox.prox.mu = 0.0;
    rec.check("fedprox(mu=0) == fedavg", train_small(prox, 0.0) == avg);

    FedConfig single = base;
    single.strategy = Strategy::fedgkd;
    single.buffer_size = 1;
    single.distill.gamma = 0.2;
    FedConfig vote = single;
    vote.strategy = Strategy::fedgkd_vote;
    vote.vote_lambda = 0.1;
    rec.check("fedgkd_vote(M=1) == fedgkd(M=1)", train_small(vote, 0.1) == train_small(single, 0.1));
}

void partition_suite(Recorder& rec) {
    Rng rng = make_rng(21, Stream::verify);
    bool cover_ok = true;
    std::string detail;
    for (int combo = 0; combo < 10; ++combo) {
        const std::size_t n = 50 + rng() % 400;
        PartitionSpec p;
        p.alpha = std::pow(10.0, -1.5 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng));
        p.num_clients = 1 + rng() % 15;
        p.seed = rng();
        const Dataset ds = gen_toy_dataset(n, rng());
        std::vector<std::size_t> all;
        for (const ClientShard& s : dirichlet_partition(ds, p)) {
            if (s.num_samples() == 0) cover_ok = false;
            all.insert(all.end(), s.train_indices.begin(), s.train_indices.end());
        }
        std::sort(all.begin(), all.end());
        bool exact = all.size() == n;
        for (std::size_t i = 0; exact && i < n; ++i) exact = all[i] == i;
        if (!exact) {
            cover_ok = false;
            detail = "combo " + std::to_string(combo) + " is not a disjoint cover";
        }
    }
    rec.check("disjoint cover, no empty shard", cover_ok, detail);

    const Dataset ds = gen_toy_dataset(100, 1);
    PartitionSpec one;
    one.num_clients = 1;
    const auto single = dirichlet_partition(ds, one);
    rec.check("K=1 keeps the dataset", single.size() == 1 && single[0].train.xs == ds.xs && single[0].train.ys == ds.ys);

    auto max_tv = [](const Dataset& d, double alpha, std::uint64_t seed) {
        PartitionSpec p;
        p.alpha = alpha;
        p.num_clients = 10;
        p.seed = seed;
        const auto global = d.class_counts();
        double worst = 0.0;
        for (const ClientShard& s : dirichlet_partition(d, p)) {
            const auto local = s.train.class_counts();
            double tv = 0.0;
            for (std::size_t c = 0; c < global.size(); ++c)
                tv += std::abs(static_cast<double>(local[c]) / static_cast<double>(s.num_samples()) -
                               static_cast<double>(global[c]) / static_cast<double>(d.size()));
            worst = std::max(worst, 0.5 * tv);
        }
        return worst;
    };
    const Dataset big = gen_toy_dataset(2000, 2);
    double skewed = 0.0, flat = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        skewed += max_tv(big, 0.1, s);
        flat += max_tv(big, 10.0, s);
    }
    rec.check("alpha=0.1 more heterogeneous than alpha=10", skewed > flat,
              "mean max TV " + fmt(skewed / 10) + " vs " + fmt(flat / 10));
}

void algebra_suite(Recorder& rec) {
    const ParamVector v(std::vector<double>{0.1, -2.5, 3.0});
    std::vector<ClientResult> same;
    for (std::size_t k = 0; k < 3; ++k) same.push_back({k, v, 7 + k, 0.0, 0, {}});
    rec.check("aggregate of identical vectors", aggregate(same) == v);

    std::vector<ClientResult> weighted = {{0, ParamVector(std::vector<double>{0.0}), 1, 0.0, 0, {}},
                                          {1, ParamVector(std::vector<double>{4.0}), 3, 0.0, 0, {}}};
    rec.check("weighted mean n=(1,3)", std::abs(aggregate(weighted)[0] - 3.0) < 1e-12);

    TeacherBuffer buf(4);
    for (std::size_t t = 0; t < 4; ++t) buf.push(t, v);
    rec.check("ensemble of identical buffer", ensemble_teacher(buf) == v);

    const auto gammas = vote_coefficients(std::vector<double>{0.3, 1.2, 0.7}, 0.1, 0.2);
    double sum = 0.0;
    for (double g : gammas) sum += g;
    rec.check("vote coefficients sum to 2 lambda", std::abs(sum - 0.2) < 1e-12, fmt(sum));
}

}  // namespace

std::span<const std::string_view> verify_suite_names() { return kSuites; }

std::vector<CheckResult> verify(const VerifyOptions& opts) {
    if (opts.suite && std::find(kSuites.begin(), kSuites.end(), *opts.suite) == kSuites.end())
        throw ConfigError("suite", "unknown suite '" + *opts.suite + "'");
    std::vector<CheckResult> out;
    auto wanted = [&](std::string_view name) { return !opts.suite || *opts.suite == name; };
    if (wanted("gradients")) { Recorder r{"gradients", out}; gradient_suite(r, opts); }
    if (wanted("kl")) { Recorder r{"kl", out}; kl_suite(r); }
    if (wanted("reductions")) { Recorder r{"reductions", out}; reduction_suite(r); }
    if (wanted("partition")) { Recorder r{"partition", out}; partition_suite(r); }
    if (wanted("algebra")) { Recorder r{"algebra", out}; algebra_suite(r); }
    return out;
}

}  // namespace fedgkd

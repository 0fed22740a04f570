#include "fedgkd/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "fedgkd/errors.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

void InexactnessProbe::validate() const {
    if (!(coefficient >= 0.0) || !std::isfinite(coefficient))
        throw ConfigError("diagnostics.inexactness_c", "must be >= 0");
}

double DriftReport::mean_param_distance() const {
    if (clients.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : clients) s += c.param_distance;
    return s / static_cast<double>(clients.size());
}

double DriftReport::mean_output_kl() const {
    if (clients.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : clients) s += c.output_kl;
    return s / static_cast<double>(clients.size());
}

ParamVector full_batch_gradient(const MlpSpec& spec, const ParamVector& w, const Dataset& ds) {
    const ForwardCache cache = forward(w, spec, ds.xs);
    const LossGrad ce = cross_entropy(softmax_rows(cache.logits()), ds.ys);
    return backprop(cache, w, spec, ce.dlogits);
}

double mean_output_kl(const MlpSpec& spec, const ParamVector& reference, const ParamVector& model,
                      const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    const Matrix p = softmax_rows(forward(reference, spec, ds.xs).logits());
    const Matrix q = softmax_rows(forward(model, spec, ds.xs).logits());
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) s += kl_div(p.row(i), q.row(i));
    return s / static_cast<double>(ds.size());
}

double inexactness_ratio(const MlpSpec& spec, const Dataset& train, const ParamVector& before,
                         const ParamVector& after, const InexactnessProbe& probe) {
    if (before.size() != after.size()) throw ShapeError("inexactness_ratio: parameter sizes differ");
    ParamVector lhs = full_batch_gradient(spec, after, train);
    for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] += probe.coefficient * (after[i] - before[i]);
    const double rhs = l2_norm(full_batch_gradient(spec, before, train));
    return l2_norm(lhs) / std::max(rhs, 1e-12);
}

DriftReport drift_report(const MlpSpec& spec, const ParamVector& global_before,
                         std::span<const LocalUpdate> updates, std::span<const ClientShard> shards,
                         const InexactnessProbe& probe) {
    DriftReport report;
    for (const LocalUpdate& u : updates) {
        if (u.client_id >= shards.size() || u.params == nullptr)
            throw std::invalid_argument("drift_report: unknown client " + std::to_string(u.client_id));
        const Dataset& train = shards[u.client_id].train;
        ClientDrift d;
        d.client_id = u.client_id;
        d.param_distance = l2_distance(*u.params, global_before);
        d.output_kl = mean_output_kl(spec, global_before, *u.params, train);
        d.inexactness = inexactness_ratio(spec, train, global_before, *u.params, probe);
        report.clients.push_back(d);
    }

    // grad f(w) = sum_k p_k grad F_k(w), p_k = n_k / n
    double total = 0.0;
    for (const ClientShard& s : shards) total += static_cast<double>(s.num_samples());
    ParamVector global_grad(global_before.size(), 0.0);
    for (const ClientShard& s : shards) {
        if (s.num_samples() == 0) continue;
        const ParamVector g = full_batch_gradient(spec, global_before, s.train);
        const double pk = static_cast<double>(s.num_samples()) / total;
        for (std::size_t i = 0; i < g.size(); ++i) global_grad[i] += pk * g[i];
    }
    report.global_grad_norm = l2_norm(global_grad);
    report.min_global_grad_norm = report.global_grad_norm;
    return report;
}

std::string_view to_string(GradCheckLoss loss) {
    switch (loss) {
        case GradCheckLoss::ce: return "ce";
        case GradCheckLoss::ce_kd_kl: return "ce+kd_kl";
        case GradCheckLoss::ce_kd_mse: return "ce+kd_mse";
        case GradCheckLoss::ce_prox: return "ce+prox";
        case GradCheckLoss::ce_vote: return "ce+vote";
    }
    return "?";
}

std::span<const GradCheckLoss> all_grad_check_losses() {
    static constexpr std::array<GradCheckLoss, 5> kAll = {GradCheckLoss::ce, GradCheckLoss::ce_kd_kl,
                                                          GradCheckLoss::ce_kd_mse, GradCheckLoss::ce_prox,
                                                          GradCheckLoss::ce_vote};
    return kAll;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

namespace {

ParamVector random_params(const MlpSpec& spec, Rng& rng) {
    ParamVector p = init_params(spec, rng());
    std::normal_distribution<double> noise(0.0, 0.1);
    for (double& v : p) v += noise(rng);
    return p;
}

bool near_kink(const ForwardCache& cache) {
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (double z : cache.pre[l].values())
            if (std::abs(z) < 1e-3) return true;
    return false;
}

}  // namespace

GradCheckReport finite_diff_check(const MlpSpec& spec, GradCheckLoss loss, std::uint64_t seed,
                                  const GradCheckOptions& opts) {
    spec.validate();
    Rng rng = make_rng(seed, Stream::verify, {static_cast<std::uint64_t>(loss)});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, static_cast<int>(spec.output_width()) - 1);

    GradCheckReport report;
    report.layer_max_error.assign(spec.num_layers(), 0.0);

    for (std::size_t point = 0; point < opts.points; ++point) {
        ParamVector w;
        Matrix x(opts.batch, spec.input_width());
        std::vector<int> y(opts.batch);
        for (int attempt = 0;; ++attempt) {
            w = random_params(spec, rng);
            for (double& v : x.values()) v = gauss(rng);
            for (int& v : y) v = label(rng);
            if (spec.activation != Activation::relu || !near_kink(forward(w, spec, x, Exec::serial))) break;
            if (attempt > 10000) throw NumericError("finite_diff_check: could not draw a kink-free point");
        }

        std::vector<ParamVector> teacher_params;
        std::vector<Teacher> teachers;
        ParamVector anchor;
        ObjectiveTerms terms;
        switch (loss) {
            case GradCheckLoss::ce: terms.strategy = Strategy::fedavg; break;
            case GradCheckLoss::ce_kd_kl:
            case GradCheckLoss::ce_kd_mse:
                terms.strategy = Strategy::fedgkd;
                terms.distill.kind = loss == GradCheckLoss::ce_kd_kl ? RegularizerKind::kl : RegularizerKind::mse;
                teacher_params.push_back(random_params(spec, rng));
                break;
            case GradCheckLoss::ce_prox:
                terms.strategy = Strategy::fedprox;
                terms.prox.mu = opts.mu;
                anchor = random_params(spec, rng);
                terms.anchor = &anchor;
                break;
            case GradCheckLoss::ce_vote:
                terms.strategy = Strategy::fedgkd_vote;
                for (int m = 0; m < 3; ++m) teacher_params.push_back(random_params(spec, rng));
                break;
        }
        const double shares[] = {0.5, 0.3, 0.2};
        for (std::size_t m = 0; m < teacher_params.size(); ++m)
            teachers.push_back({&teacher_params[m], teacher_params.size() == 1 ? opts.gamma : opts.gamma * shares[m]});
        terms.teachers = teachers;

        const ObjectiveValue value = local_objective(spec, w, x, y, terms, Exec::serial);
        ParamVector analytic = objective_gradient(spec, w, value, Exec::serial);
        if (opts.tamper) opts.tamper(spec, analytic);

        ParamVector numeric(w.size());
        ParamVector probe = w;
        for (std::size_t i = 0; i < w.size(); ++i) {
            probe[i] = w[i] + opts.step;
            const double up = local_objective(spec, probe, x, y, terms, Exec::serial).loss;
            probe[i] = w[i] - opts.step;
            const double down = local_objective(spec, probe, x, y, terms, Exec::serial).loss;
            probe[i] = w[i];
            numeric[i] = (up - down) / (2.0 * opts.step);
        }

        report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic.span(), numeric.span()));
        for (std::size_t l = 0; l < spec.num_layers(); ++l) {
            const std::size_t off = spec.weight_offset(l);
            const std::size_t len = spec.layer_widths[l] * spec.layer_widths[l + 1] + spec.layer_widths[l + 1];
            const double e = relative_error(analytic.span().subspan(off, len), numeric.span().subspan(off, len));
            report.layer_max_error[l] = std::max(report.layer_max_error[l], e);
        }
        ++report.points;
    }
    report.worst_layer = static_cast<std::size_t>(
        std::max_element(report.layer_max_error.begin(), report.layer_max_error.end()) - report.layer_max_error.begin());
    return report;
}

}  // namespace fedgkd

#pragma once

// Client-drift and convergence instrumentation. Everything here is read-only over
// parameter snapshots and never feeds back into training.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "fedgkd/data.hpp"
#include "fedgkd/losses.hpp"
#include "fedgkd/nn.hpp"

namespace fedgkd {

/// `coefficient` plays the role of the unmeasurable gamma * L_h / delta in the
/// inexact-local-solve condition, and is supplied by the user.
struct InexactnessProbe {
    double coefficient = 0.0;

    void validate() const;
};

struct ClientDrift {
    std::size_t client_id = 0;
    double param_distance = 0.0;  // ||w_k - w_t||
    double output_kl = 0.0;       // mean_i KL(h(w_t, x_i) || h(w_k, x_i)) on the client's training data
    double inexactness = 0.0;
};

struct DriftReport {
    std::vector<ClientDrift> clients;
    double global_grad_norm = 0.0;      // ||grad f(w_t)|| over all clients' training data
    double min_global_grad_norm = 0.0;  // running minimum, filled in by the federation loop

    double mean_param_distance() const;
    double mean_output_kl() const;
};

/// Full-batch gradient of the mean cross-entropy on ds, i.e. grad F_k.
ParamVector full_batch_gradient(const MlpSpec& spec, const ParamVector& w, const Dataset& ds);

/// Mean over rows of KL(softmax(reference) || softmax(model)).
double mean_output_kl(const MlpSpec& spec, const ParamVector& reference, const ParamVector& model,
                      const Dataset& ds);

/// ||grad F_k(after) + c (after - before)|| / max(||grad F_k(before)||, 1e-12)
double inexactness_ratio(const MlpSpec& spec, const Dataset& train, const ParamVector& before,
                         const ParamVector& after, const InexactnessProbe& probe);

struct LocalUpdate {
    std::size_t client_id = 0;
    const ParamVector* params = nullptr;
};

/// `shards` is indexed by client id and covers every client, so the global gradient
/// norm is taken over the whole federation, not only the sampled clients.
DriftReport drift_report(const MlpSpec& spec, const ParamVector& global_before,
                         std::span<const LocalUpdate> updates, std::span<const ClientShard> shards,
                         const InexactnessProbe& probe);

enum class GradCheckLoss { ce, ce_kd_kl, ce_kd_mse, ce_prox, ce_vote };

std::string_view to_string(GradCheckLoss loss);
std::span<const GradCheckLoss> all_grad_check_losses();

/// Test hook: mutates the analytic gradient before comparison.
using GradientTamper = std::function<void(const MlpSpec&, ParamVector&)>;

struct GradCheckOptions {
    std::size_t points = 100;
    std::size_t batch = 5;
    double step = 1e-5;
    double gamma = 0.2;
    double mu = 0.01;
    GradientTamper tamper;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_layer = 0;
    std::vector<double> layer_max_error;
    std::size_t points = 0;
};

/// ||a - b|| / max(||a||, ||b||, 1e-12)
double relative_error(std::span<const double> a, std::span<const double> b);

/// Central-difference check of the analytic gradient of the selected composite loss at
/// `opts.points` random (params, batch, teacher) draws. For ReLU networks, draws with
/// any hidden pre-activation within 1e-3 of the kink are redrawn.
GradCheckReport finite_diff_check(const MlpSpec& spec, GradCheckLoss loss, std::uint64_t seed,
                                  const GradCheckOptions& opts = {});

}  // namespace fedgkd

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fedgkd/matrix.hpp"
#include "fedgkd/nn.hpp"

namespace fedgkd {

/// Lower bound applied inside every logarithm.
inline constexpr double kLogClamp = 1e-12;

enum class RegularizerKind { kl, mse };

std::string_view to_string(RegularizerKind k);
RegularizerKind regularizer_from_string(std::string_view name);

/// Distillation strength gamma; the 1/2 factor is applied inside kd_term, so this is
/// the same gamma that multiplies the KL sum as gamma / (2 n).
struct DistillConfig {
    double gamma = 0.2;
    double temperature = 1.0;
    RegularizerKind kind = RegularizerKind::kl;

    void validate() const;
};

struct ProxConfig {
    double mu = 0.01;

    void validate() const;
};

struct LossGrad {
    double loss = 0.0;
    Matrix dlogits;
    std::size_t clamp_events = 0;
};

/// Mean negative log-likelihood of the labels. The logit gradient is (probs - onehot) / n.
/// A label probability below kLogClamp is clamped and counted in clamp_events.
LossGrad cross_entropy(const Matrix& probs, std::span<const int> labels);

/// KL(p || q) = sum_j p_j ln(p_j / q_j) with 0 ln 0 = 0. Both arguments are clamped at
/// kLogClamp inside the log, so kl_div(p, p) is exactly zero.
double kl_div(std::span<const double> p, std::span<const double> q);

/// Distillation term gamma / (2n) * sum_i D(teacher_i, student_i), where D is
/// KL(softmax(t/T) || softmax(s/T)) or the squared logit distance. The teacher is a
/// constant: only the student-logit gradient is returned.
LossGrad kd_term(const Matrix& teacher_logits, const Matrix& student_logits,
                 const DistillConfig& cfg);

struct ProxGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// (mu / 2) ||w - anchor||^2 and its gradient mu (w - anchor).
ProxGrad prox_term(const ParamVector& w, const ParamVector& anchor, const ProxConfig& cfg);

enum class Strategy { fedavg, fedprox, fedgkd, fedgkd_vote };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

/// A frozen teacher model with its own distillation coefficient.
struct Teacher {
    const ParamVector* params = nullptr;
    double gamma = 0.0;
};

/// Everything besides the batch and the student that defines a client's local objective.
///   fedavg      CE
///   fedprox     CE + prox(anchor)
///   fedgkd      CE + kd(single ensemble teacher)
///   fedgkd_vote CE + sum_m kd(teacher_m, gamma_m)
struct ObjectiveTerms {
    Strategy strategy = Strategy::fedavg;
    std::span<const Teacher> teachers;
    const ParamVector* anchor = nullptr;
    DistillConfig distill;  // temperature and kind; gamma comes from each Teacher
    ProxConfig prox;
};

/// Throws ConfigError when the teacher count or anchor does not fit the strategy.
void check_arity(const ObjectiveTerms& terms);

struct ObjectiveValue {
    double loss = 0.0;      // full objective
    double ce_loss = 0.0;   // cross-entropy part only
    Matrix dlogits;         // gradient through the student logits
    ParamVector param_grad; // parameter-space addend (prox); empty when unused
    ForwardCache cache;
    std::size_t clamp_events = 0;
};

ObjectiveValue local_objective(const MlpSpec& spec, const ParamVector& student,
                               const Matrix& batch_x, std::span<const int> batch_y,
                               const ObjectiveTerms& terms, Exec exec = Exec::parallel);

/// backprop(value.dlogits) + value.param_grad
ParamVector objective_gradient(const MlpSpec& spec, const ParamVector& student,
                               const ObjectiveValue& value, Exec exec = Exec::parallel);

}  // namespace fedgkd

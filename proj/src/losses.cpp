#include "fedgkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "fedgkd/errors.hpp"

namespace fedgkd {

std::string_view to_string(RegularizerKind k) { return k == RegularizerKind::kl ? "kl" : "mse"; }

RegularizerKind regularizer_from_string(std::string_view name) {
    if (name == "kl") return RegularizerKind::kl;
    if (name == "mse") return RegularizerKind::mse;
    throw ConfigError("distill.kind", "unknown regularizer '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("distill.gamma", "must be >= 0");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw ConfigError("distill.temperature", "must be > 0");
}

void ProxConfig::validate() const {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("prox.mu", "must be >= 0");
}

LossGrad cross_entropy(const Matrix& probs, std::span<const int> labels) {
    const std::size_t n = probs.rows(), classes = probs.cols();
    if (labels.size() != n)
        throw ShapeError("cross_entropy: " + std::to_string(n) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    LossGrad out;
    out.dlogits = probs;
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
        double p = probs(i, static_cast<std::size_t>(y));
        if (p < kLogClamp) {
            p = kLogClamp;
            ++out.clamp_events;
        }
        total -= std::log(p);
        out.dlogits(i, static_cast<std::size_t>(y)) -= 1.0;
    }
    for (double& g : out.dlogits.values()) g *= inv_n;
    out.loss = total * inv_n;
    return out;
}

double kl_div(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw ShapeError("kl_div: lengths " + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()));
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] <= 0.0) continue;
        s += p[j] * std::log(std::max(p[j], kLogClamp) / std::max(q[j], kLogClamp));
    }
    return s;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream msg;
        msg << who << ": teacher logits " << a.rows() << "x" << a.cols() << " vs student "
            << b.rows() << "x" << b.cols();
        throw ShapeError(msg.str());
    }
}

}  // namespace

LossGrad kd_term(const Matrix& teacher_logits, const Matrix& student_logits,
                 const DistillConfig& cfg) {
    check_same_shape(teacher_logits, student_logits, "kd_term");
    LossGrad out;
    out.dlogits = Matrix(student_logits.rows(), student_logits.cols());
    const std::size_t n = student_logits.rows();
    if (cfg.gamma == 0.0 || n == 0) return out;

    const double scale = cfg.gamma / (2.0 * static_cast<double>(n));
    double total = 0.0;
    if (cfg.kind == RegularizerKind::kl) {
        const double tau = cfg.temperature;
        for (std::size_t i = 0; i < n; ++i) {
            const auto pt = softmax(teacher_logits.row(i), tau);
            const auto ps = softmax(student_logits.row(i), tau);
            total += kl_div(pt, ps);
            auto g = out.dlogits.row(i);
            // d/ds KL(pt || softmax(s / tau)) = (ps - pt) / tau
            for (std::size_t j = 0; j < g.size(); ++j) g[j] = scale * (ps[j] - pt[j]) / tau;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            auto t = teacher_logits.row(i);
            auto s = student_logits.row(i);
            auto g = out.dlogits.row(i);
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double diff = s[j] - t[j];
                total += diff * diff;
                g[j] = 2.0 * scale * diff;
            }
        }
    }
    out.loss = scale * total;
    return out;
}

ProxGrad prox_term(const ParamVector& w, const ParamVector& anchor, const ProxConfig& cfg) {
    if (w.size() != anchor.size())
        throw ShapeError("prox_term: parameters have " + std::to_string(w.size()) +
                         " entries, anchor has " + std::to_string(anchor.size()));
    ProxGrad out{0.0, ParamVector(w.size(), 0.0)};
    if (cfg.mu == 0.0) return out;
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = w[i] - anchor[i];
        sq += d * d;
        out.grad[i] = cfg.mu * d;
    }
    out.loss = 0.5 * cfg.mu * sq;
    return out;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::fedavg: return "fedavg";
        case Strategy::fedprox: return "fedprox";
        case Strategy::fedgkd: return "fedgkd";
        case Strategy::fedgkd_vote: return "fedgkd_vote";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view name) {
    if (name == "fedavg") return Strategy::fedavg;
    if (name == "fedprox") return Strategy::fedprox;
    if (name == "fedgkd") return Strategy::fedgkd;
    if (name == "fedgkd_vote") return Strategy::fedgkd_vote;
    throw ConfigError("strategy", "unknown strategy '" + std::string(name) + "'");
}

void check_arity(const ObjectiveTerms& terms) {
    const std::size_t m = terms.teachers.size();
    switch (terms.strategy) {
        case Strategy::fedavg:
        case Strategy::fedprox:
            if (m != 0) throw ConfigError("teachers", std::string(to_string(terms.strategy)) + " takes no teachers");
            break;
        case Strategy::fedgkd:
            if (m != 1) throw ConfigError("teachers", "fedgkd takes exactly one (ensemble) teacher, got " + std::to_string(m));
            break;
        case Strategy::fedgkd_vote:
            if (m == 0) throw ConfigError("teachers", "fedgkd_vote needs at least one teacher");
            break;
    }
    for (const Teacher& t : terms.teachers)
        if (t.params == nullptr || !(t.gamma >= 0.0)) throw ConfigError("teachers", "teacher without parameters or negative gamma");
    if (terms.strategy == Strategy::fedprox && terms.anchor == nullptr)
        throw ConfigError("anchor", "fedprox needs the round's global model as anchor");
}

ObjectiveValue local_objective(const MlpSpec& spec, const ParamVector& student,
                               const Matrix& batch_x, std::span<const int> batch_y,
                               const ObjectiveTerms& terms, Exec exec) {
    check_arity(terms);
    ObjectiveValue out;
    out.cache = forward(student, spec, batch_x, exec);
    const Matrix& logits = out.cache.logits();

    LossGrad ce = cross_entropy(softmax_rows(logits), batch_y);
    out.ce_loss = ce.loss;
    out.loss = ce.loss;
    out.clamp_events = ce.clamp_events;
    out.dlogits = std::move(ce.dlogits);

    for (const Teacher& t : terms.teachers) {
        if (t.gamma == 0.0) continue;
        DistillConfig cfg = terms.distill;
        cfg.gamma = t.gamma;
        const Matrix teacher_logits = forward(*t.params, spec, batch_x, exec).logits();
        LossGrad kd = kd_term(teacher_logits, logits, cfg);
        out.loss += kd.loss;
        auto& g = out.dlogits.values();
        const auto& gk = kd.dlogits.values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += gk[k];
    }

    if (terms.strategy == Strategy::fedprox && terms.prox.mu != 0.0) {
        ProxGrad prox = prox_term(student, *terms.anchor, terms.prox);
        out.loss += prox.loss;
        out.param_grad = std::move(prox.grad);
    }
    return out;
}

ParamVector objective_gradient(const MlpSpec& spec, const ParamVector& student,
                               const ObjectiveValue& value, Exec exec) {
    ParamVector grad = backprop(value.cache, student, spec, value.dlogits, exec);
    if (!value.param_grad.empty()) {
        if (value.param_grad.size() != grad.size()) throw ShapeError("objective_gradient: addend size mismatch");
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += value.param_grad[i];
    }
    return grad;
}

}  // namespace fedgkd

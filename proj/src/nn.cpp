#include "fedgkd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "fedgkd/errors.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

std::string_view to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("activation", "unknown activation '" + std::string(name) + "'");
}

std::size_t MlpSpec::param_count() const noexcept {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
        d += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
    return d;
}

std::size_t MlpSpec::weight_offset(std::size_t layer) const noexcept {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l)
        off += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
    return off;
}

std::size_t MlpSpec::bias_offset(std::size_t layer) const noexcept {
    return weight_offset(layer) + layer_widths[layer] * layer_widths[layer + 1];
}

void MlpSpec::validate() const {
    if (layer_widths.size() < 2)
        throw ConfigError("layer_widths", "need at least input and output widths");
    for (std::size_t w : layer_widths)
        if (w == 0) throw ConfigError("layer_widths", "every width must be >= 1");
}

bool ParamVector::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double l2_norm(const ParamVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size())
        throw ShapeError("l2_distance: sizes " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void check_params(const ParamVector& params, const MlpSpec& spec) {
    if (params.size() != spec.param_count())
        throw ShapeError("parameter vector has " + std::to_string(params.size()) +
                         " entries, spec implies " + std::to_string(spec.param_count()));
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector params(spec.param_count(), 0.0);
    Rng rng = make_rng(seed, Stream::init);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t fan_in = spec.layer_widths[l], fan_out = spec.layer_widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        const std::size_t off = spec.weight_offset(l);
        for (std::size_t k = 0; k < fan_in * fan_out; ++k) params[off + k] = dist(rng);
    }
    return params;
}

namespace {

std::span<const double> weights_of(const ParamVector& p, const MlpSpec& spec, std::size_t l) {
    return p.span().subspan(spec.weight_offset(l), spec.layer_widths[l] * spec.layer_widths[l + 1]);
}

std::span<const double> bias_of(const ParamVector& p, const MlpSpec& spec, std::size_t l) {
    return p.span().subspan(spec.bias_offset(l), spec.layer_widths[l + 1]);
}

Matrix activate(const Matrix& z, Activation act) {
    Matrix a(z.rows(), z.cols());
    auto& out = a.values();
    const auto& in = z.values();
    if (act == Activation::relu) {
        for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
    } else {
        for (std::size_t k = 0; k < in.size(); ++k) out[k] = std::tanh(in[k]);
    }
    return a;
}

}  // namespace

ForwardCache forward(const ParamVector& params, const MlpSpec& spec, const Matrix& batch_x,
                     Exec exec) {
    check_params(params, spec);
    if (batch_x.cols() != spec.input_width()) {
        std::ostringstream msg;
        msg << "forward: batch is " << batch_x.rows() << "x" << batch_x.cols()
            << " but the network expects " << spec.input_width() << " input columns";
        throw ShapeError(msg.str());
    }
    const std::size_t layers = spec.num_layers();
    ForwardCache cache;
    cache.inputs.reserve(layers);
    cache.pre.reserve(layers);
    cache.inputs.push_back(batch_x);
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z(batch_x.rows(), spec.layer_widths[l + 1]);
        kernels::dense_forward(exec, cache.inputs[l], weights_of(params, spec, l),
                               bias_of(params, spec, l), z);
        if (l + 1 < layers) cache.inputs.push_back(activate(z, spec.activation));
        cache.pre.push_back(std::move(z));
    }
    return cache;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw NumericError("softmax: temperature must be positive");
    if (logits.empty()) return {};
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        probs[j] = std::exp((logits[j] - peak) / temperature);
        total += probs[j];
    }
    for (double& p : probs) p /= total;
    return probs;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto p = softmax(logits.row(r), temperature);
        std::copy(p.begin(), p.end(), probs.row(r).begin());
    }
    return probs;
}

ParamVector backprop(const ForwardCache& cache, const ParamVector& params, const MlpSpec& spec,
                     const Matrix& dloss_dlogits, Exec exec) {
    check_params(params, spec);
    const Matrix& logits = cache.logits();
    if (dloss_dlogits.rows() != logits.rows() || dloss_dlogits.cols() != logits.cols()) {
        std::ostringstream msg;
        msg << "backprop: upstream gradient is " << dloss_dlogits.rows() << "x"
            << dloss_dlogits.cols() << ", logits are " << logits.rows() << "x" << logits.cols();
        throw ShapeError(msg.str());
    }
    ParamVector grad(params.size(), 0.0);
    Matrix delta = dloss_dlogits;
    for (std::size_t l = spec.num_layers(); l-- > 0;) {
        const std::size_t n_in = spec.layer_widths[l], n_out = spec.layer_widths[l + 1];
        kernels::dense_grad_params(exec, delta, cache.inputs[l],
                                   grad.span().subspan(spec.weight_offset(l), n_in * n_out),
                                   grad.span().subspan(spec.bias_offset(l), n_out));
        if (l == 0) break;
        Matrix dinput(delta.rows(), n_in);
        kernels::dense_grad_input(exec, delta, weights_of(params, spec, l), dinput);
        // Through the activation of layer l-1.
        const auto& z = cache.pre[l - 1].values();
        const auto& a = cache.inputs[l].values();
        auto& d = dinput.values();
        if (spec.activation == Activation::relu) {
            for (std::size_t k = 0; k < d.size(); ++k)
                if (!(z[k] > 0.0)) d[k] = 0.0;
        } else {
            for (std::size_t k = 0; k < d.size(); ++k) d[k] *= 1.0 - a[k] * a[k];
        }
        delta = std::move(dinput);
    }
    return grad;
}

void SgdHyper::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("sgd.learning_rate", "must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd.momentum", "must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd.weight_decay", "must be >= 0");
}

void sgd_step(ParamVector& params, const ParamVector& grad, MomentumState& state,
              const SgdHyper& hyper) {
    if (grad.size() != params.size())
        throw ShapeError("sgd_step: gradient has " + std::to_string(grad.size()) +
                         " entries, parameters have " + std::to_string(params.size()));
    auto& v = state.velocity;
    if (v.empty()) v.assign(params.size(), 0.0);
    if (v.size() != params.size()) throw ShapeError("sgd_step: momentum buffer size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        v[i] = hyper.momentum * v[i] + (grad[i] + hyper.weight_decay * params[i]);
        params[i] -= hyper.learning_rate * v[i];
    }
}

}  // namespace fedgkd

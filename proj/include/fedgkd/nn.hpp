#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fedgkd/kernels.hpp"
#include "fedgkd/matrix.hpp"

namespace fedgkd {

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Architecture of a fully connected network: input width, hidden widths, class count.
/// Every layer but the last applies the activation; the last produces raw logits.
struct MlpSpec {
    std::vector<std::size_t> layer_widths;
    Activation activation = Activation::relu;

    std::size_t num_layers() const noexcept { return layer_widths.size() - 1; }
    std::size_t input_width() const noexcept { return layer_widths.front(); }
    std::size_t output_width() const noexcept { return layer_widths.back(); }

    /// sum_l (w[l] * w[l+1] + w[l+1])
    std::size_t param_count() const noexcept;
    /// Offset of layer l's (out x in) weight block; its bias block follows directly.
    std::size_t weight_offset(std::size_t layer) const noexcept;
    std::size_t bias_offset(std::size_t layer) const noexcept;

    /// Throws ConfigError unless there are >= 2 widths, all >= 1.
    void validate() const;

    bool operator==(const MlpSpec&) const = default;
};

/// Flat parameter vector: for each layer, weights (out x in, row-major) then biases.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    bool all_finite() const noexcept;

    bool operator==(const ParamVector&) const = default;

private:
    std::vector<double> values_;
};

double l2_norm(const ParamVector& v);
double l2_distance(const ParamVector& a, const ParamVector& b);

/// Throws ShapeError if params do not have spec.param_count() entries.
void check_params(const ParamVector& params, const MlpSpec& spec);

/// Everything backprop needs from one forward pass.
struct ForwardCache {
    // inputs[l] feeds layer l; inputs[0] is the batch itself.
    std::vector<Matrix> inputs;
    // pre[l] is layer l's pre-activation; pre.back() holds the logits.
    std::vector<Matrix> pre;

    const Matrix& logits() const noexcept { return pre.back(); }
    std::size_t batch_size() const noexcept { return inputs.front().rows(); }
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
/// Deterministic in (spec, seed).
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

ForwardCache forward(const ParamVector& params, const MlpSpec& spec, const Matrix& batch_x,
                     Exec exec = Exec::parallel);

/// Max-shifted softmax of logits / temperature. Throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

/// Reverse-mode gradient of a scalar loss given its gradient with respect to the logits.
ParamVector backprop(const ForwardCache& cache, const ParamVector& params, const MlpSpec& spec,
                     const Matrix& dloss_dlogits, Exec exec = Exec::parallel);

struct SgdHyper {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-5;

    void validate() const;
};

struct MomentumState {
    std::vector<double> velocity;
};

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
/// An empty velocity buffer is treated as zeros.
void sgd_step(ParamVector& params, const ParamVector& grad, MomentumState& state,
              const SgdHyper& hyper);

}  // namespace fedgkd

#include "fedgkd/kernels.hpp"

#include <cassert>
#include <algorithm>
#include <cstddef>

namespace fedgkd::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

namespace serial {

void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> bias,
                   Matrix& out) {
    const std::size_t batch = in.rows(), n_in = in.cols(), n_out = out.cols();
    assert(out.rows() == batch && w.size() == n_out * n_in && bias.size() == n_out);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data() + b * n_in;
        for (std::size_t j = 0; j < n_out; ++j) {
            const double* wj = w.data() + j * n_in;
            double s = 0.0;
            for (std::size_t i = 0; i < n_in; ++i) s += x[i] * wj[i];
            out(b, j) = s + bias[j];
        }
    }
}

void dense_grad_params(const Matrix& dout, const Matrix& in, std::span<double> dw,
                       std::span<double> dbias) {
    const std::size_t batch = in.rows(), n_in = in.cols(), n_out = dout.cols();
    assert(dw.size() == n_out * n_in && dbias.size() == n_out);
    std::fill(dw.begin(), dw.end(), 0.0);
    std::fill(dbias.begin(), dbias.end(), 0.0);
    // Batch-outer for locality; each element still sums over b in increasing order.
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data() + b * n_in;
        for (std::size_t j = 0; j < n_out; ++j) {
            const double g = dout(b, j);
            double* dwj = dw.data() + j * n_in;
            for (std::size_t i = 0; i < n_in; ++i) dwj[i] += g * x[i];
            dbias[j] += g;
        }
    }
}

void dense_grad_input(const Matrix& dout, std::span<const double> w, Matrix& din) {
    const std::size_t batch = dout.rows(), n_out = dout.cols(), n_in = din.cols();
    assert(din.rows() == batch && w.size() == n_out * n_in);
    std::fill(din.values().begin(), din.values().end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        double* dx = din.data() + b * n_in;
        for (std::size_t j = 0; j < n_out; ++j) {
            const double g = dout(b, j);
            const double* wj = w.data() + j * n_in;
            for (std::size_t i = 0; i < n_in; ++i) dx[i] += g * wj[i];
        }
    }
}

}  // namespace serial

namespace omp {

void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> bias,
                   Matrix& out) {
    const std::size_t batch = in.rows(), n_in = in.cols(), n_out = out.cols();
    assert(out.rows() == batch && w.size() == n_out * n_in && bias.size() == n_out);
    const bool big = batch * n_in * n_out >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data() + b * n_in;
        for (std::size_t j = 0; j < n_out; ++j) {
            const double* wj = w.data() + j * n_in;
            double s = 0.0;
            for (std::size_t i = 0; i < n_in; ++i) s += x[i] * wj[i];
            out(b, j) = s + bias[j];
        }
    }
}

void dense_grad_params(const Matrix& dout, const Matrix& in, std::span<double> dw,
                       std::span<double> dbias) {
    const std::size_t batch = in.rows(), n_in = in.cols(), n_out = dout.cols();
    assert(dw.size() == n_out * n_in && dbias.size() == n_out);
    const bool big = batch * n_in * n_out >= kParallelWork;
    // Each thread owns whole output rows of dw, so no reduction is needed.
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t j = 0; j < n_out; ++j) {
        double* dwj = dw.data() + j * n_in;
        std::fill(dwj, dwj + n_in, 0.0);
        double db = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double g = dout(b, j);
            const double* x = in.data() + b * n_in;
            for (std::size_t i = 0; i < n_in; ++i) dwj[i] += g * x[i];
            db += g;
        }
        dbias[j] = db;
    }
}

void dense_grad_input(const Matrix& dout, std::span<const double> w, Matrix& din) {
    const std::size_t batch = dout.rows(), n_out = dout.cols(), n_in = din.cols();
    assert(din.rows() == batch && w.size() == n_out * n_in);
    const bool big = batch * n_in * n_out >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t b = 0; b < batch; ++b) {
        double* dx = din.data() + b * n_in;
        std::fill(dx, dx + n_in, 0.0);
        for (std::size_t j = 0; j < n_out; ++j) {
            const double g = dout(b, j);
            const double* wj = w.data() + j * n_in;
            for (std::size_t i = 0; i < n_in; ++i) dx[i] += g * wj[i];
        }
    }
}

}  // namespace omp

}  // namespace fedgkd::kernels

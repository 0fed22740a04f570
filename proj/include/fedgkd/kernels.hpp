#pragma once

// Dense-layer kernels in two flavours: a serial reference and an OpenMP version.
// Both accumulate every output element in the same index order, so they agree
// bit for bit regardless of thread count.
//
// Layout: weights are (out x in) row-major, activations are (batch x features).

#include <span>

#include "fedgkd/matrix.hpp"

namespace fedgkd {

enum class Exec { serial, parallel };

namespace kernels {

namespace serial {

/// out(b, j) = sum_i in(b, i) * w(j, i) + bias(j)
void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> bias,
                   Matrix& out);

/// dw(j, i) = sum_b dout(b, j) * in(b, i);  dbias(j) = sum_b dout(b, j).  Overwrites dw/dbias.
void dense_grad_params(const Matrix& dout, const Matrix& in, std::span<double> dw,
                       std::span<double> dbias);

/// din(b, i) = sum_j dout(b, j) * w(j, i)
void dense_grad_input(const Matrix& dout, std::span<const double> w, Matrix& din);

}  // namespace serial

namespace omp {

void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> bias,
                   Matrix& out);
void dense_grad_params(const Matrix& dout, const Matrix& in, std::span<double> dw,
                       std::span<double> dbias);
void dense_grad_input(const Matrix& dout, std::span<const double> w, Matrix& din);

}  // namespace omp

inline void dense_forward(Exec exec, const Matrix& in, std::span<const double> w,
                          std::span<const double> bias, Matrix& out) {
    exec == Exec::serial ? serial::dense_forward(in, w, bias, out)
                         : omp::dense_forward(in, w, bias, out);
}

inline void dense_grad_params(Exec exec, const Matrix& dout, const Matrix& in, std::span<double> dw,
                              std::span<double> dbias) {
    exec == Exec::serial ? serial::dense_grad_params(dout, in, dw, dbias)
                         : omp::dense_grad_params(dout, in, dw, dbias);
}

inline void dense_grad_input(Exec exec, const Matrix& dout, std::span<const double> w,
                             Matrix& din) {
    exec == Exec::serial ? serial::dense_grad_input(dout, w, din)
                         : omp::dense_grad_input(dout, w, din);
}

}  // namespace kernels
}  // namespace fedgkd

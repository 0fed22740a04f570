#include <doctest.h>
#include <omp.h>

#include <random>

#include "fedgkd/kernels.hpp"
#include "fedgkd/nn.hpp"
#include "test_util.hpp"

using namespace fedgkd;

namespace {

struct ThreadScope {
    int saved = omp_get_max_threads();
    explicit ThreadScope(int n) { omp_set_num_threads(n); }
    ~ThreadScope() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("parallel dense kernels match the serial reference bit for bit") {
    ThreadScope threads(4);
    std::mt19937_64 rng(1);
    for (auto [batch, n_in, n_out] : {std::tuple{3, 2, 5}, {257, 64, 96}, {1024, 128, 33}}) {
        const Matrix in = testutil::random_matrix(batch, n_in, rng);
        const Matrix dout = testutil::random_matrix(batch, n_out, rng);
        const Matrix wm = testutil::random_matrix(n_out, n_in, rng);
        const Matrix bm = testutil::random_matrix(1, n_out, rng);

        Matrix out_s(batch, n_out), out_p(batch, n_out);
        kernels::serial::dense_forward(in, wm.values(), bm.values(), out_s);
        kernels::omp::dense_forward(in, wm.values(), bm.values(), out_p);
        CHECK(out_s == out_p);

        std::vector<double> dw_s(n_out * n_in), dw_p(n_out * n_in, 7.0), db_s(n_out), db_p(n_out, 7.0);
        kernels::serial::dense_grad_params(dout, in, dw_s, db_s);
        kernels::omp::dense_grad_params(dout, in, dw_p, db_p);
        CHECK(dw_s == dw_p);
        CHECK(db_s == db_p);

        Matrix din_s(batch, n_in), din_p(batch, n_in, 3.0);
        kernels::serial::dense_grad_input(dout, wm.values(), din_s);
        kernels::omp::dense_grad_input(dout, wm.values(), din_p);
        CHECK(din_s == din_p);
    }
}

TEST_CASE("serial dense_forward computes x W^T + b") {
    Matrix in(1, 2);
    in(0, 0) = 1.0;
    in(0, 1) = 2.0;
    const std::vector<double> w = {1.0, 10.0, 100.0, 1000.0};  // rows (1,10), (100,1000)
    const std::vector<double> b = {0.5, -0.5};
    Matrix out(1, 2);
    kernels::serial::dense_forward(in, w, b, out);
    CHECK(out(0, 0) == 21.5);
    CHECK(out(0, 1) == 2099.5);
}

TEST_CASE("forward and backprop agree across execution modes and thread counts") {
    std::mt19937_64 rng(2);
    const MlpSpec spec{{16, 64, 64, 10}, Activation::relu};
    const ParamVector w = testutil::random_params(spec, rng, 0.2);
    const Matrix x = testutil::random_matrix(300, 16, rng);
    const Matrix up = testutil::random_matrix(300, 10, rng);

    const auto ref_cache = forward(w, spec, x, Exec::serial);
    const ParamVector ref_grad = backprop(ref_cache, w, spec, up, Exec::serial);
    for (int threads : {1, 2, 3, 8}) {
        ThreadScope scope(threads);
        const auto cache = forward(w, spec, x, Exec::parallel);
        CHECK(cache.logits() == ref_cache.logits());
        CHECK(backprop(cache, w, spec, up, Exec::parallel) == ref_grad);
    }
}

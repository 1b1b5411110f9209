#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "rgi/graph.hpp"
#include "rgi/tape.hpp"

using rgi::Tape;
using rgi::Tensor;

namespace {

// Checks every watched input of a scalar-valued expression against central
// finite differences. `eval` must be pure in its inputs.
double max_grad_error(
    const std::function<Tensor<double>(Tape<double>*, std::vector<Tensor<double>>&)>& eval,
    std::vector<Tensor<double>> inputs) {
    Tape<double> tape;
    std::vector<Tensor<double>> bound = inputs;
    for (auto& t : bound) t = tape.watch(t);
    auto grads = tape.backward(eval(&tape, bound));

    double worst = 0.0;
    for (size_t which = 0; which < inputs.size(); ++which) {
        const auto& analytic = grads.at(bound[which].node());
        for (int64_t i = 0; i < inputs[which].size(); ++i) {
            auto f = [&](const std::vector<double>& x) {
                std::vector<Tensor<double>> probe = inputs;
                probe[which] = Tensor<double>(probe[which].rows(), probe[which].cols(), x);
                return eval(nullptr, probe)(0, 0);
            };
            const double fd = oracle::fd_partial(f, inputs[which].values(), static_cast<size_t>(i));
            worst = std::max(worst, oracle::rel_err(analytic.data()[i], fd));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("matmul identity and hand case") {
    Tensor<double> eye(2, 2, {1, 0, 0, 1});
    Tensor<double> b(2, 3, {1, 2, 3, 4, 5, 6});
    REQUIRE(rgi::ad::matmul<double>(nullptr, eye, b).values() == b.values());

    Tensor<double> row(1, 2, {1, 2});
    Tensor<double> col(2, 1, {3, 4});
    REQUIRE(rgi::ad::matmul<double>(nullptr, row, col)(0, 0) == 11.0);

    REQUIRE_THROWS_AS(rgi::ad::matmul<double>(nullptr, b, row), rgi::ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
    rgi::Rng rng(101);
    auto a = oracle::random_tensor(4, 3, rng);
    auto b = oracle::random_tensor(3, 5, rng);
    const double err = max_grad_error(
        [](Tape<double>* t, std::vector<Tensor<double>>& in) {
            return rgi::ad::sum_squares(t, rgi::ad::matmul(t, in[0], in[1]));
        },
        {a, b});
    REQUIRE(err <= 1e-6);
}

TEST_CASE("matmul_tn gradients match finite differences") {
    rgi::Rng rng(102);
    auto a = oracle::random_tensor(5, 3, rng);
    auto b = oracle::random_tensor(5, 4, rng);
    const double err = max_grad_error(
        [](Tape<double>* t, std::vector<Tensor<double>>& in) {
            return rgi::ad::sum_squares(t, rgi::ad::matmul_tn(t, in[0], in[1]));
        },
        {a, b});
    REQUIRE(err <= 1e-6);
}

TEST_CASE("relu forward cases") {
    Tensor<double> x(1, 2, {-1, 2});
    REQUIRE(rgi::ad::relu<double>(nullptr, x).values() == std::vector<double>{0, 2});

    Tensor<double> neg = Tensor<double>::full(3, 3, -2.0);
    const auto out = rgi::ad::relu<double>(nullptr, neg);
    for (int64_t i = 0; i < out.size(); ++i) REQUIRE(out.data()[i] == 0.0);
}

TEST_CASE("relu gradient: zero on the negative side, matches FD off the kink") {
    Tape<double> tape;
    Tensor<double> neg = Tensor<double>::full(2, 2, -1.0);
    auto bound = tape.watch(neg);
    auto grads = tape.backward(rgi::ad::sum(&tape, rgi::ad::relu(&tape, bound)));
    for (int64_t i = 0; i < 4; ++i) REQUIRE(grads.at(bound.node()).data()[i] == 0.0);

    rgi::Rng rng(103);
    auto a = oracle::random_tensor(4, 4, rng);
    double* p = a.mut();
    for (int64_t i = 0; i < a.size(); ++i) {
        if (std::abs(p[i]) < 1e-3) p[i] = 0.5;  // keep FD probes on one side of the kink
    }
    const double err = max_grad_error(
        [](Tape<double>* t, std::vector<Tensor<double>>& in) {
            return rgi::ad::sum_squares(t, rgi::ad::relu(t, in[0]));
        },
        {a});
    REQUIRE(err <= 1e-6);
}

TEST_CASE("batch_norm standardizes a two-row column exactly") {
    Tensor<double> x(2, 1, {1, 3});
    Tensor<double> gamma = Tensor<double>::full(1, 1, 1.0);
    Tensor<double> beta(1, 1);
    const auto out = rgi::ad::batch_norm<double>(nullptr, x, gamma, beta, 0.0);
    REQUIRE(out(0, 0) == Catch::Approx(-1.0));
    REQUIRE(out(1, 0) == Catch::Approx(1.0));
}

TEST_CASE("batch_norm maps a constant column to zero") {
    Tensor<double> x = Tensor<double>::full(4, 2, 7.0);
    Tensor<double> gamma = Tensor<double>::full(1, 2, 1.0);
    Tensor<double> beta(1, 2);
    const auto out = rgi::ad::batch_norm<double>(nullptr, x, gamma, beta, 1e-5);
    for (int64_t i = 0; i < out.size(); ++i) REQUIRE(out.data()[i] == 0.0);
}

TEST_CASE("batch_norm rejects single-row batches") {
    Tensor<double> x(1, 2, {1, 2});
    Tensor<double> gamma = Tensor<double>::full(1, 2, 1.0);
    Tensor<double> beta(1, 2);
    REQUIRE_THROWS_AS(rgi::ad::batch_norm<double>(nullptr, x, gamma, beta, 1e-5),
                      rgi::BatchTooSmall);
}

TEST_CASE("batch_norm output statistics and gradients on a random batch") {
    rgi::Rng rng(104);
    auto x = oracle::random_tensor(6, 4, rng, 2.0);
    Tensor<double> gamma = Tensor<double>::full(1, 4, 1.0);
    Tensor<double> beta(1, 4);
    const auto out = rgi::ad::batch_norm<double>(nullptr, x, gamma, beta, 1e-5);
    for (int64_t j = 0; j < 4; ++j) {
        double mean = 0;
        for (int64_t i = 0; i < 6; ++i) mean += out(i, j);
        mean /= 6;
        REQUIRE(std::abs(mean) <= 1e-7);
        double var = 0;
        for (int64_t i = 0; i < 6; ++i) var += (out(i, j) - mean) * (out(i, j) - mean);
        var /= 6;  // biased, matching the normalization statistics
        REQUIRE(var == Catch::Approx(1.0).margin(1e-4));
    }

    auto g = oracle::random_tensor(1, 4, rng, 0.5);
    auto b = oracle::random_tensor(1, 4, rng, 0.5);
    auto target = oracle::random_tensor(6, 4, rng);
    const double err = max_grad_error(
        [&target](Tape<double>* t, std::vector<Tensor<double>>& in) {
            return rgi::ad::mse(t, rgi::ad::batch_norm(t, in[0], in[1], in[2], 1e-5), target);
        },
        {x, g, b});
    REQUIRE(err <= 1e-5);
}

TEST_CASE("layer_norm gradients match finite differences") {
    rgi::Rng rng(105);
    auto x = oracle::random_tensor(5, 6, rng, 2.0);
    auto g = oracle::random_tensor(1, 6, rng, 0.5);
    auto b = oracle::random_tensor(1, 6, rng, 0.5);
    auto target = oracle::random_tensor(5, 6, rng);
    const double err = max_grad_error(
        [&target](Tape<double>* t, std::vector<Tensor<double>>& in) {
            return rgi::ad::mse(t, rgi::ad::layer_norm(t, in[0], in[1], in[2], 1e-5), target);
        },
        {x, g, b});
    REQUIRE(err <= 1e-5);
}

TEST_CASE("dropout is the identity at p=0 and in eval mode") {
    rgi::Rng rng(106);
    auto x = oracle::random_tensor(3, 3, rng);
    rgi::Rng r1(1);
    REQUIRE(rgi::ad::dropout<double>(nullptr, x, 0.0, r1, true).values() == x.values());
    REQUIRE(rgi::ad::dropout<double>(nullptr, x, 0.9, r1, false).values() == x.values());
    REQUIRE_THROWS_AS(rgi::ad::dropout<double>(nullptr, x, 1.0, r1, true),
                      rgi::InvalidProbability);
}

TEST_CASE("dropout keeps about 1-p of the mass") {
    const int64_t n = 100000;
    Tensor<double> x = Tensor<double>::full(n, 1, 1.0);
    rgi::Rng rng(107);
    const auto out = rgi::ad::dropout<double>(nullptr, x, 0.5, rng, true);
    int64_t survivors = 0;
    double sum = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (out.data()[i] != 0.0) ++survivors;
        sum += out.data()[i];
    }
    const double survivor_frac = static_cast<double>(survivors) / static_cast<double>(n);
    REQUIRE(std::abs(survivor_frac - 0.5) <= 0.01);
    REQUIRE(std::abs(sum / static_cast<double>(n) - 1.0) <= 0.02);  // E[out] == input
}

TEST_CASE("dropout gradient uses the recorded mask") {
    rgi::Rng rng(108);
    auto x = oracle::random_tensor(6, 4, rng);
    const double err = max_grad_error(
        [](Tape<double>* t, std::vector<Tensor<double>>& in) {
            rgi::Rng mask_rng(99);  // identical mask on every call
            return rgi::ad::sum_squares(t, rgi::ad::dropout(t, in[0], 0.4, mask_rng, true));
        },
        {x});
    REQUIRE(err <= 1e-6);
}

TEST_CASE("spmm gradient flows through the operator transpose") {
    rgi::Rng rng(109);
    const auto edges = oracle::random_edges(8, 0.4, rng);
    const rgi::SparseGraph g = rgi::build_csr(edges, 8);
    for (rgi::ShiftKind kind : {rgi::ShiftKind::MeanAdjacency, rgi::ShiftKind::SymNormAdjacency,
                                rgi::ShiftKind::SymNormLaplacian}) {
        const auto s = rgi::shift_operator(g, kind);
        auto u = oracle::random_tensor(8, 3, rng);
        const double err = max_grad_error(
            [&s, kind](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::sum_squares(t, rgi::ad::propagate(t, in[0], {kind, 2}, s));
            },
            {u});
        REQUIRE(err <= 1e-6);
    }
}

TEST_CASE("backward of sum is all-ones; backward of half sum-squares is x") {
    rgi::Rng rng(110);
    auto x = oracle::random_tensor(3, 4, rng);
    {
        Tape<double> tape;
        auto b = tape.watch(x);
        auto grads = tape.backward(rgi::ad::sum(&tape, b));
        for (int64_t i = 0; i < x.size(); ++i) REQUIRE(grads.at(b.node()).data()[i] == 1.0);
    }
    {
        Tape<double> tape;
        auto b = tape.watch(x);
        auto grads = tape.backward(rgi::ad::scale(&tape, rgi::ad::sum_squares(&tape, b), 0.5));
        for (int64_t i = 0; i < x.size(); ++i) {
            REQUIRE(grads.at(b.node()).data()[i] == Catch::Approx(x.data()[i]).margin(1e-15));
        }
    }
}

TEST_CASE("backward rejects non-scalar losses and consumed tapes") {
    rgi::Rng rng(111);
    auto x = oracle::random_tensor(2, 2, rng);
    Tape<double> tape;
    auto b = tape.watch(x);
    auto y = rgi::ad::relu(&tape, b);
    REQUIRE_THROWS_AS(tape.backward(y), rgi::ShapeError);
    auto loss = rgi::ad::sum(&tape, y);
    tape.backward(loss);
    REQUIRE_THROWS_AS(tape.backward(loss), rgi::TapeConsumed);
}

TEST_CASE("gradients accumulate when a tensor feeds two consumers") {
    // loss = sum(x) + sum_squares(x) -> grad = 1 + 2x
    rgi::Rng rng(112);
    auto x = oracle::random_tensor(3, 3, rng);
    Tape<double> tape;
    auto b = tape.watch(x);
    auto loss = rgi::ad::add(&tape, rgi::ad::sum(&tape, b), rgi::ad::sum_squares(&tape, b));
    auto grads = tape.backward(loss);
    for (int64_t i = 0; i < x.size(); ++i) {
        REQUIRE(grads.at(b.node()).data()[i] ==
                Catch::Approx(1.0 + 2.0 * x.data()[i]).margin(1e-14));
    }
}

TEST_CASE("identical seeds give bitwise-identical forwards and gradients") {
    auto run = [] {
        rgi::Rng rng(42);
        auto x = oracle::random_tensor(5, 4, rng);
        Tape<double> tape;
        auto b = tape.watch(x);
        rgi::Rng mask(7);
        auto y = rgi::ad::dropout(&tape, rgi::ad::relu(&tape, b), 0.3, mask, true);
        auto loss = rgi::ad::sum_squares(&tape, y);
        auto grads = tape.backward(loss);
        return std::make_pair(loss(0, 0), grads.at(b.node()).values());
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.first == b.first);
    REQUIRE(a.second == b.second);
}

TEST_CASE("backward is exactly linear under power-of-two loss scaling") {
    rgi::Rng rng(113);
    auto x = oracle::random_tensor(4, 4, rng);
    auto w = oracle::random_tensor(4, 4, rng);
    auto grad_scaled = [&](double a) {
        Tape<double> tape;
        auto bx = tape.watch(x);
        auto loss = rgi::ad::sum_squares(&tape, rgi::ad::matmul(&tape, bx, w));
        return tape.backward(rgi::ad::scale(&tape, loss, a)).at(bx.node()).values();
    };
    const auto g1 = grad_scaled(1.0);
    const auto g4 = grad_scaled(4.0);
    for (size_t i = 0; i < g1.size(); ++i) REQUIRE(g4[i] == 4.0 * g1[i]);
}

TEST_CASE("scalar ops: mse, softmax cross-entropy and binary cross-entropy") {
    rgi::Rng rng(114);
    {
        auto a = oracle::random_tensor(4, 3, rng);
        auto b = oracle::random_tensor(4, 3, rng);
        const double err = max_grad_error(
            [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::mse(t, in[0], in[1]);
            },
            {a, b});
        REQUIRE(err <= 1e-6);
    }
    {
        auto logits = oracle::random_tensor(6, 3, rng);
        const std::vector<int64_t> labels{0, 2, 1, 1, 0, 2};
        const double err = max_grad_error(
            [&labels](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::softmax_cross_entropy(t, in[0], labels);
            },
            {logits});
        REQUIRE(err <= 1e-6);
    }
    {
        auto logits = oracle::random_tensor(5, 4, rng);
        Tensor<double> targets(5, 4);
        double* p = targets.mut();
        for (int64_t i = 0; i < targets.size(); ++i) p[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double err = max_grad_error(
            [&targets](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::sigmoid_bce(t, in[0], targets);
            },
            {logits});
        REQUIRE(err <= 1e-6);
    }
}

TEST_CASE("center_columns and the broadcast bias op check out against FD") {
    rgi::Rng rng(115);
    {
        auto a = oracle::random_tensor(6, 3, rng);
        auto target = oracle::random_tensor(6, 3, rng);
        const double err = max_grad_error(
            [&target](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::mse(t, rgi::ad::center_columns(t, in[0]), target);
            },
            {a});
        REQUIRE(err <= 1e-6);
    }
    {
        auto a = oracle::random_tensor(5, 4, rng);
        auto v = oracle::random_tensor(1, 4, rng);
        const double err = max_grad_error(
            [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                return rgi::ad::sum_squares(t, rgi::ad::add_rowvec(t, in[0], in[1]));
            },
            {a, v});
        REQUIRE(err <= 1e-6);
    }
}

TEST_CASE("tensors created outside a tape carry no node") {
    Tensor<double> x(2, 2, {1, 2, 3, 4});
    REQUIRE(x.node() == -1);
    REQUIRE_FALSE(x.requires_grad());
    const auto y = rgi::ad::relu<double>(nullptr, x);
    REQUIRE(y.node() == -1);

    Tape<double> tape;
    const auto bound = tape.watch(x);
    REQUIRE(bound.node() >= 0);
    REQUIRE(bound.requires_grad());
    const auto z = rgi::ad::relu(&tape, bound);
    REQUIRE(z.node() > bound.node());
}

TEST_CASE("single precision tape runs end to end") {
    rgi::Rng rng(116);
    Tensor<float> x(3, 3);
    float* p = x.mut();
    for (int64_t i = 0; i < x.size(); ++i) p[i] = static_cast<float>(rng.normal());
    Tape<float> tape;
    auto b = tape.watch(x);
    auto loss = rgi::ad::sum_squares(&tape, rgi::ad::relu(&tape, b));
    auto grads = tape.backward(loss);
    REQUIRE(grads.at(b.node()).size() == 9);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmlab/errors.hpp"
#include "mmlab/nn.hpp"
#include "mmlab/random.hpp"

using namespace mmlab;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (auto& v : m.row(i)) v = rng.normal();
    return m;
}

// Straight-line affine chain, written independently of forward().
Matrix naive_logits(const MLPModel& model, const Matrix& x) {
    Matrix out(x.rows(), model.num_classes());
    for (std::size_t n = 0; n < x.rows(); ++n) {
        std::vector<double> a(x.row(n).begin(), x.row(n).end());
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& layer = model.layers[l];
            std::vector<double> z(layer.bias);
            for (std::size_t o = 0; o < z.size(); ++o)
                for (std::size_t i = 0; i < a.size(); ++i) z[o] += layer.weight(o, i) * a[i];
            if (l + 1 < model.layers.size()) {
                for (auto& v : z) v = model.activation == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
            }
            a = z;
        }
        for (std::size_t k = 0; k < a.size(); ++k) out(n, k) = a[k];
    }
    return out;
}

}  // namespace

TEST_CASE("forward of a zero-weight model returns the biases") {
    MLPModel model = make_zero_model({3, 5, 4}, Activation::relu);
    model.layers[1].bias = {0.5, -1.0, 2.0, 0.25};
    Matrix x = Matrix::from_rows({{1, 2, 3}, {-4, 5, 6}});
    const Matrix logits = forward(model, x).logits;
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t k = 0; k < 4; ++k) CHECK(logits(r, k) == model.layers[1].bias[k]);
}

TEST_CASE("identity single-layer model passes its input through") {
    MLPModel model = make_zero_model({2, 2}, Activation::relu);
    model.layers[0].weight(0, 0) = 1.0;
    model.layers[0].weight(1, 1) = 1.0;
    const Matrix logits = forward(model, Matrix::from_rows({{2, 3}})).logits;
    CHECK(logits(0, 0) == 2.0);
    CHECK(logits(0, 1) == 3.0);
}

TEST_CASE("forward matches a straight-line re-evaluation") {
    Rng rng(3);
    for (Activation act : {Activation::relu, Activation::tanh}) {
        const MLPModel model = make_random_model({5, 7, 6, 3}, act, rng);
        const Matrix x = random_matrix(4, 5, rng);
        const Matrix got = forward(model, x).logits;
        const Matrix want = naive_logits(model, x);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t k = 0; k < 3; ++k) CHECK(got(r, k) == doctest::Approx(want(r, k)).epsilon(1e-14));
    }
}

TEST_CASE("forward rejects a feature-width mismatch") {
    const MLPModel model = make_zero_model({3, 2}, Activation::relu);
    CHECK_THROWS_AS(forward(model, Matrix(2, 4)), DimensionError);
}

TEST_CASE("softmax_ce known values") {
    CHECK(softmax_ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0}}))[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(softmax_ce(Matrix::from_rows({{0, 0, 0}}), Matrix::from_rows({{1.0 / 3, 1.0 / 3, 1.0 / 3}}))[0] ==
          doctest::Approx(std::log(3.0)).epsilon(1e-15));
    // 40-digit evaluation of -sum t_k log softmax_k
    CHECK(softmax_ce(Matrix::from_rows({{2, -1, 0.5}}), Matrix::from_rows({{0.3, 0.3, 0.4}}))[0] ==
          doctest::Approx(1.741311296657157060211).epsilon(1e-14));
}

TEST_CASE("softmax_ce rejects invalid target rows") {
    CHECK_THROWS_AS(softmax_ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{0.7, 0.7}})), ContractError);
    CHECK_THROWS_AS(softmax_ce(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1.5, -0.5}})), ContractError);
    CHECK_THROWS_AS(softmax_ce(Matrix(1, 2), Matrix(1, 3)), DimensionError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    Rng rng(5);
    Matrix logits = random_matrix(50, 7, rng);
    for (std::size_t r = 0; r < 50; ++r) logits(r, r % 7) += 800.0;
    const Matrix p = softmax_rows(logits);
    for (std::size_t r = 0; r < 50; ++r) {
        double s = 0.0;
        for (double v : p.row(r)) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("ce toward the argmax shrinks to zero as the margin grows") {
    double prev = 1e300;
    for (double margin : {0.0, 1.0, 2.0, 5.0, 10.0, 40.0}) {
        const double l = softmax_ce(Matrix::from_rows({{margin, 0, 0}}), Matrix::from_rows({{1, 0, 0}}))[0];
        CHECK(l < prev);
        CHECK(l >= 0.0);
        prev = l;
    }
    CHECK(prev < 1e-15);
}

TEST_CASE("backward with all-zero weights is exactly zero") {
    Rng rng(7);
    const MLPModel model = make_random_model({4, 6, 3}, Activation::tanh, rng);
    const Matrix x = random_matrix(5, 4, rng);
    const auto fr = forward(model, x);
    const std::vector<int> labels{0, 1, 2, 0, 1};
    const std::vector<double> w(5, 0.0);
    CHECK(backward(model, fr.cache, fr.logits, one_hot(labels, 3), w).all_zero());
}

TEST_CASE("output-layer bias gradient of a single example is softmax minus target") {
    Rng rng(8);
    const MLPModel model = make_random_model({3, 4, 3}, Activation::relu, rng);
    const Matrix x = random_matrix(1, 3, rng);
    const auto fr = forward(model, x);
    const Matrix t = Matrix::from_rows({{0.2, 0.0, 0.8}});
    const std::vector<double> w{1.0};
    const Gradients g = backward(model, fr.cache, fr.logits, t, w);
    const Matrix p = softmax_rows(fr.logits);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g.bias[1][k] == doctest::Approx(p(0, k) - t(0, k)).epsilon(1e-14));
}

TEST_CASE("backward is linear in the per-example weights") {
    Rng rng(9);
    const MLPModel model = make_random_model({4, 5, 3}, Activation::relu, rng);
    for (std::size_t b = 1; b <= 4; ++b) {
        const Matrix x = random_matrix(b, 4, rng);
        std::vector<int> labels(b);
        std::vector<double> w(b);
        for (std::size_t i = 0; i < b; ++i) {
            labels[i] = static_cast<int>(i % 3);
            w[i] = rng.uniform();
        }
        const Matrix t = one_hot(labels, 3);
        const auto fr = forward(model, x);
        const Gradients whole = backward(model, fr.cache, fr.logits, t, w);

        Gradients sum = Gradients::zeros_like(model);
        for (std::size_t i = 0; i < b; ++i) {
            const Matrix xi = Matrix::from_rows({std::vector<double>(x.row(i).begin(), x.row(i).end())});
            const Matrix ti = Matrix::from_rows({std::vector<double>(t.row(i).begin(), t.row(i).end())});
            const auto fi = forward(model, xi);
            const std::vector<double> one{1.0};
            const Gradients gi = backward(model, fi.cache, fi.logits, ti, one);
            // per-example pass divides by 1, the batch pass by b
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                for (std::size_t r = 0; r < gi.weight[l].rows(); ++r)
                    for (std::size_t c = 0; c < gi.weight[l].cols(); ++c)
                        sum.weight[l](r, c) += w[i] * gi.weight[l](r, c) / static_cast<double>(b);
                for (std::size_t k = 0; k < gi.bias[l].size(); ++k)
                    sum.bias[l][k] += w[i] * gi.bias[l][k] / static_cast<double>(b);
            }
        }
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            for (std::size_t r = 0; r < sum.weight[l].rows(); ++r)
                for (std::size_t c = 0; c < sum.weight[l].cols(); ++c)
                    CHECK(whole.weight[l](r, c) == doctest::Approx(sum.weight[l](r, c)).epsilon(1e-12));
            for (std::size_t k = 0; k < sum.bias[l].size(); ++k)
                CHECK(whole.bias[l][k] == doctest::Approx(sum.bias[l][k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward rejects weights outside [0, 1] and a missing cache") {
    const MLPModel model = make_zero_model({2, 2}, Activation::relu);
    const auto fr = forward(model, Matrix(1, 2));
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(backward(model, fr.cache, fr.logits, Matrix::from_rows({{1, 0}}), bad), ContractError);
    const std::vector<double> ok{1.0};
    CHECK_THROWS_AS(backward(model, ForwardCache{}, fr.logits, Matrix::from_rows({{1, 0}}), ok), ContractError);
}

TEST_CASE("plain sgd step and lr zero") {
    Rng rng(10);
    MLPModel model = make_random_model({3, 2}, Activation::relu, rng);
    const MLPModel before = model;
    Gradients g = Gradients::zeros_like(model);
    g.weight[0](0, 1) = 2.0;
    g.bias[0][1] = -1.0;

    auto frozen = OptimizerState::for_model(model, 0.0, 0.9, 0.01);
    sgd_step(model, frozen, g);
    CHECK(model.layers[0].weight == before.layers[0].weight);
    CHECK(model.layers[0].bias == before.layers[0].bias);

    auto plain = OptimizerState::for_model(model, 0.1, 0.0, 0.0);
    sgd_step(model, plain, g);
    CHECK(model.layers[0].weight(0, 1) == before.layers[0].weight(0, 1) - 0.1 * 2.0);
    CHECK(model.layers[0].bias[1] == before.layers[0].bias[1] + 0.1);
    CHECK(model.layers[0].weight(1, 0) == before.layers[0].weight(1, 0));
}

TEST_CASE("two momentum steps match the hand-unrolled recurrence") {
    const double lr = 0.1, mu = 0.9, g = 0.5;
    for (bool nesterov : {true, false}) {
        MLPModel model = make_zero_model({1, 1}, Activation::relu);
        Gradients grads = Gradients::zeros_like(model);
        grads.weight[0](0, 0) = g;
        auto opt = OptimizerState::for_model(model, lr, mu, 0.0, nesterov);
        sgd_step(model, opt, grads);
        sgd_step(model, opt, grads);
        // v1 = g, v2 = mu g + g. Nesterov steps with g + mu v_t, classical with v_t.
        const double want = nesterov ? -lr * ((g + mu * g) + (g + mu * (mu * g + g))) : -lr * (g + (mu * g + g));
        CHECK(model.layers[0].weight(0, 0) == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("weight decay touches weights only and only when enabled") {
    MLPModel a = make_zero_model({2, 2}, Activation::relu);
    a.layers[0].weight(0, 0) = 1.0;
    a.layers[0].bias[0] = 1.0;
    MLPModel b = a;
    const Gradients zero = Gradients::zeros_like(a);
    auto plain = OptimizerState::for_model(a, 0.1, 0.0, 0.0);
    auto decayed = OptimizerState::for_model(b, 0.1, 0.0, 0.5);
    sgd_step(a, plain, zero);
    sgd_step(b, decayed, zero);
    CHECK(a.layers[0].weight(0, 0) == 1.0);
    CHECK(b.layers[0].weight(0, 0) == doctest::Approx(1.0 - 0.1 * 2 * 0.5));
    CHECK(b.layers[0].bias[0] == 1.0);
}

TEST_CASE("initialisation scales and zero biases") {
    Rng rng(21);
    const MLPModel relu = make_random_model({400, 300, 2}, Activation::relu, rng);
    const double he = std::sqrt(6.0 / 400.0);
    double max_abs = 0.0;
    for (std::size_t r = 0; r < 300; ++r)
        for (double v : relu.layers[0].weight.row(r)) max_abs = std::max(max_abs, std::abs(v));
    CHECK(max_abs <= he);
    CHECK(max_abs > 0.95 * he);
    for (double v : relu.layers[0].bias) CHECK(v == 0.0);
    CHECK(relu.parameter_count() == 400 * 300 + 300 + 300 * 2 + 2);
}

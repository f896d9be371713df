#include <doctest.h>

#include <sstream>

#include "mmlab/errors.hpp"
#include "mmlab/noisegen.hpp"
#include "mmlab/trainer.hpp"

using namespace mmlab;

namespace {

NoisySplit small_split(int classes, double std, int level = 0) {
    GaussianTaskSpec s;
    s.num_classes = classes;
    s.dim = 6;
    s.within_std = std;
    s.examples_per_class = 60;
    s.val_per_class = 40;
    s.seed = 31;
    return inject_blue(make_clean_task(s), level, 2);
}

TrainConfig quick_config(Method method = Method::vanilla) {
    TrainConfig c;
    c.method.method = method;
    c.model.hidden = {16};
    c.max_epochs = 8;
    c.batch_size = 16;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("separable two-class task trains to high validation accuracy") {
    const NoisySplit split = small_split(2, 0.5);
    TrainConfig c = quick_config();
    c.max_epochs = 20;
    const RunResult r = train_run(split, c);
    CHECK(r.final_accuracy >= 0.95);
    CHECK(r.peak_accuracy >= r.final_accuracy);
}

TEST_CASE("lr zero leaves the history flat") {
    const NoisySplit split = small_split(4, 1.0);
    TrainConfig c = quick_config(Method::mentormix);
    c.lr = 0.0;
    const RunResult r = train_run(split, c);
    REQUIRE(r.eval_history.size() > 1);
    for (const auto& e : r.eval_history) {
        CHECK(e.val_acc == r.eval_history.front().val_acc);
        CHECK(e.train_acc == r.eval_history.front().train_acc);
    }
    CHECK(r.peak_accuracy == r.final_accuracy);
    CHECK(r.drop == 0.0);
}

TEST_CASE("runs are reproducible for every method") {
    const NoisySplit split = small_split(4, 1.0, 40);
    for (Method m : {Method::vanilla, Method::mixup, Method::mentornet, Method::mentormix}) {
        const TrainConfig c = quick_config(m);
        std::ostringstream la, lb;
        const RunResult a = train_run(split, c, &la);
        const RunResult b = train_run(split, c, &lb);
        CHECK(a == b);
        CHECK(la.str() == lb.str());
        CHECK(!la.str().empty());
    }
}

TEST_CASE("peak, final and drop follow the history") {
    RunResult r;
    r.eval_history = {{0, 0.1, 0.5}, {1, 0.2, 0.8}, {2, 0.3, 0.7}, {3, 0.4, 0.6}};
    summarize(r);
    CHECK(r.peak_accuracy == 0.8);
    CHECK(r.final_accuracy == 0.6);
    CHECK(r.drop == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(relative_drop(0.0, 0.0) == 0.0);
}

TEST_CASE("evaluate: constant predictor, perfect predictor, shift invariance") {
    GaussianTaskSpec s;
    s.num_classes = 5;
    s.dim = 5;
    s.examples_per_class = 20;
    s.val_per_class = 20;
    s.seed = 3;
    const CleanTask task = make_clean_task(s);

    MLPModel constant = make_zero_model({5, 5}, Activation::relu);
    constant.layers[0].bias[3] = 1.0;
    CHECK(evaluate(constant, task.val) == doctest::Approx(0.2));

    // ties everywhere resolve to class 0
    const MLPModel flat = make_zero_model({5, 5}, Activation::relu);
    CHECK(evaluate(flat, task.val) == doctest::Approx(0.2));

    std::vector<LabeledExample> onehots;
    for (int c = 0; c < 5; ++c) {
        LabeledExample e;
        e.features.assign(5, 0.0);
        e.features[static_cast<std::size_t>(c)] = 1.0;
        e.observed_label = c;
        onehots.push_back(e);
    }
    MLPModel identity = make_zero_model({5, 5}, Activation::relu);
    for (std::size_t k = 0; k < 5; ++k) identity.layers[0].weight(k, k) = 1.0;
    CHECK(evaluate(identity, onehots) == 1.0);
    for (auto& b : identity.layers[0].bias) b += 17.5;
    CHECK(evaluate(identity, onehots) == 1.0);
}

TEST_CASE("divergence is reported with its step") {
    const NoisySplit split = small_split(3, 1.0);
    TrainConfig c = quick_config();
    c.lr = 1e305;
    try {
        train_run(split, c);
        FAIL("expected DivergedError");
    } catch (const DivergedError& e) {
        CHECK(e.step() >= 1);
    }
}

TEST_CASE("train config validation") {
    TrainConfig c = quick_config(Method::mixup);
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = quick_config();
    c.lr = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = quick_config();
    c.max_epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("weight decay changes the trajectory only when enabled") {
    const NoisySplit split = small_split(3, 1.0);
    TrainConfig c = quick_config();
    const RunResult plain = train_run(split, c);
    c.weight_decay = 0.0;
    CHECK(train_run(split, c) == plain);
    c.weight_decay = 0.05;
    CHECK(train_run(split, c).fingerprint != plain.fingerprint);
    CHECK(train_run(split, c).eval_history != plain.eval_history);
}

#include <doctest.h>

#include "mmlab/config.hpp"
#include "mmlab/errors.hpp"

using namespace mmlab;

TEST_CASE("empty config yields defaults") {
    const AppConfig c = parse_config("{}");
    CHECK(c.master_seed == 1);
    CHECK(c.task.num_classes == 10);
    CHECK(c.noise.level == 40);
    CHECK(c.train.method.method == Method::mentormix);
    CHECK(c.sweep.seeds.size() == 3);
}

TEST_CASE("sections override defaults") {
    const AppConfig c = parse_config(R"({
  "master_seed": 9,
  "task": {"classes": 4, "dim": 3},
  "noise": {"type": "red", "level": 20},
  "model": {"hidden": [16, 8], "activation": "tanh"},
  "train": {"method": "mixup", "alpha": 2, "lr": 0.05}
})");
    CHECK(c.master_seed == 9);
    CHECK(c.task.num_classes == 4);
    CHECK(c.task.dim == 3);
    CHECK(c.noise.type == NoiseType::red);
    CHECK(c.train.model.hidden == std::vector<std::size_t>{16, 8});
    CHECK(c.train.model.activation == Activation::tanh);
    CHECK(c.train.method.method == Method::mixup);
    CHECK(c.train.method.alpha == 2.0);
    CHECK(c.train.lr == 0.05);
}

TEST_CASE("unknown keys are rejected with their line") {
    try {
        parse_config("{\n  \"train\": {\n    \"lr\": 0.1,\n    \"lrr\": 0.2\n  }\n}");
        FAIL("expected ConfigFileError");
    } catch (const ConfigFileError& e) {
        CHECK(e.line() == 4);
        CHECK(e.message().find("lrr") != std::string::npos);
    }
}

TEST_CASE("wrong value types are rejected with their line") {
    try {
        parse_config("{\n  \"noise\": {\"level\": \"forty\"}\n}");
        FAIL("expected ConfigFileError");
    } catch (const ConfigFileError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("malformed json reports the line of the fault") {
    try {
        parse_config("{\n  \"master_seed\": 1,\n  \"task\": {\"dim\": 4,}\n}");
        FAIL("expected ConfigFileError");
    } catch (const ConfigFileError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("semantic errors surface as config errors") {
    CHECK_THROWS_AS(parse_config(R"({"noise": {"level": 25}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"train": {"method": "dropout"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"task": {"classes": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"train": {"lr": -1}})"), ConfigError);
}

TEST_CASE("overrides take dotted paths or unique leaf names") {
    CHECK(parse_config("{}", {"lr=0"}).train.lr == 0.0);
    CHECK(parse_config("{}", {"train.batch_size=8"}).train.batch_size == 8);
    CHECK(parse_config("{}", {"noise.type=red"}).noise.type == NoiseType::red);
    CHECK(parse_config("{}", {"sweep.seeds=[4,5]"}).sweep.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK_THROWS_AS(parse_config("{}", {"nonsense=1"}), ConfigError);
    CHECK_THROWS_AS(parse_config("{}", {"lr=fast"}), ConfigError);
    CHECK(parse_config("{}", {"alpha=2"}).train.method.alpha == 2.0);  // run settings win over sweep grids
    CHECK(parse_config("{}", {"sweep.grid.mixup.alpha=[1]"}).sweep.mixup.alpha == std::vector<double>{1.0});
    CHECK_THROWS_AS(parse_config("{}", {"lr"}), ConfigError);
}

TEST_CASE("presets") {
    const AppConfig grid = load_config("paper_grid");
    const SweepSpec spec = make_sweep_spec(grid);
    std::size_t mentormix_settings = 0;
    for (const auto& g : spec.methods)
        if (g.method == Method::mentormix) mentormix_settings = expand_grid(g).size();
    CHECK(mentormix_settings == 9);
    CHECK(spec.levels.size() == 10);
    CHECK(spec.methods.size() == 4);
    CHECK_NOTHROW(load_config("quick"));
    CHECK_THROWS_AS(load_config("no-such-preset-or-file"), ConfigError);
}

TEST_CASE("json rendering round-trips and provenance ignores scheduling") {
    const AppConfig c = parse_config(R"({"master_seed": 3, "train": {"gamma_p": 70}})");
    CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
    AppConfig p = c;
    p.sweep.parallelism = 4;
    CHECK(provenance_json(p) == provenance_json(c));
    CHECK(config_to_json(p) != config_to_json(c));
}

TEST_CASE("train config seed follows the master seed") {
    const AppConfig a = parse_config(R"({"master_seed": 3})");
    const AppConfig b = parse_config(R"({"master_seed": 4})");
    CHECK(make_train_config(a).seed != make_train_config(b).seed);
    CHECK(make_train_config(a).seed == make_train_config(parse_config(R"({"master_seed": 3})")).seed);
}

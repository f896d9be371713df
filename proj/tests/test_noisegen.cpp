#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "mmlab/errors.hpp"
#include "mmlab/noisegen.hpp"

using namespace mmlab;

namespace {

GaussianTaskSpec small_spec(int per_class = 40, std::uint64_t seed = 5) {
    GaussianTaskSpec s;
    s.num_classes = 10;
    s.dim = 8;
    s.examples_per_class = per_class;
    s.val_per_class = 10;
    s.seed = seed;
    return s;
}

std::map<int, int> label_histogram(const std::vector<LabeledExample>& xs) {
    std::map<int, int> h;
    for (const auto& e : xs) ++h[e.observed_label];
    return h;
}

// Class of each training example before noise; ids are assigned train-first.
int clean_label(const CleanTask& task, const LabeledExample& e) { return task.train.at(e.id).observed_label; }

std::string serialize(const NoisySplit& s) {
    std::ostringstream out;
    write_dataset(out, s);
    return out.str();
}

}  // namespace

TEST_CASE("clean task sizes and determinism") {
    GaussianTaskSpec s = small_spec(50);
    const CleanTask a = make_clean_task(s);
    CHECK(a.train.size() == 500);
    CHECK(a.val.size() == 100);
    const CleanTask b = make_clean_task(s);
    CHECK(serialize(inject_blue(a, 0, 1)) == serialize(inject_blue(b, 0, 1)));
    for (const auto& e : a.val) CHECK(e.provenance == Provenance::correct);
}

TEST_CASE("well-separated two-class task is solved by nearest class mean") {
    GaussianTaskSpec s;
    s.num_classes = 2;
    s.dim = 5;
    s.mean_scale = 3.0;
    s.within_std = 0.3;
    s.examples_per_class = 100;
    s.val_per_class = 200;
    s.seed = 9;
    const CleanTask task = make_clean_task(s);
    int hits = 0;
    for (const auto& e : task.val) hits += nearest_class_mean(task.class_means, e.features) == e.observed_label;
    CHECK(static_cast<double>(hits) / static_cast<double>(task.val.size()) >= 0.99);
}

TEST_CASE("degenerate task specs are config errors") {
    GaussianTaskSpec s = small_spec();
    s.num_classes = 1;
    CHECK_THROWS_AS(make_clean_task(s), ConfigError);
    s = small_spec();
    s.dim = 1;
    CHECK_THROWS_AS(make_clean_task(s), ConfigError);
    s = small_spec();
    s.examples_per_class = 0;
    CHECK_THROWS_AS(make_clean_task(s), ConfigError);
}

TEST_CASE("blue noise: zero level is the identity") {
    const CleanTask task = make_clean_task(small_spec());
    const NoisySplit split = inject_blue(task, 0, 3);
    REQUIRE(split.train.size() == task.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        CHECK(split.train[i].observed_label == task.train[i].observed_label);
        CHECK(split.train[i].features == task.train[i].features);
        CHECK(split.train[i].provenance == Provenance::correct);
    }
}

TEST_CASE("blue noise flips exactly round(p * size) per class") {
    const CleanTask task = make_clean_task(small_spec(50));
    const NoisySplit split = inject_blue(task, 20, 3);
    std::map<int, int> flipped;
    for (const auto& e : split.train) {
        if (e.provenance == Provenance::flipped) {
            ++flipped[e.provenance_arg];
            CHECK(e.observed_label != e.provenance_arg);
            CHECK(e.provenance_arg == clean_label(task, e));
        }
    }
    for (int c = 0; c < 10; ++c) CHECK(flipped[c] == 10);
}

TEST_CASE("noise rates are exact at every canonical level for both types") {
    const CleanTask task = make_clean_task(small_spec(40));
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, 4);
    for (int p : kCanonicalLevels) {
        for (const NoisySplit& split : {inject_blue(task, p, 6), inject_red(task, p, pool, 6)}) {
            std::map<int, int> bad;
            std::size_t total = 0;
            for (const auto& e : split.train) {
                if (e.provenance != Provenance::correct) {
                    ++bad[clean_label(task, e)];
                    ++total;
                }
            }
            for (int c = 0; c < 10; ++c) CHECK(bad[c] == corrupted_count(p, 40));
            CHECK(total * 100 == static_cast<std::size_t>(p) * split.train.size());
        }
    }
}

TEST_CASE("corrupted_count rounds to nearest") {
    CHECK(corrupted_count(20, 50) == 10);
    CHECK(corrupted_count(5, 30) == 2);  // 1.5 rounds up
    CHECK(corrupted_count(15, 10) == 2);
    CHECK(corrupted_count(0, 7) == 0);
}

TEST_CASE("blue and red keep their untouched halves") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, 8);
    const NoisySplit blue = inject_blue(task, 60, 2);
    const NoisySplit red = inject_red(task, 60, pool, 2);
    for (std::size_t i = 0; i < task.train.size(); ++i) {
        CHECK(blue.train[i].features == task.train[i].features);
        CHECK(red.train[i].observed_label == task.train[i].observed_label);
    }
    CHECK(label_histogram(blue.train) == label_histogram(task.train));
    CHECK(label_histogram(red.train) == label_histogram(blue.train));
}

TEST_CASE("injectors are reproducible under a fixed seed") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, 8);
    CHECK(serialize(inject_blue(task, 40, 17)) == serialize(inject_blue(task, 40, 17)));
    CHECK(serialize(inject_red(task, 40, pool, 17)) == serialize(inject_red(task, 40, pool, 17)));
    CHECK(serialize(inject_blue(task, 40, 17)) != serialize(inject_blue(task, 40, 18)));
}

TEST_CASE("non-canonical levels are rejected") {
    const CleanTask task = make_clean_task(small_spec());
    CHECK_THROWS_AS(inject_blue(task, 25, 1), ConfigError);
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, 8);
    CHECK_THROWS_AS(inject_red(task, 101, pool, 1), ConfigError);
}

TEST_CASE("red noise: class 40% of 50 replaces exactly 20 feature vectors") {
    const CleanTask task = make_clean_task(small_spec(50));
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 50, 8);
    const NoisySplit split = inject_red(task, 40, pool, 1);
    std::map<int, int> replaced;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const auto& e = split.train[i];
        if (e.provenance == Provenance::open_set) {
            ++replaced[e.observed_label];
            CHECK(pool.clusters.at(e.provenance_arg).nearest_class == e.observed_label);
            CHECK(e.features != task.train[i].features);
        }
    }
    for (int c = 0; c < 10; ++c) CHECK(replaced[c] == 20);
}

TEST_CASE("red noise with an undersized pool names the class") {
    const CleanTask task = make_clean_task(small_spec(50));
    const OpenSetPool pool = make_open_set_pool(task, 10, 1.5, 5, 8);
    try {
        inject_red(task, 40, pool, 1);
        FAIL("expected ResourceError");
    } catch (const ResourceError& e) {
        CHECK(std::string(e.what()).find("class") != std::string::npos);
    }
}

TEST_CASE("open-set pool covers every class and respects proximity") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 10, 8);
    std::set<int> covered;
    for (const auto& c : pool.clusters) {
        covered.insert(c.nearest_class);
        CHECK(nearest_class_mean(task.class_means, c.mean) == c.nearest_class);
        double dist = 0.0;
        for (std::size_t k = 0; k < c.mean.size(); ++k) {
            const double d = c.mean[k] - task.class_means(c.nearest_class, k);
            dist += d * d;
        }
        CHECK(std::sqrt(dist) == doctest::Approx(1.5).epsilon(1e-9));
    }
    CHECK(covered.size() == 10);
    CHECK_THROWS_AS(make_open_set_pool(task, 9, 1.5, 10, 8), ConfigError);
}

TEST_CASE("proximity zero puts cluster means on class means") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 10, 0.0, 4, 8);
    for (const auto& c : pool.clusters)
        for (std::size_t k = 0; k < c.mean.size(); ++k) CHECK(c.mean[k] == task.class_means(c.nearest_class, k));
}

TEST_CASE("far clusters are classified by their anchor class") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 20, 12.0, 30, 8);
    std::size_t hits = 0, total = 0;
    for (const auto& c : pool.clusters) {
        for (const auto& x : c.examples) {
            hits += nearest_class_mean(task.class_means, x) == c.nearest_class;
            ++total;
        }
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(total) > 0.9);
}

TEST_CASE("dataset files round-trip bit-exactly") {
    const CleanTask task = make_clean_task(small_spec());
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, 8);
    for (const NoisySplit& split : {inject_blue(task, 30, 4), inject_red(task, 30, pool, 4)}) {
        const std::string first = serialize(split);
        std::istringstream in(first);
        const NoisySplit back = read_dataset(in);
        CHECK(serialize(back) == first);
        CHECK(back.noise_level == 30);
        CHECK(back.train.size() == split.train.size());
        CHECK(back.train[7].features == split.train[7].features);
    }
}

TEST_CASE("dataset reader rejects malformed records") {
    std::istringstream no_header("0,train,1,0,-1,0.5,0.5\n");
    CHECK_THROWS(read_dataset(no_header));
}

TEST_CASE("format_double round-trips awkward values") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) CHECK(parse_double(format_double(v)) == v);
}

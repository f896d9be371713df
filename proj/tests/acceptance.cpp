// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// Usage: mmlab_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mmlab/config.hpp"
#include "mmlab/harness.hpp"
#include "mmlab/selfcheck.hpp"
#include "mmlab/trainer.hpp"

using namespace mmlab;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Benchmark task (m=10, d=20, 200/class) with the default model and schedule.
AppConfig benchmark_config() { return parse_config("{}"); }

Outcome from_check(const selfcheck::CheckResult& r) { return {r.passed, r.detail}; }

Outcome memorization() {
    const AppConfig cfg = benchmark_config();
    SweepSpec spec = make_sweep_spec(cfg);
    spec.seeds = {1, 2, 3};
    double train_acc = 0.0, drop = 0.0;
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
        const NoisySplit split = make_split(spec, NoiseType::blue, 40, s);
        TrainConfig t = cfg.train;
        t.method.method = Method::vanilla;
        t.seed = trial_seed(spec.master_seed, NoiseType::blue, 40, Method::vanilla, 0, s);
        const RunResult r = train_run(split, t);
        train_acc += r.eval_history.back().train_acc;
        drop += r.drop;
    }
    train_acc /= 3.0;
    drop /= 3.0;
    std::ostringstream d;
    d << "mean noisy-label train acc " << train_acc << " (need >= 0.90), mean drop " << drop << " (need >= 0.05)";
    return {train_acc >= 0.90 && drop >= 0.05, d.str()};
}

Outcome red_blue_gap() {
    const AppConfig cfg = benchmark_config();
    SweepSpec spec = make_sweep_spec(cfg);
    spec.noise_types = {NoiseType::blue, NoiseType::red};
    spec.levels = {0, 20, 40, 60, 80};
    spec.methods = {MethodGrid{Method::vanilla, {}, {}}};
    spec.seeds = {1, 2, 3};
    spec.parallelism = workers();
    const SweepResult r = run_sweep(spec);
    if (r.any_failed()) return {false, "some runs failed"};
    const double blue = std_across_levels(r, NoiseType::blue, Method::vanilla);
    const double red = std_across_levels(r, NoiseType::red, Method::vanilla);
    std::ostringstream d;
    d << "std across levels: blue " << blue << ", red " << red << ", ratio " << blue / red << " (need >= 1.5)";
    return {blue >= 1.5 * red, d.str()};
}

Outcome method_ordering() {
    const AppConfig cfg = benchmark_config();
    SweepSpec spec = make_sweep_spec(cfg);
    spec.noise_types = {NoiseType::blue};
    spec.levels = {50};
    spec.seeds = {1, 2, 3};
    spec.parallelism = workers();
    const SweepResult r = run_sweep(spec);
    auto peak = [&](Method m) {
        const auto& c = r.cells.at({NoiseType::blue, 50, m});
        return c.failed ? -1.0 : c.mean_peak;
    };
    const double van = peak(Method::vanilla), mix = peak(Method::mixup), net = peak(Method::mentornet),
                 mm = peak(Method::mentormix);
    std::ostringstream d;
    d << "mean peak: mentormix " << mm << ", vanilla " << van << ", mixup " << mix << ", mentornet " << net
      << " (need mentormix >= vanilla + 0.03 and >= others - 0.01)";
    return {mm >= van + 0.03 && mm >= mix - 0.01 && mm >= net - 0.01, d.str()};
}

Outcome determinism() {
    AppConfig cfg = benchmark_config();
    SweepSpec spec = make_sweep_spec(cfg);
    spec.levels = {0, 40};
    spec.seeds = {1, 2};
    spec.train.max_epochs = 5;
    spec.methods = {MethodGrid{Method::vanilla, {}, {}}, MethodGrid{Method::mixup, {1.0}, {}},
                    MethodGrid{Method::mentornet, {}, {80}}, MethodGrid{Method::mentormix, {0.4}, {80, 70}}};
    const std::string prov = provenance_json(cfg);
    std::vector<std::string> csvs;
    for (std::size_t par : {1, 4, 1, 4}) {
        spec.parallelism = par;
        std::ostringstream out;
        export_csv(run_sweep(spec), out, prov);
        csvs.push_back(out.str());
    }
    bool same = true;
    for (const auto& c : csvs) same = same && c == csvs.front();
    std::ostringstream d;
    d << "4 sweeps (parallelism 1,4,1,4), " << csvs.front().size() << " bytes of CSV each, "
      << (same ? "byte-identical" : "DIFFERENT");
    return {same, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", 60, [] { return from_check(selfcheck::gradient_check(5, 8, 1e-4)); }},
        {2, "reduction chain", 10, [] { return from_check(selfcheck::reduction_chain(100, 1e-12)); }},
        {3, "importance-sampling equivalence", 10,
         [] { return from_check(selfcheck::importance_sampling_equivalence(5, 1e-10)); }},
        {4, "memorization under blue noise", 600, memorization},
        {5, "red-vs-blue generalization gap", 2700, red_blue_gap},
        {6, "method ordering at blue 50%", 1800, method_ordering},
        {7, "noise-injection exactness", 10, [] { return from_check(selfcheck::noise_injection_exactness(0.01)); }},
        {8, "sweep determinism", 600, determinism},
        {9, "sampler statistics", 10, [] { return from_check(selfcheck::sampler_statistics(0.01)); }},
    };

    bool all = true;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool ok = o.passed && in_time;
        all = all && ok;
        std::printf("%s criterion %d (%s): %s [%.1fs of %.0fs]\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}

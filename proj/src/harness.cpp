#include "mmlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mmlab/random.hpp"

namespace mmlab {

namespace {

constexpr double kZ95 = 1.959963984540054;

bool uses_alpha(Method m) { return m == Method::mixup || m == Method::mentormix; }
bool uses_gamma(Method m) { return m == Method::mentornet || m == Method::mentormix; }

double mean_of(const std::vector<double>& xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Normal-approximation half-width using the sample standard deviation.
double ci95(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    return kZ95 * std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

TrialStatus parse_status(const std::string& s) {
    if (s == "ok") return TrialStatus::ok;
    if (s == "diverged") return TrialStatus::diverged;
    if (s == "failed") return TrialStatus::failed;
    throw IoError("unknown trial status '" + s + "'");
}

std::string method_title(Method m) {
    switch (m) {
        case Method::vanilla: return "Vanilla";
        case Method::mixup: return "Mixup";
        case Method::mentornet: return "MentorNet";
        case Method::mentormix: return "MentorMix";
    }
    return "?";
}

std::set<Method> methods_in(const SweepResult& r) {
    std::set<Method> out;
    for (const auto& [k, v] : r.cells) out.insert(k.method);
    return out;
}

std::set<std::pair<NoiseType, int>> rows_in(const SweepResult& r) {
    std::set<std::pair<NoiseType, int>> out;
    for (const auto& [k, v] : r.cells) out.emplace(k.noise_type, k.level);
    return out;
}

std::vector<double> level_finals(const SweepResult& result, NoiseType type, Method method) {
    std::vector<double> xs;
    for (const auto& [k, c] : result.cells) {
        if (k.noise_type == type && k.method == method && !c.failed) xs.push_back(c.mean_final);
    }
    return xs;
}

}  // namespace

std::vector<HparamSetting> expand_grid(const MethodGrid& grid) {
    std::vector<std::optional<double>> alphas{std::nullopt};
    std::vector<std::optional<double>> gammas{std::nullopt};
    if (uses_alpha(grid.method)) alphas.assign(grid.alpha.begin(), grid.alpha.end());
    if (uses_gamma(grid.method)) gammas.assign(grid.gamma_p.begin(), grid.gamma_p.end());
    std::vector<HparamSetting> out;
    for (const auto& a : alphas) {
        for (const auto& g : gammas) out.push_back({a, g});
    }
    return out;
}

void SweepSpec::validate() const {
    task.validate();
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    if (methods.empty()) throw ConfigError("sweep needs at least one method");
    if (noise_types.empty()) throw ConfigError("sweep needs at least one noise type");
    if (levels.empty()) throw ConfigError("sweep needs at least one noise level");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    for (int l : levels) {
        if (!is_canonical_level(l)) throw ConfigError("noise level " + std::to_string(l) + " is not canonical");
    }
    for (const auto& g : methods) {
        if (expand_grid(g).empty()) {
            throw ConfigError("empty hyperparameter grid for " + std::string(to_string(g.method)));
        }
    }
    train.validate();
}

std::string_view to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::ok: return "ok";
        case TrialStatus::diverged: return "diverged";
        case TrialStatus::failed: return "failed";
    }
    return "failed";
}

bool SweepResult::any_failed() const {
    return std::any_of(trials.begin(), trials.end(), [](const TrialResult& t) { return t.status != TrialStatus::ok; });
}

std::map<CellKey, CellSummary> aggregate(const std::vector<TrialResult>& trials) {
    // Per cell: hparam settings in first-appearance order, each with its trials.
    struct Group {
        HparamSetting hp;
        std::vector<const TrialResult*> members;
    };
    std::map<CellKey, std::vector<Group>> grouped;
    for (const auto& t : trials) {
        auto& groups = grouped[{t.noise_type, t.level, t.method}];
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.hp == t.hparams; });
        if (it == groups.end()) {
            groups.push_back({t.hparams, {}});
            it = std::prev(groups.end());
        }
        it->members.push_back(&t);
    }
    std::map<CellKey, CellSummary> cells;
    for (const auto& [key, groups] : grouped) {
        CellSummary best;
        best.failed = true;
        for (const auto& g : groups) {
            const bool ok = std::all_of(g.members.begin(), g.members.end(),
                                        [](const TrialResult* t) { return t->status == TrialStatus::ok; });
            if (!ok) continue;
            std::vector<double> peaks, finals, drops;
            for (const auto* t : g.members) {
                peaks.push_back(t->peak);
                finals.push_back(t->final_accuracy);
                drops.push_back(t->drop);
            }
            const double mp = mean_of(peaks);
            if (best.failed || mp > best.mean_peak) {
                best.failed = false;
                best.best = g.hp;
                best.mean_peak = mp;
                best.mean_final = mean_of(finals);
                best.mean_drop = mean_of(drops);
                best.ci95_peak = ci95(peaks);
                best.ci95_final = ci95(finals);
                best.seeds = g.members.size();
            }
        }
        cells[key] = best;
    }
    return cells;
}

std::uint64_t trial_seed(std::uint64_t master_seed, NoiseType type, int level, Method method,
                         std::size_t hparam_index, std::size_t seed_index) {
    return hash_words({master_seed, 0x747269616cULL, static_cast<std::uint64_t>(type),
                       static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(method), hparam_index,
                       seed_index});
}

NoisySplit make_split(const SweepSpec& spec, NoiseType type, int level, std::size_t seed_index) {
    const std::uint64_t seed = spec.seeds.at(seed_index);
    GaussianTaskSpec task_spec = spec.task;
    // The clean task (and its validation set) is shared by every level and type.
    task_spec.seed = hash_words({spec.master_seed, 0x7461736bULL, seed});
    const CleanTask task = make_clean_task(task_spec);
    const std::uint64_t noise_seed =
        hash_words({spec.master_seed, 0x6e6f697365ULL, static_cast<std::uint64_t>(type), static_cast<std::uint64_t>(level), seed});
    if (type == NoiseType::blue) return inject_blue(task, level, noise_seed);
    const OpenSetPool pool =
        make_open_set_pool(task, spec.pool_clusters, spec.red_proximity * task_spec.within_std,
                           task_spec.examples_per_class, hash_words({spec.master_seed, 0x706f6f6cULL, seed}));
    return inject_red(task, level, pool, noise_seed);
}

SweepResult run_sweep(const SweepSpec& spec) {
    spec.validate();

    struct Job {
        NoiseType type;
        int level;
        std::size_t seed_index;
        Method method;
        std::size_t hparam_index;
        HparamSetting hp;
        std::size_t split_index;
    };

    std::vector<NoisySplit> splits;
    std::vector<Job> jobs;
    for (NoiseType type : spec.noise_types) {
        for (int level : spec.levels) {
            std::vector<std::size_t> split_of_seed;
            for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
                split_of_seed.push_back(splits.size());
                splits.push_back(make_split(spec, type, level, s));
            }
            for (const auto& grid : spec.methods) {
                const auto settings = expand_grid(grid);
                for (std::size_t h = 0; h < settings.size(); ++h) {
                    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
                        jobs.push_back({type, level, s, grid.method, h, settings[h], split_of_seed[s]});
                    }
                }
            }
        }
    }

    SweepResult result;
    result.trials.resize(jobs.size());
    auto run_job = [&](std::size_t idx) {
        const Job& job = jobs[idx];
        TrainConfig cfg = spec.train;
        cfg.method.method = job.method;
        if (job.hp.alpha) cfg.method.alpha = *job.hp.alpha;
        if (job.hp.gamma_p) cfg.method.gamma_p = *job.hp.gamma_p;
        cfg.seed = trial_seed(spec.master_seed, job.type, job.level, job.method, job.hparam_index, job.seed_index);

        TrialResult& t = result.trials[idx];
        t.noise_type = job.type;
        t.level = job.level;
        t.method = job.method;
        t.hparams = job.hp;
        t.seed = spec.seeds[job.seed_index];

        std::ofstream log_file;
        std::ostream* log = nullptr;
        if (spec.runs_dir) {
            const auto dir = std::filesystem::path(*spec.runs_dir) / hex64(cfg.seed);
            std::filesystem::create_directories(dir);
            log_file.open(dir / "log.txt", std::ios::binary | std::ios::trunc);
            if (!log_file) throw IoError("cannot write run log under " + dir.string());
            if (!spec.provenance.empty()) log_file << "# config: " << spec.provenance << '\n';
            log_file << "# trial: " << cfg.describe() << '\n';
            log = &log_file;
        }
        try {
            const RunResult r = train_run(splits[job.split_index], cfg, log);
            t.peak = r.peak_accuracy;
            t.final_accuracy = r.final_accuracy;
            t.drop = r.drop;
            t.steps = r.wall_steps;
            t.status = TrialStatus::ok;
        } catch (const DivergedError& e) {
            t.status = TrialStatus::diverged;
            t.steps = e.step();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            t.status = TrialStatus::failed;
        }
    };

    const std::size_t workers = std::min(spec.parallelism, std::max<std::size_t>(jobs.size(), 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) {
                    try {
                        run_job(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    result.cells = aggregate(result.trials);
    return result;
}

std::vector<CurvePoint> drop_curve(const SweepResult& result, NoiseType type, Method method) {
    std::set<int> levels;
    for (const auto& [k, c] : result.cells) {
        if (k.noise_type == type) levels.insert(k.level);
    }
    std::vector<CurvePoint> curve;
    for (int level : levels) {
        CurvePoint p{level, std::nullopt};
        auto it = result.cells.find({type, level, method});
        if (it != result.cells.end() && !it->second.failed) p.mean_drop = it->second.mean_drop;
        curve.push_back(p);
    }
    return curve;
}

double population_std(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    const double mu = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

double std_across_levels(const SweepResult& result, NoiseType type, Method method) {
    const auto xs = level_finals(result, type, method);
    if (xs.size() < 2) {
        throw ContractError("std_across_levels needs at least 2 levels for " + std::string(to_string(type)) + "/" +
                            std::string(to_string(method)));
    }
    return population_std(xs);
}

std::pair<double, double> across_level_peak_ci(const SweepResult& result, NoiseType type, Method method) {
    std::vector<double> xs;
    for (const auto& [k, c] : result.cells) {
        if (k.noise_type == type && k.method == method && !c.failed) xs.push_back(c.mean_peak);
    }
    return {mean_of(xs), ci95(xs)};
}

void export_csv(const SweepResult& result, std::ostream& out, const std::string& provenance) {
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << kCsvHeader << '\n';
    for (const auto& t : result.trials) {
        const bool ok = t.status == TrialStatus::ok;
        out << to_string(t.noise_type) << ',' << t.level << ',' << to_string(t.method) << ','
            << opt_number(t.hparams.alpha) << ',' << opt_number(t.hparams.gamma_p) << ',' << t.seed << ','
            << (ok ? format_double(t.peak) : "") << ',' << (ok ? format_double(t.final_accuracy) : "") << ','
            << (ok ? format_double(t.drop) : "") << ',' << t.steps << ',' << to_string(t.status) << '\n';
    }
}

void export_csv(const SweepResult& result, const std::string& path, const std::string& provenance) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    export_csv(result, out, provenance);
    if (!out) throw IoError("failed writing '" + path + "'");
}

ParsedCsv parse_csv(std::istream& in) {
    ParsedCsv parsed;
    std::string line;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!seen_header) {
            if (line.rfind("# ", 0) == 0) {
                parsed.provenance = line.substr(2);
                continue;
            }
            if (line != kCsvHeader) throw IoError("csv line " + std::to_string(line_no) + ": unexpected header");
            seen_header = true;
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 11) {
            throw IoError("csv line " + std::to_string(line_no) + ": expected 11 fields, got " + std::to_string(f.size()));
        }
        try {
            TrialResult t;
            t.noise_type = parse_noise_type(f[0]);
            t.level = std::stoi(f[1]);
            t.method = parse_method(f[2]);
            if (!f[3].empty()) t.hparams.alpha = parse_double(f[3]);
            if (!f[4].empty()) t.hparams.gamma_p = parse_double(f[4]);
            t.seed = std::stoull(f[5]);
            t.status = parse_status(f[10]);
            if (t.status == TrialStatus::ok) {
                t.peak = parse_double(f[6]);
                t.final_accuracy = parse_double(f[7]);
                t.drop = parse_double(f[8]);
            }
            t.steps = std::stoull(f[9]);
            parsed.result.trials.push_back(t);
        } catch (const IoError& e) {
            throw IoError("csv line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw IoError("csv line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!seen_header) throw IoError("csv: missing header");
    parsed.result.cells = aggregate(parsed.result.trials);
    return parsed;
}

ParsedCsv parse_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return parse_csv(in);
}

std::string format_peak_final(double peak, double final_accuracy) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f/%.1f", peak * 100.0, final_accuracy * 100.0);
    return buf;
}

void export_markdown_table(const SweepResult& result, std::ostream& out, const std::string& provenance) {
    if (!provenance.empty()) out << "<!-- config: " << provenance << " -->\n\n";
    const auto methods = methods_in(result);
    const auto rows = rows_in(result);

    out << "Peak/final accuracy (%) of the best trial on the clean validation set\n\n";
    out << "| Type | Noise Level |";
    for (Method m : methods) out << ' ' << method_title(m) << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [type, level] : rows) {
        out << "| " << to_string(type) << " | " << level << " |";
        for (Method m : methods) {
            auto it = result.cells.find({type, level, m});
            if (it == result.cells.end() || it->second.failed) {
                out << " --- |";
            } else {
                out << ' ' << format_peak_final(it->second.mean_peak, it->second.mean_final) << " |";
            }
        }
        out << '\n';
    }

    std::set<NoiseType> types;
    for (const auto& r : rows) types.insert(r.first);
    char buf[64];

    out << "\nMean peak accuracy (%) across noise levels, with 95% interval across levels\n\n";
    out << "| Type |";
    for (Method m : methods) out << ' ' << method_title(m) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) out << "---|";
    out << '\n';
    for (NoiseType type : types) {
        out << "| " << to_string(type) << " |";
        for (Method m : methods) {
            const auto [mu, hw] = across_level_peak_ci(result, type, m);
            std::snprintf(buf, sizeof(buf), "%.1f±%.1f", mu * 100.0, hw * 100.0);
            out << ' ' << buf << " |";
        }
        out << '\n';
    }

    out << "\nStd (%) of final accuracy across noise levels\n\n";
    out << "| Type |";
    for (Method m : methods) out << ' ' << method_title(m) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) out << "---|";
    out << '\n';
    for (NoiseType type : types) {
        out << "| " << to_string(type) << " |";
        for (Method m : methods) {
            const auto xs = level_finals(result, type, m);
            if (xs.size() < 2) {
                out << " --- |";
            } else {
                std::snprintf(buf, sizeof(buf), "%.1f", population_std(xs) * 100.0);
                out << ' ' << buf << " |";
            }
        }
        out << '\n';
    }

    out << "\nBest-trial hyperparameters and 95% interval across seeds (peak, final)\n\n";
    out << "| Type | Noise Level | Method | alpha | gamma_p | seeds | peak ± | final ± |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& [k, c] : result.cells) {
        out << "| " << to_string(k.noise_type) << " | " << k.level << " | " << method_title(k.method) << " | ";
        if (c.failed) {
            out << "--- | --- | --- | --- | --- |\n";
            continue;
        }
        out << (c.best.alpha ? format_double(*c.best.alpha) : "-") << " | "
            << (c.best.gamma_p ? format_double(*c.best.gamma_p) : "-") << " | " << c.seeds << " | ";
        std::snprintf(buf, sizeof(buf), "%.1f±%.1f | %.1f±%.1f |", c.mean_peak * 100.0, c.ci95_peak * 100.0,
                      c.mean_final * 100.0, c.ci95_final * 100.0);
        out << buf << '\n';
    }
}

void export_markdown_table(const SweepResult& result, const std::string& path, const std::string& provenance) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    export_markdown_table(result, out, provenance);
    if (!out) throw IoError("failed writing '" + path + "'");
}

void export_drop_curves(const SweepResult& result, std::ostream& out, const std::string& provenance) {
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "noise_type,method,level,mean_drop\n";
    std::set<NoiseType> types;
    for (const auto& [k, c] : result.cells) types.insert(k.noise_type);
    for (NoiseType type : types) {
        for (Method m : methods_in(result)) {
            for (const auto& p : drop_curve(result, type, m)) {
                out << to_string(type) << ',' << to_string(m) << ',' << p.level << ','
                    << (p.mean_drop ? format_double(*p.mean_drop) : "---") << '\n';
            }
        }
    }
}

}  // namespace mmlab

#include "mmlab/noisegen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mmlab/random.hpp"

namespace mmlab {

namespace {

std::vector<double> random_unit(Rng& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<double> gaussian_sample(Rng& rng, std::span<const double> mean, double std) {
    std::vector<double> x(mean.begin(), mean.end());
    for (double& v : x) v += std * rng.normal();
    return x;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Indices of train examples grouped by observed label.
std::vector<std::vector<std::size_t>> by_class(const std::vector<LabeledExample>& train, int m) {
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < train.size(); ++i) {
        const int y = train[i].observed_label;
        if (y < 0 || y >= m) throw ContractError("label out of range in training set");
        groups[static_cast<std::size_t>(y)].push_back(i);
    }
    return groups;
}

// First `k` entries of a seeded Fisher-Yates shuffle of `items`.
std::vector<std::size_t> choose(std::vector<std::size_t> items, int k, Rng& rng) {
    const auto n = items.size();
    for (std::size_t i = 0; i < static_cast<std::size_t>(k) && i < n; ++i) {
        const std::size_t j = i + rng.below(n - i);
        std::swap(items[i], items[j]);
    }
    items.resize(std::min<std::size_t>(static_cast<std::size_t>(k), n));
    return items;
}

void check_level(int percent) {
    if (!is_canonical_level(percent)) {
        throw ConfigError("noise level " + std::to_string(percent) +
                          " is not one of 0,5,10,15,20,30,40,50,60,80");
    }
}

NoisySplit base_split(const CleanTask& task, NoiseType type, int percent, std::uint64_t seed) {
    NoisySplit split;
    split.train = task.train;
    split.val = task.val;
    split.noise_type = type;
    split.noise_level = percent;
    split.num_classes = task.spec.num_classes;
    split.dim = task.spec.dim;
    split.seed = seed;
    return split;
}

}  // namespace

void GaussianTaskSpec::validate() const {
    if (num_classes < 2) throw ConfigError("task needs at least 2 classes");
    if (dim < 2) throw ConfigError("task needs at least 2 feature dimensions");
    if (examples_per_class < 1) throw ConfigError("examples_per_class must be >= 1");
    if (val_per_class < 1) throw ConfigError("val_per_class must be >= 1");
    if (!(mean_scale > 0.0) || !std::isfinite(mean_scale)) throw ConfigError("mean_scale must be positive");
    if (!(within_std > 0.0) || !std::isfinite(within_std)) throw ConfigError("within_std must be positive");
}

std::string_view to_string(NoiseType t) { return t == NoiseType::blue ? "blue" : "red"; }

NoiseType parse_noise_type(std::string_view s) {
    if (s == "blue") return NoiseType::blue;
    if (s == "red") return NoiseType::red;
    throw ConfigError("unknown noise type '" + std::string(s) + "'");
}

bool is_canonical_level(int percent) {
    return std::find(kCanonicalLevels.begin(), kCanonicalLevels.end(), percent) != kCanonicalLevels.end();
}

int corrupted_count(int percent, int class_size) { return (percent * class_size + 50) / 100; }

CleanTask make_clean_task(const GaussianTaskSpec& spec) {
    spec.validate();
    Rng rng(hash_words({spec.seed, 0x7461736bULL}));
    CleanTask task;
    task.spec = spec;
    const auto m = static_cast<std::size_t>(spec.num_classes);
    const auto d = static_cast<std::size_t>(spec.dim);
    task.class_means = Matrix(m, d);
    for (std::size_t c = 0; c < m; ++c) {
        auto u = random_unit(rng, spec.dim);
        for (std::size_t k = 0; k < d; ++k) task.class_means(c, k) = spec.mean_scale * u[k];
    }
    std::uint64_t next_id = 0;
    auto draw = [&](std::vector<LabeledExample>& out, int per_class) {
        for (std::size_t c = 0; c < m; ++c) {
            for (int i = 0; i < per_class; ++i) {
                LabeledExample ex;
                ex.id = next_id++;
                ex.features = gaussian_sample(rng, task.class_means.row(c), spec.within_std);
                ex.observed_label = static_cast<int>(c);
                out.push_back(std::move(ex));
            }
        }
    };
    draw(task.train, spec.examples_per_class);
    draw(task.val, spec.val_per_class);
    return task;
}

NoisySplit inject_blue(const CleanTask& task, int percent, std::uint64_t seed) {
    check_level(percent);
    NoisySplit split = base_split(task, NoiseType::blue, percent, seed);
    const int m = task.spec.num_classes;
    Rng rng(hash_words({seed, 0x626c7565ULL}));
    const auto groups = by_class(split.train, m);

    // Flipped examples and a target multiset in which every class is gained as
    // often as it is lost, so the observed-label histogram is unchanged.
    std::vector<std::size_t> victims;
    std::vector<int> source, target;
    for (int c = 0; c < m; ++c) {
        const auto& members = groups[static_cast<std::size_t>(c)];
        const int k = corrupted_count(percent, static_cast<int>(members.size()));
        for (std::size_t idx : choose(members, k, rng)) {
            victims.push_back(idx);
            source.push_back(c);
            target.push_back(c);
        }
    }
    const std::size_t n = target.size();
    for (std::size_t i = n; i > 1; --i) std::swap(target[i - 1], target[rng.below(i)]);
    // Repair fixed points by swapping with a random compatible slot. By symmetry
    // over class labels each target stays uniform over the other classes.
    for (std::size_t i = 0; i < n; ++i) {
        if (target[i] != source[i]) continue;
        const std::size_t start = rng.below(n);
        bool fixed = false;
        for (std::size_t t = 0; t < n && !fixed; ++t) {
            const std::size_t j = (start + t) % n;
            if (target[j] != source[i] && target[i] != source[j]) {
                std::swap(target[i], target[j]);
                fixed = true;
            }
        }
        if (!fixed) {
            // Only reachable when one class dominates the flips.
            const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(m - 1)));
            target[i] = r < source[i] ? r : r + 1;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& ex = split.train[victims[i]];
        ex.provenance = Provenance::flipped;
        ex.provenance_arg = source[i];
        ex.observed_label = target[i];
    }
    return split;
}

int nearest_class_mean(const Matrix& class_means, const std::vector<double>& x) {
    if (x.size() != class_means.cols()) throw DimensionError("feature width does not match class means");
    int best = 0;
    double best_d = squared_distance(class_means.row(0), x);
    for (std::size_t c = 1; c < class_means.rows(); ++c) {
        const double dist = squared_distance(class_means.row(c), x);
        if (dist < best_d) {
            best_d = dist;
            best = static_cast<int>(c);
        }
    }
    return best;
}

OpenSetPool make_open_set_pool(const CleanTask& task, int n_clusters, double proximity,
                               int examples_per_cluster, std::uint64_t seed) {
    const int m = task.spec.num_classes;
    const int d = task.spec.dim;
    if (n_clusters < m) {
        throw ConfigError("open-set pool needs at least " + std::to_string(m) + " clusters, got " +
                          std::to_string(n_clusters));
    }
    if (!(proximity >= 0.0) || !std::isfinite(proximity)) throw ConfigError("proximity must be finite and >= 0");
    if (examples_per_cluster < 1) throw ConfigError("examples_per_cluster must be >= 1");

    Rng rng(hash_words({seed, 0x706f6f6cULL}));
    OpenSetPool pool;
    for (int k = 0; k < n_clusters; ++k) {
        const int anchor = k % m;
        const auto anchor_mean = task.class_means.row(static_cast<std::size_t>(anchor));
        double norm = std::sqrt(squared_distance(anchor_mean, std::vector<double>(anchor_mean.size(), 0.0)));
        std::vector<double> radial(anchor_mean.begin(), anchor_mean.end());
        for (double& v : radial) v /= norm;

        // Tilted radial directions; the pure radial direction always keeps the
        // anchor nearest because all class means share one norm.
        OpenSetCluster cluster;
        cluster.std = task.spec.within_std;
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            auto dir = random_unit(rng, d);
            double dn = 0.0;
            for (int i = 0; i < d; ++i) {
                dir[i] = radial[i] + dir[i];
                dn += dir[i] * dir[i];
            }
            dn = std::sqrt(dn);
            if (dn == 0.0) continue;
            std::vector<double> mean(anchor_mean.begin(), anchor_mean.end());
            for (int i = 0; i < d; ++i) mean[i] += proximity * dir[i] / dn;
            if (nearest_class_mean(task.class_means, mean) == anchor) {
                cluster.mean = std::move(mean);
                placed = true;
            }
        }
        if (!placed) {
            cluster.mean.assign(anchor_mean.begin(), anchor_mean.end());
            for (int i = 0; i < d; ++i) cluster.mean[i] += proximity * radial[i];
        }
        cluster.nearest_class = nearest_class_mean(task.class_means, cluster.mean);
        for (int i = 0; i < examples_per_cluster; ++i) {
            cluster.examples.push_back(gaussian_sample(rng, cluster.mean, cluster.std));
        }
        pool.clusters.push_back(std::move(cluster));
    }
    for (int c = 0; c < m; ++c) {
        const bool covered = std::any_of(pool.clusters.begin(), pool.clusters.end(),
                                         [c](const OpenSetCluster& cl) { return cl.nearest_class == c; });
        if (!covered) throw ConfigError("open-set pool leaves class " + std::to_string(c) + " uncovered");
    }
    return pool;
}

NoisySplit inject_red(const CleanTask& task, int percent, const OpenSetPool& pool, std::uint64_t seed) {
    check_level(percent);
    NoisySplit split = base_split(task, NoiseType::red, percent, seed);
    const int m = task.spec.num_classes;
    Rng rng(hash_words({seed, 0x726564ULL}));
    const auto groups = by_class(split.train, m);
    for (int c = 0; c < m; ++c) {
        const auto& members = groups[static_cast<std::size_t>(c)];
        const int k = corrupted_count(percent, static_cast<int>(members.size()));
        // (cluster, example) slots available to this class.
        std::vector<std::pair<std::size_t, std::size_t>> slots;
        for (std::size_t ci = 0; ci < pool.clusters.size(); ++ci) {
            if (pool.clusters[ci].nearest_class != c) continue;
            for (std::size_t e = 0; e < pool.clusters[ci].examples.size(); ++e) slots.emplace_back(ci, e);
        }
        if (static_cast<int>(slots.size()) < k) {
            throw ResourceError("open-set pool exhausted for class " + std::to_string(c) + ": need " +
                                std::to_string(k) + ", have " + std::to_string(slots.size()));
        }
        std::vector<std::size_t> order(slots.size());
        std::iota(order.begin(), order.end(), 0);
        const auto picked_slots = choose(order, k, rng);
        const auto victims = choose(members, k, rng);
        for (std::size_t i = 0; i < victims.size(); ++i) {
            const auto [ci, e] = slots[picked_slots[i]];
            auto& ex = split.train[victims[i]];
            ex.features = pool.clusters[ci].examples[e];
            ex.provenance = Provenance::open_set;
            ex.provenance_arg = static_cast<int>(ci);
        }
    }
    return split;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw IoError("malformed number '" + std::string(text) + "'");
    }
    return v;
}

namespace {

long long parse_int(std::string_view text) {
    long long v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw IoError("malformed integer '" + std::string(text) + "'");
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

void write_record(std::ostream& out, const LabeledExample& ex, std::string_view split) {
    out << ex.id << ',' << split << ',' << ex.observed_label << ',' << static_cast<int>(ex.provenance) << ','
        << ex.provenance_arg;
    for (double v : ex.features) out << ',' << format_double(v);
    out << '\n';
}

}  // namespace

void write_dataset(std::ostream& out, const NoisySplit& split) {
    nlohmann::json meta = {{"m", split.num_classes},
                           {"d", split.dim},
                           {"p", split.noise_level},
                           {"noise_type", std::string(to_string(split.noise_type))},
                           {"seed", split.seed}};
    if (!split.provenance.empty()) meta["config"] = nlohmann::json::parse(split.provenance);
    out << "# " << meta.dump() << '\n';
    for (const auto& ex : split.train) write_record(out, ex, "train");
    for (const auto& ex : split.val) write_record(out, ex, "val");
}

void write_dataset(const std::string& path, const NoisySplit& split) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_dataset(out, split);
    if (!out) throw IoError("failed writing '" + path + "'");
}

NoisySplit read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw IoError("dataset: missing metadata line");
    NoisySplit split;
    try {
        const auto meta = nlohmann::json::parse(line.substr(2));
        split.num_classes = meta.at("m").get<int>();
        split.dim = meta.at("d").get<int>();
        split.noise_level = meta.at("p").get<int>();
        split.noise_type = parse_noise_type(meta.at("noise_type").get<std::string>());
        split.seed = meta.at("seed").get<std::uint64_t>();
        if (meta.contains("config")) split.provenance = meta.at("config").dump();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset: bad metadata: ") + e.what());
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != 5 + static_cast<std::size_t>(split.dim)) {
            throw IoError("dataset line " + std::to_string(line_no) + ": expected " +
                          std::to_string(5 + split.dim) + " fields, got " + std::to_string(fields.size()));
        }
        LabeledExample ex;
        ex.id = static_cast<std::uint64_t>(parse_int(fields[0]));
        ex.observed_label = static_cast<int>(parse_int(fields[2]));
        const auto code = parse_int(fields[3]);
        if (code < 0 || code > 2) throw IoError("dataset line " + std::to_string(line_no) + ": bad provenance code");
        ex.provenance = static_cast<Provenance>(code);
        ex.provenance_arg = static_cast<int>(parse_int(fields[4]));
        for (std::size_t k = 5; k < fields.size(); ++k) ex.features.push_back(parse_double(fields[k]));
        if (fields[1] == "train") {
            split.train.push_back(std::move(ex));
        } else if (fields[1] == "val") {
            split.val.push_back(std::move(ex));
        } else {
            throw IoError("dataset line " + std::to_string(line_no) + ": unknown split '" + std::string(fields[1]) + "'");
        }
    }
    return split;
}

NoisySplit read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_dataset(in);
}

}  // namespace mmlab

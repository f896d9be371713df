#include "mmlab/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "mmlab/noisegen.hpp"
#include "mmlab/random.hpp"

namespace mmlab::selfcheck {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c);
    return buf;
}

Batch random_batch(Rng& rng, std::size_t b, std::size_t d, int m) {
    Batch batch{Matrix(b, d), {}};
    for (double& v : batch.features.data()) v = rng.normal();
    for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(m))));
    return batch;
}

Matrix targets_of(const Batch& batch, std::size_t m) {
    Matrix t(batch.size(), m);
    for (std::size_t i = 0; i < batch.size(); ++i) t(i, static_cast<std::size_t>(batch.labels[i])) = 1.0;
    return t;
}

// Mixed inputs rebuilt from recorded partners and lambdas.
std::pair<Matrix, Matrix> rebuild_mix(const Batch& batch, const Matrix& targets, const std::vector<std::size_t>& partners,
                                      const std::vector<double>& lambdas) {
    Matrix x(batch.size(), batch.features.cols()), t(batch.size(), targets.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t j = partners[i];
        const double l = lambdas[i];
        for (std::size_t k = 0; k < x.cols(); ++k) x(i, k) = l * batch.features(i, k) + (1.0 - l) * batch.features(j, k);
        for (std::size_t k = 0; k < t.cols(); ++k) t(i, k) = l * targets(i, k) + (1.0 - l) * targets(j, k);
    }
    return {x, t};
}

}  // namespace

double ks_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_uniform_statistic(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double u = std::clamp(samples[i], 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - u, u - static_cast<double>(i) / n});
    }
    return d;
}

double chi_square_pvalue(double statistic, double dof) {
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), statistic));
}

std::pair<double, double> binomial_bounds(std::size_t trials, double p, double level) {
    boost::math::binomial dist(static_cast<double>(trials), p);
    return {boost::math::quantile(dist, level / 2.0), boost::math::quantile(boost::math::complement(dist, level / 2.0))};
}

double reference_loss(const MLPModel& model, const Matrix& features, const Matrix& targets,
                      const std::vector<double>& weights, std::vector<bool>* kinks) {
    if (kinks) kinks->clear();
    double total = 0.0;
    for (std::size_t r = 0; r < features.rows(); ++r) {
        std::vector<double> a(features.row(r).begin(), features.row(r).end());
        for (std::size_t k = 0; k < model.layers.size(); ++k) {
            const auto& L = model.layers[k];
            std::vector<double> z(L.weight.rows());
            for (std::size_t o = 0; o < z.size(); ++o) {
                double s = L.bias[o];
                for (std::size_t c = 0; c < a.size(); ++c) s += L.weight(o, c) * a[c];
                z[o] = s;
            }
            if (k + 1 < model.layers.size()) {
                for (double& v : z) {
                    if (model.activation == Activation::relu) {
                        if (kinks) kinks->push_back(v > 0.0);
                        v = v > 0.0 ? v : 0.0;
                    } else {
                        v = std::tanh(v);
                    }
                }
            }
            a = std::move(z);
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : a) mx = std::max(mx, v);
        double se = 0.0;
        for (double v : a) se += std::exp(v - mx);
        const double lse = mx + std::log(se);
        double ce = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) ce -= targets(r, c) * (a[c] - lse);
        total += weights[r] * ce;
    }
    return total / static_cast<double>(features.rows());
}

CheckResult gradient_check(int n_models, std::size_t batch_size, double tolerance, std::uint64_t seed) {
    CheckResult res{"gradient_check", true, {}};
    constexpr double h = 1e-5;
    constexpr int m = 4;
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    std::string worst_where;

    for (int mi = 0; mi < n_models; ++mi) {
        Rng rng(hash_words({seed, static_cast<std::uint64_t>(mi)}));
        const Activation act = mi % 2 == 0 ? Activation::tanh : Activation::relu;
        const MLPModel base = make_random_model({6, 12, 8, m}, act, rng);
        const Batch batch = random_batch(rng, batch_size, 6, m);
        const Matrix onehot = targets_of(batch, m);

        struct Case {
            std::string name;
            MentorMixConfig cfg;
        };
        std::vector<Case> cases{{"vanilla", {Method::vanilla}},
                                {"mixup", {Method::mixup, 1.0}},
                                {"mentornet", {Method::mentornet, 1.0, 50.0}},
                                {"mentormix", {Method::mentormix, 0.4, 50.0}},
                                {"mentormix+second", {Method::mentormix, 2.0, 50.0, 1.0, 0.95, true}}};
        for (const auto& c : cases) {
            CurriculumState state = c.cfg.make_state();
            Rng method_rng(hash_words({seed, static_cast<std::uint64_t>(mi), 7}));
            const BatchResult br = method_batch(batch, base, state, c.cfg, method_rng);
            const auto& d = br.diagnostics;

            Matrix x = batch.features, t = onehot;
            std::vector<double> w(batch_size, 1.0);
            if (c.cfg.method == Method::mentornet) w = d.weights_v;
            if (c.cfg.method == Method::mixup || c.cfg.method == Method::mentormix) {
                std::tie(x, t) = rebuild_mix(batch, onehot, d.partner_index, d.lambda_adjusted);
                if (d.second_weights) w = *d.second_weights;
            }
            const double base_loss = reference_loss(base, x, t, w);
            if (std::abs(base_loss - br.loss) > 1e-12 * std::max(1.0, std::abs(base_loss))) {
                res.passed = false;
                res.detail += c.name + ": batch loss disagrees with reference; ";
            }
            std::vector<bool> kinks0;
            reference_loss(base, x, t, w, &kinks0);

            MLPModel model = base;
            auto probe = [&](double& param, double analytic, const std::string& where) {
                const double saved = param;
                std::vector<bool> kp, km;
                param = saved + h;
                const double fp = reference_loss(model, x, t, w, &kp);
                param = saved - h;
                const double fm = reference_loss(model, x, t, w, &km);
                param = saved;
                if (kp != kinks0 || km != kinks0) {
                    ++skipped;  // perturbation crosses a relu kink
                    return;
                }
                const double numeric = (fp - fm) / (2.0 * h);
                const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                ++checked;
                if (err > worst) {
                    worst = err;
                    worst_where = where;
                }
            };
            for (std::size_t k = 0; k < model.layers.size(); ++k) {
                auto& L = model.layers[k];
                for (std::size_t i = 0; i < L.weight.size(); ++i) {
                    probe(L.weight.data()[i], br.gradients.weight[k].data()[i],
                          c.name + " model " + std::to_string(mi) + " W" + std::to_string(k));
                }
                for (std::size_t i = 0; i < L.bias.size(); ++i) {
                    probe(L.bias[i], br.gradients.bias[k][i], c.name + " model " + std::to_string(mi) + " b" + std::to_string(k));
                }
            }
        }
    }
    if (worst > tolerance) res.passed = false;
    res.detail += fmt("max rel err %.3g over %.0f entries", worst, static_cast<double>(checked)) +
                  (skipped ? fmt(" (%.0f kink-crossing probes skipped)", static_cast<double>(skipped)) : "") +
                  (worst_where.empty() ? "" : ", worst at " + worst_where);
    if (checked == 0) res.passed = false;
    return res;
}

CheckResult reduction_chain(int n_batches, double tolerance, std::uint64_t seed) {
    CheckResult res{"reduction_chain", true, {}};
    double worst = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    for (int n = 0; n < n_batches; ++n) {
        Rng rng(hash_words({seed, static_cast<std::uint64_t>(n)}));
        const MLPModel model = make_random_model({5, 16, 3}, n % 2 ? Activation::relu : Activation::tanh, rng);
        const Batch batch = random_batch(rng, 8, 5, 3);
        const double vanilla = vanilla_batch(batch, model).loss;

        MentorMixConfig cfg{Method::mentormix, 0.4, 80.0};
        CurriculumState state = cfg.make_state();
        Rng r1(n), r2(n);
        BatchHooks mm_hooks;
        mm_hooks.gamma = inf;
        mm_hooks.lambda = 1.0;
        const auto mm = mentormix_batch(batch, model, state, cfg, r1, mm_hooks);
        BatchHooks mx_hooks;
        mx_hooks.lambda = 1.0;
        const auto mx = mixup_batch(batch, model, cfg.alpha, r2, mx_hooks);
        worst = std::max({worst, std::abs(mm.loss - vanilla), std::abs(mx.loss - vanilla)});
        if (mm.diagnostics.sampling_probs != mx.diagnostics.sampling_probs) {
            res.passed = false;
            res.detail += "sampling distributions differ at batch " + std::to_string(n) + "; ";
        }

        // Huge temperature, all weights 1: MentorMix is Mixup with lambda <- max(lambda, 1 - lambda).
        MentorMixConfig hot{Method::mentormix, 0.4, 80.0, 1e6};
        CurriculumState hot_state = hot.make_state();
        Rng r3(n + 1000), r4(n + 1000);
        BatchHooks only_gamma;
        only_gamma.gamma = inf;
        const auto a = mentormix_batch(batch, model, hot_state, hot, r3, only_gamma);
        BatchHooks max_rule;
        max_rule.mixup_lambda_max = true;
        const auto b = mixup_batch(batch, model, hot.alpha, r4, max_rule);
        if (a.diagnostics.partner_index != b.diagnostics.partner_index ||
            a.diagnostics.lambda_adjusted != b.diagnostics.lambda_adjusted) {
            res.passed = false;
            res.detail += "high-temperature draws differ at batch " + std::to_string(n) + "; ";
        }
        worst = std::max(worst, std::abs(a.loss - b.loss));
    }
    if (worst > tolerance) res.passed = false;
    res.detail += fmt("max |loss difference| %.3g over %.0f batches", worst, n_batches);
    return res;
}

CheckResult importance_sampling_equivalence(std::size_t max_batch, double tolerance, std::uint64_t seed) {
    CheckResult res{"importance_sampling_equivalence", true, {}};
    double worst = 0.0;
    constexpr std::size_t m = 3;
    for (std::size_t b = 2; b <= max_batch; ++b) {
        Rng rng(hash_words({seed, b}));
        const MLPModel model = make_random_model({4, 8, m}, Activation::tanh, rng);
        const Batch batch = random_batch(rng, b, 4, m);
        const Matrix onehot = targets_of(batch, m);

        MentorMixConfig cfg{Method::mentormix, 1.0, 50.0};
        const auto raw = vanilla_batch(batch, model).diagnostics.raw_losses;
        BatchHooks hooks;
        hooks.gamma = percentile(raw, 50.0);
        hooks.lambda = 0.3;
        CurriculumState probe_state = cfg.make_state();
        Rng probe_rng(1);
        const auto probe = mentormix_batch(batch, model, probe_state, cfg, probe_rng, hooks);
        const auto& v = probe.diagnostics.weights_v;
        const auto& probs = probe.diagnostics.sampling_probs;

        // Route 1: every partner assignment through the batch operation itself.
        double enumerated = 0.0;
        std::vector<std::size_t> assign(b, 0);
        for (;;) {
            BatchHooks h = hooks;
            h.partners = assign;
            CurriculumState state = cfg.make_state();
            Rng unused(0);
            const double loss = mentormix_batch(batch, model, state, cfg, unused, h).loss;
            double p = 1.0;
            for (std::size_t j : assign) p *= probs[j];
            enumerated += p * loss;
            std::size_t pos = 0;
            while (pos < b && ++assign[pos] == b) assign[pos++] = 0;
            if (pos == b) break;
        }

        // Route 2: (1/b) sum_i sum_j P(j) loss(mix_ij), evaluated per pair.
        double analytic = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double l = v[i] * std::max(0.3, 0.7) + (1.0 - v[i]) * std::min(0.3, 0.7);
            for (std::size_t j = 0; j < b; ++j) {
                Matrix x(1, 4), t(1, m);
                for (std::size_t k = 0; k < 4; ++k) x(0, k) = l * batch.features(i, k) + (1.0 - l) * batch.features(j, k);
                for (std::size_t k = 0; k < m; ++k) t(0, k) = l * onehot(i, k) + (1.0 - l) * onehot(j, k);
                analytic += probs[j] * reference_loss(model, x, t, {1.0});
            }
        }
        analytic /= static_cast<double>(b);

        const std::vector<double> lambdas(b, 0.3);
        const double library = expected_mentormix_loss(batch, model, v, probs, lambdas);
        worst = std::max({worst, std::abs(enumerated - analytic), std::abs(library - analytic)});
    }
    if (worst > tolerance) res.passed = false;
    res.detail = fmt("max |enumerated - analytic| %.3g for b = 2..%.0f", worst, static_cast<double>(max_batch));
    return res;
}

CheckResult noise_injection_exactness(double level, std::uint64_t seed) {
    CheckResult res{"noise_injection_exactness", true, {}};
    GaussianTaskSpec spec;
    spec.num_classes = 10;
    spec.dim = 4;
    spec.examples_per_class = 40;
    spec.val_per_class = 5;
    spec.seed = seed;
    const CleanTask task = make_clean_task(spec);
    const OpenSetPool pool = make_open_set_pool(task, 20, 1.5, 40, seed + 1);
    for (int p : kCanonicalLevels) {
        const int want = corrupted_count(p, 40);
        const NoisySplit blue = inject_blue(task, p, seed + static_cast<std::uint64_t>(p));
        const NoisySplit red = inject_red(task, p, pool, seed + static_cast<std::uint64_t>(p));
        std::vector<int> blue_bad(10, 0), red_bad(10, 0);
        for (std::size_t i = 0; i < task.train.size(); ++i) {
            const auto& c = task.train[i];
            const auto& bx = blue.train[i];
            const auto& rx = red.train[i];
            if (!bx.is_correct()) {
                ++blue_bad[static_cast<std::size_t>(c.observed_label)];
                if (bx.observed_label == c.observed_label || bx.provenance_arg != c.observed_label) res.passed = false;
            }
            if (bx.features != c.features) res.passed = false;
            if (!rx.is_correct()) ++red_bad[static_cast<std::size_t>(c.observed_label)];
            if (rx.observed_label != c.observed_label) res.passed = false;
        }
        for (int c = 0; c < 10; ++c) {
            if (blue_bad[static_cast<std::size_t>(c)] != want || red_bad[static_cast<std::size_t>(c)] != want) {
                res.passed = false;
                res.detail += "level " + std::to_string(p) + " class " + std::to_string(c) + " miscounted; ";
            }
        }
    }

    // Flip-target uniformity over 10^4 flips: 10 classes x 1250 examples at 80%.
    spec.examples_per_class = 1250;
    spec.dim = 2;
    const CleanTask big = make_clean_task(spec);
    const NoisySplit flipped = inject_blue(big, 80, seed + 99);
    std::vector<std::vector<double>> counts(10, std::vector<double>(10, 0.0));
    std::size_t flips = 0;
    for (const auto& ex : flipped.train) {
        if (ex.provenance == Provenance::flipped) {
            counts[static_cast<std::size_t>(ex.provenance_arg)][static_cast<std::size_t>(ex.observed_label)] += 1.0;
            ++flips;
        }
    }
    double chi2 = 0.0;
    for (std::size_t from = 0; from < 10; ++from) {
        double row = 0.0;
        for (std::size_t to = 0; to < 10; ++to) row += counts[from][to];
        const double expected = row / 9.0;
        for (std::size_t to = 0; to < 10; ++to) {
            if (to == from) {
                if (counts[from][to] != 0.0) res.passed = false;
                continue;
            }
            chi2 += (counts[from][to] - expected) * (counts[from][to] - expected) / expected;
        }
    }
    const double pval = chi_square_pvalue(chi2, 10.0 * 8.0);
    if (flips != 10000 || !(pval > level)) res.passed = false;
    res.detail += fmt("exact counts at all 10 levels; flip-target chi2 %.2f (dof 80), p = %.3g", chi2, pval);
    return res;
}

CheckResult sampler_statistics(double level, std::uint64_t seed) {
    CheckResult res{"sampler_statistics", true, {}};
    Rng rng(seed);
    std::vector<double> draws(10000);
    for (double& x : draws) x = sample_lambda(1.0, rng);
    const double d = ks_uniform_statistic(draws);
    const double p_ks = ks_pvalue(d, draws.size());
    if (!(p_ks > level)) res.passed = false;

    const std::vector<std::vector<double>> dists{{0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.3, 0.4}};
    constexpr std::size_t n = 40000;
    std::string cat;
    for (const auto& probs : dists) {
        std::vector<std::size_t> counts(probs.size(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[sample_partner(probs, rng)];
        for (std::size_t k = 0; k < probs.size(); ++k) {
            const auto [lo, hi] = binomial_bounds(n, probs[k], level);
            const double c = static_cast<double>(counts[k]);
            if (c < lo || c > hi) {
                res.passed = false;
                cat += fmt(" index %.0f count %.0f outside [%.0f,", static_cast<double>(k), c, lo) + fmt("%.0f];", hi);
            }
        }
    }
    res.detail = fmt("Beta(1,1) KS D = %.4f, p = %.3g; categorical counts within 99%% binomial bounds", d, p_ks) + cat;
    return res;
}

std::vector<CheckResult> run_all() {
    return {gradient_check(), reduction_chain(), importance_sampling_equivalence(), noise_injection_exactness(),
            sampler_statistics()};
}

}  // namespace mmlab::selfcheck

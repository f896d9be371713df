#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmlab/mentormix.hpp"
#include "mmlab/nn.hpp"

namespace mmlab::selfcheck {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Statistics used by the sampler checks.

/// Asymptotic Kolmogorov p-value for statistic D over n samples.
double ks_pvalue(double d, std::size_t n);
/// KS statistic of samples against Uniform(0, 1).
double ks_uniform_statistic(std::vector<double> samples);
/// Upper-tail p-value of a chi-square statistic.
double chi_square_pvalue(double statistic, double dof);
/// Two-sided (1 - level) binomial acceptance interval for counts.
std::pair<double, double> binomial_bounds(std::size_t trials, double p, double level);

/// Loss of (1/b) sum_i w_i ce(model(x_i), t_i) evaluated with plain loops,
/// independent of the library's forward pass. `kinks` receives the relu sign
/// pattern so callers can detect non-differentiable perturbations.
double reference_loss(const MLPModel& model, const Matrix& features, const Matrix& targets,
                      const std::vector<double>& weights, std::vector<bool>* kinks = nullptr);

/// Worst relative error of analytic vs central-difference gradients of every
/// method's batch loss with diagnostics frozen.
CheckResult gradient_check(int n_models = 5, std::size_t batch_size = 8, double tolerance = 1e-4,
                           std::uint64_t seed = 11);

/// mentormix(gamma=inf, lambda=1) == mixup(lambda=1) == vanilla.
CheckResult reduction_chain(int n_batches = 100, double tolerance = 1e-12, std::uint64_t seed = 12);

/// Enumeration over all b^b partner assignments equals the importance-sampled
/// expectation, for b = 2..max_batch.
CheckResult importance_sampling_equivalence(std::size_t max_batch = 5, double tolerance = 1e-10,
                                            std::uint64_t seed = 13);

/// Exact per-class corruption counts at every canonical level and uniform
/// blue flip targets (chi-square at `level`).
CheckResult noise_injection_exactness(double level = 0.01, std::uint64_t seed = 14);

/// Beta(1,1) passes KS against uniform; categorical frequencies within
/// binomial bounds.
CheckResult sampler_statistics(double level = 0.01, std::uint64_t seed = 15);

/// Every fast check above.
std::vector<CheckResult> run_all();

}  // namespace mmlab::selfcheck

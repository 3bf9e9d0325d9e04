#ifndef MTLFSL_STABILITY_HPP
#define MTLFSL_STABILITY_HPP

#include "mtlfsl/admm.hpp"
#include "mtlfsl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mtlfsl {

struct StabilityOptions {
    int runs = 100;
    double subsample_fraction = 0.5;
    double pi = 0.8;
    std::uint64_t seed = 0;
    /// A coefficient counts as selected when |Q_mi| exceeds this.
    double zero_tolerance = 1e-8;

    void validate() const;
};

struct StabilityResult {
    Matrix selection_probability;  // p x t, multiples of 1 / (runs * path length)
    int runs = 0;
    double subsample_fraction = 0.0;
    double pi = 0.0;
    std::vector<PenaltyConfig> lambda_path;
    /// Features whose maximum probability over time is at least pi.
    std::vector<Index> stable_features;
    int unconverged_runs = 0;
};

/// Subsample patients without replacement, rebuild the graph from the
/// subsample, refit, and count how often each coefficient is nonzero.
/// Runs execute concurrently; run b draws from a generator seeded by (seed, b).
StabilityResult stability_select(const TaskDataset& data, const std::vector<PenaltyConfig>& path,
                                 const StabilityOptions& options, const SolverOptions& solver = {},
                                 int threads = 0);

inline StabilityResult stability_select(const TaskDataset& data, const PenaltyConfig& cfg,
                                        const StabilityOptions& options, const SolverOptions& solver = {},
                                        int threads = 0) {
    return stability_select(data, std::vector<PenaltyConfig>{cfg}, options, solver, threads);
}

/// Serial reference for stability_select; identical output.
StabilityResult stability_select_serial(const TaskDataset& data, const std::vector<PenaltyConfig>& path,
                                        const StabilityOptions& options, const SolverOptions& solver = {});

/// Patients drawn for run `run`, sorted.
std::vector<std::string> stability_subsample(const TaskDataset& data, double fraction, std::uint64_t seed, int run);

/// features x timepoints CSV with a leading feature-name column.
void write_selection_csv(std::ostream& out, const StabilityResult& result, const TaskDataset& data);
std::string stable_features_json(const StabilityResult& result, const TaskDataset& data);

}  // namespace mtlfsl

#endif

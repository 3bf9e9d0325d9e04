#ifndef MTLFSL_DATA_IO_HPP
#define MTLFSL_DATA_IO_HPP

#include "mtlfsl/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtlfsl {

std::vector<std::string> default_timepoints();

struct LongitudinalRow {
    std::string patient_id;
    Index timepoint = 0;  // index into LongitudinalTable::timepoints
    std::vector<std::optional<double>> features;
    std::optional<double> target;
};

/// Raw cohort table; missing cells are empty optionals.
struct LongitudinalTable {
    std::vector<std::string> feature_names;
    std::vector<std::string> timepoints;
    std::vector<LongitudinalRow> rows;
};

struct CsvSchema {
    std::vector<std::string> timepoints = default_timepoints();
    std::string patient_column = "patient_id";
    std::string timepoint_column = "timepoint";
    std::string target_column = "target";
    /// Remove listed timepoints that no row uses, keeping the order of the rest.
    bool drop_absent_timepoints = true;
};

/// Header row `patient_id,timepoint,<features...>,target`. Empty, NA and NaN
/// cells are missing. Throws InputError naming the line on duplicate keys,
/// unknown timepoints and non-numeric values.
LongitudinalTable read_csv(std::istream& in, const CsvSchema& schema = {});
LongitudinalTable load_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes the same schema back; values round-trip bit-exactly.
void write_csv(std::ostream& out, const LongitudinalTable& table);

/// Per-timepoint statistics fitted on training data.
struct PreprocessParams {
    std::vector<std::string> feature_names;
    std::vector<std::string> timepoints;
    Matrix feature_means;  // p x t, after imputation
    Matrix feature_stds;   // p x t, 0 marks a constant feature
    Vector target_means;   // t; zero when targets are not centered
};

struct PreprocessResult {
    TaskDataset data;
    PreprocessParams params;
    std::vector<std::string> warnings;
};

/// Drop rows without a target, impute missing features with the timepoint
/// mean, z-score each feature per timepoint and, when `center_targets` is set,
/// subtract each timepoint's target mean.
PreprocessResult preprocess(const LongitudinalTable& table, bool center_targets = true);

/// Rows of one timepoint after applying fitted parameters. Targets may be missing (NaN).
struct TransformedTask {
    Matrix design;
    Vector target;
    std::vector<std::string> patient_ids;
};

std::vector<TransformedTask> transform_rows(const LongitudinalTable& table, const PreprocessParams& params);

/// Apply training-set parameters to held-out data (rows without targets dropped).
TaskDataset apply_preprocessing(const LongitudinalTable& table, const PreprocessParams& params);

struct SyntheticSpec {
    Index p = 20;
    Index t = 4;
    Index n_patients = 200;
    /// Fraction of patients still enrolled at each timepoint; empty means all 1.
    std::vector<double> retention;
    Index block_size = 5;
    double within_block_corr = 0.8;
    /// Correlation of a patient's block factors between visits.
    double visit_corr = 0.5;
    Index signal_features = 5;  // the leading features carry the signal
    double signal_amplitude = 1.0;
    /// Relative change of the signal weights from the first to the last timepoint.
    double drift = 0.2;
    double noise_sigma = 1.0;
    std::uint64_t seed = 1;
    std::vector<std::string> timepoints;  // empty: default labels truncated or T0..T{t-1}

    void validate() const;
};

struct SyntheticData {
    TaskDataset data;
    Matrix true_w;  // p x t
    LongitudinalTable table;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace mtlfsl

#endif

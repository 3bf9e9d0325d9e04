#include "mtlfsl/data_io.hpp"

#include "mtlfsl/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <utility>

namespace mtlfsl {

std::vector<std::string> default_timepoints() { return {"M00", "M06", "M12", "M24", "M36", "M48"}; }

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cur += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
    const auto v = trim(cell);
    return v.empty() || v == "NA" || v == "NaN" || v == "nan" || v == "NULL";
}

std::optional<double> parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
    if (is_missing(cell)) return std::nullopt;
    const auto v = parse_double(cell);
    if (!v || !std::isfinite(*v)) {
        throw InputError("line " + std::to_string(line_no) + ", column '" + column + "': non-numeric value '" +
                         cell + "'");
    }
    return v;
}

}  // namespace

LongitudinalTable read_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("CSV input is empty");
    const auto header = split_line(line);

    std::ptrdiff_t patient_col = -1, time_col = -1, target_col = -1;
    std::vector<std::size_t> feature_cols;
    LongitudinalTable table;
    table.timepoints = schema.timepoints;
    std::set<std::string> seen_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = trim(header[c]);
        if (!seen_names.insert(name).second) throw InputError("duplicate column '" + name + "'");
        if (name == schema.patient_column) patient_col = static_cast<std::ptrdiff_t>(c);
        else if (name == schema.timepoint_column) time_col = static_cast<std::ptrdiff_t>(c);
        else if (name == schema.target_column) target_col = static_cast<std::ptrdiff_t>(c);
        else {
            feature_cols.push_back(c);
            table.feature_names.push_back(name);
        }
    }
    if (patient_col < 0) throw InputError("missing required column '" + schema.patient_column + "'");
    if (time_col < 0) throw InputError("missing required column '" + schema.timepoint_column + "'");
    if (target_col < 0) throw InputError("missing required column '" + schema.target_column + "'");
    if (feature_cols.empty()) throw InputError("CSV has no feature columns");

    std::map<std::string, Index> tp_index;
    for (std::size_t k = 0; k < schema.timepoints.size(); ++k) tp_index[schema.timepoints[k]] = static_cast<Index>(k);

    std::set<std::pair<std::string, Index>> keys;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " cells, found " + std::to_string(cells.size()));
        }
        LongitudinalRow row;
        row.patient_id = trim(cells[static_cast<std::size_t>(patient_col)]);
        if (row.patient_id.empty()) throw InputError("line " + std::to_string(line_no) + ": empty patient id");
        const auto tp = trim(cells[static_cast<std::size_t>(time_col)]);
        const auto it = tp_index.find(tp);
        if (it == tp_index.end()) {
            throw InputError("line " + std::to_string(line_no) + ": unknown timepoint label '" + tp + "'");
        }
        row.timepoint = it->second;
        if (!keys.emplace(row.patient_id, row.timepoint).second) {
            throw InputError("line " + std::to_string(line_no) + ": duplicate key (" + row.patient_id + ", " + tp +
                             ")");
        }
        for (std::size_t k = 0; k < feature_cols.size(); ++k) {
            row.features.push_back(parse_cell(cells[feature_cols[k]], line_no, table.feature_names[k]));
        }
        row.target = parse_cell(cells[static_cast<std::size_t>(target_col)], line_no, schema.target_column);
        table.rows.push_back(std::move(row));
    }
    if (schema.drop_absent_timepoints) {
        std::vector<Index> remap(table.timepoints.size(), -1);
        std::vector<std::string> kept;
        for (const auto& row : table.rows) remap[static_cast<std::size_t>(row.timepoint)] = 0;
        for (std::size_t k = 0; k < remap.size(); ++k) {
            if (remap[k] < 0) continue;
            remap[k] = static_cast<Index>(kept.size());
            kept.push_back(table.timepoints[k]);
        }
        for (auto& row : table.rows) row.timepoint = remap[static_cast<std::size_t>(row.timepoint)];
        table.timepoints = std::move(kept);
    }
    return table;
}

LongitudinalTable load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_csv(in, schema);
}

void write_csv(std::ostream& out, const LongitudinalTable& table) {
    out << "patient_id,timepoint";
    for (const auto& name : table.feature_names) out << ',' << name;
    out << ",target\n";
    auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& row : table.rows) {
        out << row.patient_id << ',' << table.timepoints.at(static_cast<std::size_t>(row.timepoint));
        for (const auto& f : row.features) out << ',' << cell(f);
        out << ',' << cell(row.target) << '\n';
    }
}

PreprocessResult preprocess(const LongitudinalTable& table, bool center_targets) {
    const Index p = static_cast<Index>(table.feature_names.size());
    const Index t = static_cast<Index>(table.timepoints.size());
    PreprocessParams params;
    params.feature_names = table.feature_names;
    params.timepoints = table.timepoints;
    params.feature_means = Matrix::Zero(p, t);
    params.feature_stds = Matrix::Zero(p, t);
    params.target_means = Vector::Zero(t);
    std::vector<std::string> warnings;

    for (Index i = 0; i < t; ++i) {
        const auto& label = table.timepoints[static_cast<std::size_t>(i)];
        std::vector<const LongitudinalRow*> rows;
        for (const auto& row : table.rows) {
            if (row.timepoint == i && row.target) rows.push_back(&row);
        }
        if (rows.empty()) throw InputError("timepoint " + label + " has no rows with a target");
        if (rows.size() < 2) throw InputError("timepoint " + label + " has fewer than two rows with a target");
        double target_sum = 0.0;
        for (const auto* row : rows) target_sum += *row->target;
        if (center_targets) params.target_means(i) = target_sum / static_cast<double>(rows.size());

        for (Index m = 0; m < p; ++m) {
            double sum = 0.0;
            Index observed = 0;
            for (const auto* row : rows) {
                if (const auto& v = row->features[static_cast<std::size_t>(m)]) {
                    sum += *v;
                    ++observed;
                }
            }
            const auto& fname = table.feature_names[static_cast<std::size_t>(m)];
            if (observed == 0) {
                warnings.push_back("timepoint " + label + ": feature " + fname +
                                   " is entirely missing; set to 0");
                continue;
            }
            const double mean = sum / static_cast<double>(observed);
            // Imputed cells sit at the mean, so they add nothing to the squared deviations.
            double ss = 0.0;
            for (const auto* row : rows) {
                const double x = row->features[static_cast<std::size_t>(m)].value_or(mean);
                ss += (x - mean) * (x - mean);
            }
            const double sd = std::sqrt(ss / static_cast<double>(rows.size() - 1));
            params.feature_means(m, i) = mean;
            if (sd > 1e-13 * (1.0 + std::abs(mean))) {
                params.feature_stds(m, i) = sd;
            } else {
                warnings.push_back("timepoint " + label + ": feature " + fname + " is constant; set to 0");
            }
        }
    }

    auto data = apply_preprocessing(table, params);
    return {std::move(data), std::move(params), std::move(warnings)};
}

std::vector<TransformedTask> transform_rows(const LongitudinalTable& table, const PreprocessParams& params) {
    if (table.feature_names != params.feature_names) {
        throw InputError("feature columns do not match the fitted preprocessing parameters");
    }
    if (table.timepoints != params.timepoints) {
        throw InputError("timepoint labels do not match the fitted preprocessing parameters");
    }
    const Index p = static_cast<Index>(params.feature_names.size());
    const Index t = static_cast<Index>(params.timepoints.size());
    std::vector<TransformedTask> out(static_cast<std::size_t>(t));
    std::vector<std::vector<const LongitudinalRow*>> by_tp(static_cast<std::size_t>(t));
    for (const auto& row : table.rows) by_tp[static_cast<std::size_t>(row.timepoint)].push_back(&row);

    for (Index i = 0; i < t; ++i) {
        const auto& rows = by_tp[static_cast<std::size_t>(i)];
        auto& tr = out[static_cast<std::size_t>(i)];
        const Index n = static_cast<Index>(rows.size());
        tr.design.resize(n, p);
        tr.target.resize(n);
        for (Index r = 0; r < n; ++r) {
            const auto* row = rows[static_cast<std::size_t>(r)];
            for (Index m = 0; m < p; ++m) {
                const double mean = params.feature_means(m, i);
                const double sd = params.feature_stds(m, i);
                const double x = row->features[static_cast<std::size_t>(m)].value_or(mean);
                tr.design(r, m) = sd > 0.0 ? (x - mean) / sd : 0.0;
            }
            tr.target(r) = row->target ? *row->target - params.target_means(i)
                                       : std::numeric_limits<double>::quiet_NaN();
            tr.patient_ids.push_back(row->patient_id);
        }
    }
    return out;
}

TaskDataset apply_preprocessing(const LongitudinalTable& table, const PreprocessParams& params) {
    auto transformed = transform_rows(table, params);
    std::vector<Task> tasks;
    for (auto& tr : transformed) {
        Task task;
        std::vector<Index> keep;
        for (Index r = 0; r < tr.target.size(); ++r) {
            if (!std::isnan(tr.target(r))) keep.push_back(r);
        }
        task.design.resize(static_cast<Index>(keep.size()), tr.design.cols());
        task.target.resize(static_cast<Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            task.design.row(static_cast<Index>(k)) = tr.design.row(keep[k]);
            task.target(static_cast<Index>(k)) = tr.target(keep[k]);
            task.patient_ids.push_back(tr.patient_ids[static_cast<std::size_t>(keep[k])]);
        }
        tasks.push_back(std::move(task));
    }
    return TaskDataset(std::move(tasks), params.feature_names, params.timepoints);
}

void SyntheticSpec::validate() const {
    if (p < 1 || t < 2 || n_patients < 2) throw InputError("synthetic spec needs p >= 1, t >= 2, n >= 2");
    if (!retention.empty() && static_cast<Index>(retention.size()) != t) {
        throw InputError("retention schedule length must equal t");
    }
    for (const double r : retention) {
        if (!(r > 0.0 && r <= 1.0)) throw InputError("retention fractions must lie in (0, 1]");
    }
    if (block_size < 1) throw InputError("block_size must be positive");
    if (!(within_block_corr >= 0.0 && within_block_corr < 1.0)) throw InputError("within_block_corr must be in [0, 1)");
    if (!(visit_corr >= 0.0 && visit_corr <= 1.0)) throw InputError("visit_corr must be in [0, 1]");
    if (signal_features < 0 || signal_features > p) throw InputError("signal_features must be in [0, p]");
    if (!(noise_sigma >= 0.0)) throw InputError("noise_sigma must be non-negative");
    if (!timepoints.empty() && static_cast<Index>(timepoints.size()) != t) {
        throw InputError("timepoint label count must equal t");
    }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const Index p = spec.p;
    const Index t = spec.t;
    const Index n = spec.n_patients;
    const Index blocks = (p + spec.block_size - 1) / spec.block_size;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::string> labels = spec.timepoints;
    if (labels.empty()) {
        const auto defaults = default_timepoints();
        for (Index i = 0; i < t; ++i) {
            labels.push_back(i < static_cast<Index>(defaults.size()) ? defaults[static_cast<std::size_t>(i)]
                                                                      : "T" + std::to_string(i));
        }
    }

    Matrix true_w = Matrix::Zero(p, t);
    for (Index m = 0; m < spec.signal_features; ++m) {
        for (Index i = 0; i < t; ++i) {
            const double frac = static_cast<double>(i) / static_cast<double>(t - 1);
            true_w(m, i) = spec.signal_amplitude * (1.0 + spec.drift * frac);
        }
    }

    // Enrollment rank decides attrition: rank r is present at i iff r < round(retention_i * n).
    std::vector<Index> rank(static_cast<std::size_t>(n));
    std::iota(rank.begin(), rank.end(), Index{0});
    std::shuffle(rank.begin(), rank.end(), rng);
    std::vector<Index> present(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) {
        const double keep = spec.retention.empty() ? 1.0 : spec.retention[static_cast<std::size_t>(i)];
        present[static_cast<std::size_t>(i)] =
            std::max<Index>(0, std::min<Index>(n, static_cast<Index>(std::llround(keep * static_cast<double>(n)))));
    }

    const int width = static_cast<int>(std::to_string(n).size());
    auto patient_name = [width](Index j) {
        std::ostringstream os;
        os << 'S' << std::setw(width) << std::setfill('0') << j + 1;
        return os.str();
    };

    const double a = std::sqrt(spec.within_block_corr);
    const double b = std::sqrt(1.0 - spec.within_block_corr);
    const double va = std::sqrt(spec.visit_corr);
    const double vb = std::sqrt(1.0 - spec.visit_corr);

    std::vector<Task> tasks(static_cast<std::size_t>(t));
    LongitudinalTable table;
    table.timepoints = labels;
    for (Index m = 0; m < p; ++m) table.feature_names.push_back("f" + std::to_string(m + 1));

    Matrix x(t, p);
    for (Index j = 0; j < n; ++j) {
        Vector base(blocks);
        for (Index k = 0; k < blocks; ++k) base(k) = normal(rng);
        for (Index i = 0; i < t; ++i) {
            for (Index k = 0; k < blocks; ++k) {
                const double factor = va * base(k) + vb * normal(rng);
                for (Index m = k * spec.block_size; m < std::min(p, (k + 1) * spec.block_size); ++m) {
                    x(i, m) = a * factor + b * normal(rng);
                }
            }
        }
        Vector eps(t);
        for (Index i = 0; i < t; ++i) eps(i) = spec.noise_sigma * normal(rng);

        for (Index i = 0; i < t; ++i) {
            if (rank[static_cast<std::size_t>(j)] >= present[static_cast<std::size_t>(i)]) continue;
            auto& task = tasks[static_cast<std::size_t>(i)];
            const double y = x.row(i).dot(true_w.col(i)) + eps(i);
            const Index r = task.design.rows();
            task.design.conservativeResize(r + 1, p);
            task.design.row(r) = x.row(i);
            task.target.conservativeResize(r + 1);
            task.target(r) = y;
            task.patient_ids.push_back(patient_name(j));

            LongitudinalRow row;
            row.patient_id = patient_name(j);
            row.timepoint = i;
            for (Index m = 0; m < p; ++m) row.features.emplace_back(x(i, m));
            row.target = y;
            table.rows.push_back(std::move(row));
        }
    }
    for (auto& task : tasks) {
        if (task.design.cols() != p) task.design.resize(task.design.rows(), p);
    }
    return {TaskDataset(std::move(tasks), table.feature_names, labels), std::move(true_w), std::move(table)};
}

}  // namespace mtlfsl

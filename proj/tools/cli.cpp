#include "cli.hpp"

#include "mtlfsl/admm.hpp"
#include "mtlfsl/correlation.hpp"
#include "mtlfsl/data_io.hpp"
#include "mtlfsl/format.hpp"
#include "mtlfsl/metrics.hpp"
#include "mtlfsl/model_select.hpp"
#include "mtlfsl/stability.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <variant>

#ifdef MTLFSL_HAVE_OPENMP
#include <omp.h>
#endif

namespace mtlfsl::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";
constexpr int kModelSchemaVersion = 1;

struct Params {
    std::string input, model, out_dir, grid_file, cv_result, config, timepoints, retention;
    double lambda1 = 0.1, lambda2 = 0.05, lambda3 = 0.1, tau = 0.5, rho = 1.0;
    std::string graph_mode = "correlation";
    int max_iters = 5000;
    double eps_abs = 1e-6, eps_rel = 1e-4;
    int folds = 10, runs = 100;
    double subsample = 0.5, pi = 0.8, zero_tol = 1e-8;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string metric = "nmse";
    // synth
    int features = 20, tasks = 4, patients = 200, block_size = 5, signal_features = 5;
    double noise = 1.0, block_corr = 0.8, visit_corr = 0.5, amplitude = 1.0, drift = 0.2;
};

using Field = std::variant<std::string*, double*, int*, std::uint64_t*>;

struct OptionSpec {
    std::string key;
    Field field;
    std::string help;
};

class BadInput : public Error {
public:
    using Error::Error;
};

std::vector<OptionSpec> option_table(Params& p) {
    return {
        {"input", &p.input, "input CSV (patient_id,timepoint,<features...>,target)"},
        {"model", &p.model, "model JSON written by train or cv"},
        {"out-dir", &p.out_dir, "directory for all outputs"},
        {"lambda1", &p.lambda1, "elementwise sparsity weight"},
        {"lambda2", &p.lambda2, "feature-similarity graph weight"},
        {"lambda3", &p.lambda3, "temporal fusion weight"},
        {"tau", &p.tau, "correlation threshold in [0, 1]"},
        {"rho", &p.rho, "ADMM penalty parameter"},
        {"graph-mode", &p.graph_mode, "correlation | laplacian"},
        {"max-iters", &p.max_iters, "ADMM iteration budget"},
        {"eps-abs", &p.eps_abs, "absolute stopping tolerance"},
        {"eps-rel", &p.eps_rel, "relative stopping tolerance"},
        {"folds", &p.folds, "cross-validation folds"},
        {"grid-file", &p.grid_file, "JSON grid (lambda1, lambda2, lambda3, tau, folds, metric, seed)"},
        {"metric", &p.metric, "CV selection metric: nmse | wr | mean_rmse"},
        {"runs", &p.runs, "stability-selection runs"},
        {"subsample", &p.subsample, "stability-selection patient fraction"},
        {"pi", &p.pi, "stability threshold"},
        {"zero-tol", &p.zero_tol, "selection threshold on |coefficient|"},
        {"seed", &p.seed, "random seed"},
        {"threads", &p.threads, "worker threads (0 = all cores)"},
        {"timepoints", &p.timepoints, "comma-separated timepoint labels in order"},
        {"cv-result", &p.cv_result, "cv_result.json supplying lambda1..3 and tau"},
        {"features", &p.features, "synthetic feature count"},
        {"tasks", &p.tasks, "synthetic timepoint count"},
        {"patients", &p.patients, "synthetic patient count"},
        {"retention", &p.retention, "comma-separated retention fractions per timepoint"},
        {"noise", &p.noise, "synthetic noise standard deviation"},
        {"block-size", &p.block_size, "synthetic correlated-block size"},
        {"block-corr", &p.block_corr, "synthetic within-block correlation"},
        {"visit-corr", &p.visit_corr, "synthetic between-visit correlation"},
        {"signal-features", &p.signal_features, "synthetic signal-carrying features"},
        {"amplitude", &p.amplitude, "synthetic signal weight"},
        {"drift", &p.drift, "synthetic relative weight drift over time"},
    };
}

const std::map<std::string, std::vector<std::string>>& command_keys() {
    static const std::vector<std::string> solver{"rho", "graph-mode", "max-iters", "eps-abs", "eps-rel", "threads",
                                                 "timepoints"};
    static const std::vector<std::string> penalties{"lambda1", "lambda2", "lambda3", "tau", "cv-result"};
    auto join = [](std::initializer_list<std::vector<std::string>> parts) {
        std::vector<std::string> out;
        for (const auto& part : parts) out.insert(out.end(), part.begin(), part.end());
        return out;
    };
    static const std::map<std::string, std::vector<std::string>> keys{
        {"train", join({{"input", "out-dir"}, penalties, solver})},
        {"cv", join({{"input", "out-dir", "folds", "grid-file", "metric", "seed"}, solver})},
        {"predict", {"input", "model", "out-dir", "timepoints"}},
        {"eval", {"input", "model", "out-dir", "timepoints"}},
        {"stability", join({{"input", "out-dir", "runs", "subsample", "pi", "zero-tol", "seed"}, penalties, solver})},
        {"synth", {"out-dir", "seed", "features", "tasks", "patients", "retention", "noise", "block-size",
                   "block-corr", "visit-corr", "signal-features", "amplitude", "drift", "timepoints"}},
    };
    return keys;
}

// ---------------------------------------------------------------- helpers

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadInput("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BadInput("cannot write '" + path.string() + "'");
    out << content;
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
    std::ostringstream ss;
    fn(ss);
    write_file(path, ss.str());
}

std::string sha256_file(const std::string& path) {
    const auto data = read_file(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw InternalError("SHA-256 digest failed");
    }
    std::ostringstream hex;
    for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
    return hex.str();
}

// Honors SOURCE_DATE_EPOCH so that reruns can be byte-identical.
std::string timestamp() {
    std::time_t now = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::atoll(env));
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = static_cast<Index>(j.size());
    const auto cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(j.at(static_cast<std::size_t>(r)).size()) != cols) throw BadInput("ragged matrix in model file");
        for (Index c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index k = 0; k < v.size(); ++k) v(k) = j.at(static_cast<std::size_t>(k)).get<double>();
    return v;
}

// ---------------------------------------------------------------- model file

struct Model {
    Matrix w;
    PreprocessParams prep;
    FusionGraph graph;
    PenaltyConfig cfg;
};

json model_to_json(const Model& m, const SolverOptions& opts, const SolveStatus status, int iterations,
                   const TraceRecord* last) {
    json j;
    j["format"] = "mtlfsl-model";
    j["schema_version"] = kModelSchemaVersion;
    j["feature_names"] = m.prep.feature_names;
    j["timepoints"] = m.prep.timepoints;
    j["weights"] = matrix_to_json(m.w);
    j["preprocessing"] = {{"feature_means", matrix_to_json(m.prep.feature_means)},
                          {"feature_stds", matrix_to_json(m.prep.feature_stds)},
                          {"target_means", vector_to_json(m.prep.target_means)}};
    j["config"] = {{"lambda1", m.cfg.lambda1}, {"lambda2", m.cfg.lambda2}, {"lambda3", m.cfg.lambda3},
                   {"tau", m.cfg.tau},         {"rho", m.cfg.rho},         {"graph_mode", to_string(m.cfg.graph_mode)}};
    j["solver"] = {{"status", status == SolveStatus::Converged ? "converged" : "max_iterations"},
                   {"iterations", iterations},
                   {"max_iters", opts.max_iterations},
                   {"eps_abs", opts.eps_abs},
                   {"eps_rel", opts.eps_rel}};
    if (last) {
        j["final"] = {{"objective", last->objective}, {"loss", last->terms.loss},
                      {"sparsity", last->terms.sparsity}, {"graph", last->terms.graph},
                      {"fusion", last->terms.fusion},    {"primal", last->primal},
                      {"dual", last->dual}};
    }
    j["graph"] = {{"mode", to_string(m.graph.mode)},
                  {"tau", m.graph.tau},
                  {"weights", vector_to_json(m.graph.weights)},
                  {"s", matrix_to_json(m.graph.s)}};
    return j;
}

Model load_model(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw BadInput("model file '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "mtlfsl-model") throw BadInput("not an mtlfsl model file");
        if (j.at("schema_version").get<int>() != kModelSchemaVersion) {
            throw BadInput("unsupported model schema version " + std::to_string(j.at("schema_version").get<int>()));
        }
        Model m;
        m.prep.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.prep.timepoints = j.at("timepoints").get<std::vector<std::string>>();
        m.w = matrix_from_json(j.at("weights"));
        const auto& pre = j.at("preprocessing");
        m.prep.feature_means = matrix_from_json(pre.at("feature_means"));
        m.prep.feature_stds = matrix_from_json(pre.at("feature_stds"));
        m.prep.target_means = vector_from_json(pre.at("target_means"));
        const auto& c = j.at("config");
        m.cfg.lambda1 = c.at("lambda1").get<double>();
        m.cfg.lambda2 = c.at("lambda2").get<double>();
        m.cfg.lambda3 = c.at("lambda3").get<double>();
        m.cfg.tau = c.at("tau").get<double>();
        m.cfg.rho = c.at("rho").get<double>();
        m.cfg.graph_mode = parse_graph_mode(c.at("graph_mode").get<std::string>());
        const auto& g = j.at("graph");
        m.graph.mode = parse_graph_mode(g.at("mode").get<std::string>());
        m.graph.tau = g.at("tau").get<double>();
        m.graph.weights = vector_from_json(g.at("weights"));
        m.graph.s = matrix_from_json(g.at("s"));
        const auto p = static_cast<Index>(m.prep.feature_names.size());
        const auto t = static_cast<Index>(m.prep.timepoints.size());
        if (m.w.rows() != p || m.w.cols() != t) throw BadInput("model weights do not match its feature/timepoint lists");
        return m;
    } catch (const json::exception& e) {
        throw BadInput("model file '" + path + "' is malformed: " + e.what());
    }
}

// ---------------------------------------------------------------- plumbing

struct Context {
    std::string command;
    Params params;
    std::vector<std::string> given;  // keys set on the command line
    std::ostream& out;
    std::ostream& err;
    std::vector<json> inputs;
    std::string started;
};

int resolved_threads(int requested) {
#ifdef MTLFSL_HAVE_OPENMP
    return requested > 0 ? requested : omp_get_max_threads();
#else
    (void)requested;
    return 1;
#endif
}

CsvSchema schema_for(const Params& p) {
    CsvSchema schema;
    if (!p.timepoints.empty()) {
        schema.timepoints = split_list(p.timepoints);
        schema.drop_absent_timepoints = false;
    }
    return schema;
}

LongitudinalTable load_input(Context& ctx) {
    if (ctx.params.input.empty()) throw BadInput("--input is required");
    ctx.inputs.push_back({{"path", ctx.params.input}, {"sha256", sha256_file(ctx.params.input)}});
    return load_csv(ctx.params.input, schema_for(ctx.params));
}

fs::path out_dir(const Context& ctx) {
    if (ctx.params.out_dir.empty()) throw BadInput("--out-dir is required");
    fs::create_directories(ctx.params.out_dir);
    return fs::path(ctx.params.out_dir);
}

SolverOptions solver_options(const Params& p) {
    SolverOptions o;
    o.max_iterations = p.max_iters;
    o.eps_abs = p.eps_abs;
    o.eps_rel = p.eps_rel;
    o.validate();
    return o;
}

PenaltyConfig penalty_config(Context& ctx) {
    auto& p = ctx.params;
    if (!p.cv_result.empty()) {
        ctx.inputs.push_back({{"path", p.cv_result}, {"sha256", sha256_file(p.cv_result)}});
        json j;
        try {
            j = json::parse(read_file(p.cv_result));
            const auto& b = j.at("best_cell");
            auto given = [&](const char* k) {
                return std::find(ctx.given.begin(), ctx.given.end(), k) != ctx.given.end();
            };
            if (!given("lambda1")) p.lambda1 = b.at("lambda1").get<double>();
            if (!given("lambda2")) p.lambda2 = b.at("lambda2").get<double>();
            if (!given("lambda3")) p.lambda3 = b.at("lambda3").get<double>();
            if (!given("tau")) p.tau = b.at("tau").get<double>();
            if (!given("graph-mode") && j.contains("graph_mode")) p.graph_mode = j.at("graph_mode").get<std::string>();
            if (!given("rho") && j.contains("rho")) p.rho = j.at("rho").get<double>();
        } catch (const json::exception& e) {
            throw BadInput("cv result '" + p.cv_result + "' is malformed: " + e.what());
        }
    }
    PenaltyConfig cfg{p.lambda1, p.lambda2, p.lambda3, p.tau, p.rho, parse_graph_mode(p.graph_mode)};
    cfg.validate();
    return cfg;
}

void write_manifest(Context& ctx, const fs::path& dir, Params& params) {
    json parameters;
    for (const auto& spec : option_table(params)) {
        const auto& keys = command_keys().at(ctx.command);
        if (std::find(keys.begin(), keys.end(), spec.key) == keys.end() || spec.key == "out-dir") continue;
        std::visit([&](auto* ptr) { parameters[spec.key] = *ptr; }, spec.field);
    }
    if (parameters.contains("threads")) parameters["threads"] = resolved_threads(params.threads);
    json m;
    m["tool"] = "mtlfsl";
    m["version"] = kVersion;
    m["command"] = ctx.command;
    m["parameters"] = parameters;
    m["inputs"] = ctx.inputs;
    m["timestamps"] = {{"started", ctx.started}, {"finished", timestamp()}};
    write_file(dir / "manifest.json", m.dump(2) + "\n");
}

void emit_warnings(Context& ctx, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) ctx.err << "warning: " << w << '\n';
}

// ---------------------------------------------------------------- commands

int cmd_train(Context& ctx) {
    auto& p = ctx.params;
    const auto table = load_input(ctx);
    const auto cfg = penalty_config(ctx);
    const auto opts = solver_options(p);
    const auto dir = out_dir(ctx);

    auto prep = preprocess(table);
    emit_warnings(ctx, prep.warnings);
    std::vector<std::string> warnings;
    const auto graph = build_fusion_graph(prep.data, cfg.tau, cfg.graph_mode, resolved_threads(p.threads), &warnings);
    emit_warnings(ctx, warnings);
    const auto res = solve(prep.data, graph, cfg, opts);
    const auto& last = res.trace.records.back();

    Model model{res.w.values, prep.params, graph, cfg};
    write_file(dir / "model.json", model_to_json(model, opts, res.status, res.iterations, &last).dump(2) + "\n");
    write_stream(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, res.trace); });
    write_stream(dir / "graph.csv", [&](std::ostream& os) { write_matrix_csv(os, graph.s, prep.data.feature_names()); });
    write_manifest(ctx, dir, p);

    ctx.out << "iterations " << res.iterations << " ("
            << (res.status == SolveStatus::Converged ? "converged" : "iteration limit reached") << ")\n"
            << "objective " << format_double(last.objective) << "\n"
            << "primal_residual " << format_double(last.primal) << "\n"
            << "dual_residual " << format_double(last.dual) << "\n";
    if (res.status != SolveStatus::Converged) {
        ctx.err << "warning: solver stopped at the iteration limit; model written anyway\n";
        return kNotConverged;
    }
    return kOk;
}

std::vector<Vector> raw_predictions(const Model& model, const std::vector<TransformedTask>& rows) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Vector yhat = rows[i].design * model.w.col(static_cast<Index>(i));
        yhat.array() += model.prep.target_means(static_cast<Index>(i));
        out.push_back(std::move(yhat));
    }
    return out;
}

LongitudinalTable load_input_for_model(Context& ctx, const Model& model) {
    if (ctx.params.input.empty()) throw BadInput("--input is required");
    ctx.inputs.push_back({{"path", ctx.params.input}, {"sha256", sha256_file(ctx.params.input)}});
    CsvSchema schema;
    schema.timepoints = model.prep.timepoints;
    schema.drop_absent_timepoints = false;
    return load_csv(ctx.params.input, schema);
}

Model model_input(Context& ctx) {
    if (ctx.params.model.empty()) throw BadInput("--model is required");
    ctx.inputs.push_back({{"path", ctx.params.model}, {"sha256", sha256_file(ctx.params.model)}});
    return load_model(ctx.params.model);
}

int cmd_predict(Context& ctx) {
    const auto model = model_input(ctx);
    const auto table = load_input_for_model(ctx, model);
    const auto dir = out_dir(ctx);
    const auto rows = transform_rows(table, model.prep);
    const auto yhat = raw_predictions(model, rows);
    write_stream(dir / "predictions.csv", [&](std::ostream& os) {
        os << "patient_id,timepoint,prediction\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t r = 0; r < rows[i].patient_ids.size(); ++r) {
                os << rows[i].patient_ids[r] << ',' << model.prep.timepoints[i] << ','
                   << format_double(yhat[i](static_cast<Index>(r))) << '\n';
            }
        }
    });
    write_manifest(ctx, dir, ctx.params);
    return kOk;
}

int cmd_eval(Context& ctx) {
    const auto model = model_input(ctx);
    const auto table = load_input_for_model(ctx, model);
    const auto dir = out_dir(ctx);
    const auto data = apply_preprocessing(table, model.prep);
    std::vector<Vector> y, yhat;
    const auto pred = predict(model.w, data);
    for (Index i = 0; i < data.num_tasks(); ++i) {
        y.push_back(data.task(i).target.array() + model.prep.target_means(i));
        yhat.push_back(pred[static_cast<std::size_t>(i)].array() + model.prep.target_means(i));
    }
    const auto report = evaluate(y, yhat, data.timepoint_labels());
    write_file(dir / "report.json", report_to_json(report));
    write_stream(dir / "report.csv", [&](std::ostream& os) { write_report_csv(os, report); });
    write_manifest(ctx, dir, ctx.params);
    ctx.out << "nmse " << format_double(report.nmse) << "\nwr " << format_double(report.wr) << '\n';
    for (std::size_t i = 0; i < report.timepoints.size(); ++i) {
        ctx.out << "rmse " << report.timepoints[i] << ' ' << format_double(report.per_task_rmse[i]) << '\n';
    }
    return kOk;
}

int cmd_cv(Context& ctx) {
    auto& p = ctx.params;
    const auto table = load_input(ctx);
    const auto opts = solver_options(p);
    const auto dir = out_dir(ctx);
    auto given = [&](const char* k) { return std::find(ctx.given.begin(), ctx.given.end(), k) != ctx.given.end(); };

    GridSpec grid;
    grid.rho = p.rho;
    grid.graph_mode = parse_graph_mode(p.graph_mode);
    grid.folds = p.folds;
    grid.seed = p.seed;
    grid.metric = parse_selection_metric(p.metric);
    if (!p.grid_file.empty()) {
        ctx.inputs.push_back({{"path", p.grid_file}, {"sha256", sha256_file(p.grid_file)}});
        grid = grid_from_json(read_file(p.grid_file), grid);
        // Explicit flags win over the grid file.
        if (given("folds")) grid.folds = p.folds;
        if (given("seed")) grid.seed = p.seed;
        if (given("metric")) grid.metric = parse_selection_metric(p.metric);
    }
    grid.validate();
    p.folds = grid.folds;
    p.seed = grid.seed;
    p.metric = to_string(grid.metric);

    auto prep = preprocess(table);
    emit_warnings(ctx, prep.warnings);
    const auto result = cross_validate(prep.data, grid, opts, resolved_threads(p.threads));
    emit_warnings(ctx, result.warnings);

    const auto& b = result.best_cell;
    PenaltyConfig cfg{b.lambda1, b.lambda2, b.lambda3, b.tau, grid.rho, grid.graph_mode};
    Model model{result.refit_model.values, prep.params, result.refit_graph, cfg};
    write_stream(dir / "grid_scores.csv", [&](std::ostream& os) { write_grid_scores_csv(os, result); });
    write_file(dir / "cv_result.json", cv_result_to_json(result, grid));
    write_file(dir / "model.json", model_to_json(model, opts, result.refit_status, 0, nullptr).dump(2) + "\n");
    write_manifest(ctx, dir, p);
    ctx.out << "best lambda1 " << format_double(b.lambda1) << " lambda2 " << format_double(b.lambda2) << " lambda3 "
            << format_double(b.lambda3) << " tau " << format_double(b.tau) << "\n"
            << to_string(grid.metric) << ' ' << format_double(result.best_mean) << '\n';
    return kOk;
}

int cmd_stability(Context& ctx) {
    auto& p = ctx.params;
    const auto table = load_input(ctx);
    const auto cfg = penalty_config(ctx);
    const auto opts = solver_options(p);
    const auto dir = out_dir(ctx);
    auto prep = preprocess(table);
    emit_warnings(ctx, prep.warnings);

    StabilityOptions so;
    so.runs = p.runs;
    so.subsample_fraction = p.subsample;
    so.pi = p.pi;
    so.seed = p.seed;
    so.zero_tolerance = p.zero_tol;
    const auto res = stability_select(prep.data, cfg, so, opts, resolved_threads(p.threads));
    write_stream(dir / "selection_probability.csv",
                 [&](std::ostream& os) { write_selection_csv(os, res, prep.data); });
    write_file(dir / "stable_features.json", stable_features_json(res, prep.data));
    write_manifest(ctx, dir, p);
    ctx.out << "stable features " << res.stable_features.size() << " of " << prep.data.num_features() << '\n';
    if (res.unconverged_runs > 0) {
        ctx.err << "warning: " << res.unconverged_runs << " fit(s) hit the iteration limit\n";
    }
    return kOk;
}

int cmd_synth(Context& ctx) {
    auto& p = ctx.params;
    const auto dir = out_dir(ctx);
    SyntheticSpec spec;
    spec.p = p.features;
    spec.t = p.tasks;
    spec.n_patients = p.patients;
    for (const auto& r : split_list(p.retention)) {
        const auto v = parse_double(r);
        if (!v) throw BadInput("--retention expects comma-separated numbers");
        spec.retention.push_back(*v);
    }
    spec.block_size = p.block_size;
    spec.within_block_corr = p.block_corr;
    spec.visit_corr = p.visit_corr;
    spec.signal_features = p.signal_features;
    spec.signal_amplitude = p.amplitude;
    spec.drift = p.drift;
    spec.noise_sigma = p.noise;
    spec.seed = p.seed;
    spec.timepoints = split_list(p.timepoints);
    const auto synth = generate_synthetic(spec);

    write_stream(dir / "data.csv", [&](std::ostream& os) { write_csv(os, synth.table); });
    write_stream(dir / "true_W.csv", [&](std::ostream& os) {
        os << "feature";
        for (const auto& tp : synth.table.timepoints) os << ',' << tp;
        os << '\n';
        for (Index m = 0; m < synth.true_w.rows(); ++m) {
            os << synth.table.feature_names[static_cast<std::size_t>(m)];
            for (Index i = 0; i < synth.true_w.cols(); ++i) os << ',' << format_double(synth.true_w(m, i));
            os << '\n';
        }
    });
    write_manifest(ctx, dir, p);
    ctx.out << "patients per timepoint";
    for (const auto n : synth.data.patient_counts()) ctx.out << ' ' << n;
    ctx.out << '\n';
    return kOk;
}

void apply_config(Context& ctx, Params& params) {
    if (params.config.empty()) return;
    json j;
    try {
        j = json::parse(read_file(params.config));
    } catch (const json::exception& e) {
        throw BadInput("config '" + params.config + "' is not valid JSON: " + e.what());
    }
    // A manifest nests its values under "parameters"; a plain config is flat.
    const json& values = j.contains("parameters") ? j.at("parameters") : j;
    const auto& keys = command_keys().at(ctx.command);
    for (const auto& spec : option_table(params)) {
        if (std::find(keys.begin(), keys.end(), spec.key) == keys.end()) continue;
        if (std::find(ctx.given.begin(), ctx.given.end(), spec.key) != ctx.given.end()) continue;
        if (!values.contains(spec.key)) continue;
        try {
            std::visit([&](auto* ptr) { *ptr = values.at(spec.key).get<std::remove_pointer_t<decltype(ptr)>>(); },
                       spec.field);
        } catch (const json::exception& e) {
            throw BadInput("config key '" + spec.key + "' has the wrong type: " + e.what());
        }
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Params params;
    CLI::App app{"MTL-FSL: multi-task longitudinal regression with a feature-similarity graph penalty", "mtlfsl"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    const std::map<std::string, std::string> descriptions{
        {"train", "fit a model and write model.json, trace.csv, graph.csv"},
        {"cv", "cross-validate a penalty grid and refit the best cell"},
        {"predict", "write predictions for every row of a CSV"},
        {"eval", "evaluate a model against a labeled CSV"},
        {"stability", "longitudinal stability selection"},
        {"synth", "generate a synthetic cohort with known weights"},
    };
    std::map<std::string, CLI::App*> subs;
    std::map<std::string, std::map<std::string, CLI::Option*>> opts;
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    for (const auto& [name, keys] : command_keys()) {
        auto* sub = app.add_subcommand(name, descriptions.at(name));
        sub->add_option("--config", params.config, "JSON config or manifest; explicit flags win");
        for (const auto& spec : option_table(params)) {
            if (std::find(keys.begin(), keys.end(), spec.key) == keys.end()) continue;
            std::visit([&](auto* ptr) { opts[name][spec.key] = sub->add_option("--" + spec.key, *ptr, spec.help); },
                       spec.field);
        }
        subs[name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kBadInput;
    }

    std::string command;
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) command = name;
    }
    Context ctx{command, params, {}, out, err, {}, timestamp()};
    for (const auto& [key, opt] : opts[command]) {
        if (opt->count() > 0) ctx.given.push_back(key);
    }
    static const std::map<std::string, std::function<int(Context&)>> handlers{
        {"train", cmd_train}, {"cv", cmd_cv},       {"predict", cmd_predict},
        {"eval", cmd_eval},   {"stability", cmd_stability}, {"synth", cmd_synth},
    };
    try {
        apply_config(ctx, ctx.params);
        return handlers.at(command)(ctx);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const MetricError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const BadInput& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
}

}  // namespace mtlfsl::cli

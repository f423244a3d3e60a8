#include "dagem/experiment.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"
#include "dagem/fitting.hpp"
#include "dagem/kiiveri_em.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

namespace dagem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    const std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::pair<double, double> parse_range(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(path + ": expected [low, high]");
    return {json_number(j[0], path + "[0]"), json_number(j[1], path + "[1]")};
}

std::size_t parse_count(const Json& j, const std::string& path, long long minimum) {
    const long long v = json_integer(j, path);
    if (v < minimum) throw ConfigError(path + ": must be at least " + std::to_string(minimum));
    return static_cast<std::size_t>(v);
}

std::vector<std::vector<bool>> ancestor_sets(const DagSpec& dag) {
    std::vector<std::vector<bool>> anc(dag.size(), std::vector<bool>(dag.size(), false));
    for (int k : dag.topo_order) {
        auto& row = anc[static_cast<std::size_t>(k)];
        for (int j : dag.parents[static_cast<std::size_t>(k)]) {
            row[static_cast<std::size_t>(j)] = true;
            const auto& up = anc[static_cast<std::size_t>(j)];
            for (std::size_t a = 0; a < dag.size(); ++a) {
                if (up[a]) row[a] = true;
            }
        }
    }
    return anc;
}

// Prefers nodes with children whose parents include many roots, so that root
// interventions move the target's parent region; ties go to more ancestors.
int auto_target(const DagSpec& dag) {
    const auto anc = ancestor_sets(dag);
    std::vector<bool> has_child(dag.size(), false);
    for (const auto& pa : dag.parents) {
        for (int j : pa) has_child[static_cast<std::size_t>(j)] = true;
    }
    int best = -1;
    std::pair<long, long> best_key{-1, -1};
    for (std::size_t k = 0; k < dag.size(); ++k) {
        if (dag.parents[k].empty() || !has_child[k]) continue;
        const long root_parents = std::count_if(dag.parents[k].begin(), dag.parents[k].end(),
                                                [&](int j) { return dag.is_root(j); });
        const std::pair<long, long> key{root_parents, std::count(anc[k].begin(), anc[k].end(), true)};
        if (key > best_key) {
            best = static_cast<int>(k);
            best_key = key;
        }
    }
    if (best < 0) {
        throw ConfigError("random DAG has no node with both parents and children; set experiment.target");
    }
    return best;
}

// Roots ranked: parents of the target, other ancestors, then the rest.
ShiftScenario root_interventions(const DagSpec& dag, const SemParams& params, int target,
                                 const RandomDagOptions& options) {
    const auto anc = ancestor_sets(dag);
    const auto& pa = dag.parents[static_cast<std::size_t>(target)];
    std::vector<std::pair<int, int>> ranked;
    for (std::size_t k = 0; k < dag.size(); ++k) {
        const int node = static_cast<int>(k);
        if (!dag.is_root(node) || node == target) continue;
        const bool parent = std::find(pa.begin(), pa.end(), node) != pa.end();
        const int rank = parent ? 0 : anc[static_cast<std::size_t>(target)][k] ? 1 : 2;
        ranked.emplace_back(rank, node);
    }
    std::sort(ranked.begin(), ranked.end());
    if (static_cast<int>(ranked.size()) > options.shifted_roots) {
        ranked.resize(static_cast<std::size_t>(options.shifted_roots));
    }
    ShiftScenario out;
    for (const auto& [rank, k] : ranked) {
        const double sd = std::sqrt(params.variances(k));
        out.shifts.emplace_back(CovariateShift{dag.names[static_cast<std::size_t>(k)],
                                               params.intercepts(k) + options.root_mean_shift * sd,
                                               params.variances(k) * options.root_variance_scale});
    }
    return out;
}

Scores nan_scores() { return Scores{kNaN, kNaN, kNaN}; }

std::string scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::SevenNode: return "seven_node";
        case ScenarioKind::Contraction: return "contraction";
        case ScenarioKind::RandomSparse: return "random_sparse";
        case ScenarioKind::External: return "external";
    }
    return "unknown";
}

}  // namespace

std::string method_name(Method method) {
    switch (method) {
        case Method::FitOnSource: return "fit_on_source";
        case Method::KiiveriEm: return "kiiveri_em";
        case Method::FirstOrderEm: return "first_order_em";
    }
    return "unknown";
}

Method parse_method(const std::string& name, const std::string& path) {
    if (name == "fit_on_source") return Method::FitOnSource;
    if (name == "kiiveri_em") return Method::KiiveriEm;
    if (name == "first_order_em") return Method::FirstOrderEm;
    throw ConfigError(path + ": unknown method '" + name + "'");
}

ExperimentConfig experiment_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    const std::string root = "experiment";
    reject_unknown_keys(j,
                        {"label", "scenario", "seven_node", "random_dag", "shift", "target", "n_source", "n_target",
                         "repeats", "seed", "methods", "em", "kiiveri", "threads", "record_runtime", "scatter", "svg",
                         "external"},
                        root);
    ExperimentConfig c;
    auto f = [&](const std::string& key) { return root + "." + key; };
    if (j.contains("label")) c.label = json_string(j.at("label"), f("label"));
    if (j.contains("scenario")) {
        const std::string s = json_string(j.at("scenario"), f("scenario"));
        if (s == "seven_node") c.scenario = ScenarioKind::SevenNode;
        else if (s == "contraction") c.scenario = ScenarioKind::Contraction;
        else if (s == "random_sparse") c.scenario = ScenarioKind::RandomSparse;
        else if (s == "external") c.scenario = ScenarioKind::External;
        else throw ConfigError(f("scenario") + ": expected seven_node, contraction, random_sparse or external");
    }
    if (j.contains("seven_node")) {
        const Json& s = j.at("seven_node");
        const std::string p = f("seven_node");
        reject_unknown_keys(s, {"beta_c1", "beta_x", "beta_z", "intercept"}, p);
        if (s.contains("beta_c1")) c.seven_node.beta_c1 = json_number(s.at("beta_c1"), p + ".beta_c1");
        if (s.contains("beta_x")) c.seven_node.beta_x = json_number(s.at("beta_x"), p + ".beta_x");
        if (s.contains("beta_z")) c.seven_node.beta_z = json_number(s.at("beta_z"), p + ".beta_z");
        if (s.contains("intercept")) c.seven_node.intercept = json_number(s.at("intercept"), p + ".intercept");
    }
    if (j.contains("random_dag")) {
        const Json& s = j.at("random_dag");
        const std::string p = f("random_dag");
        reject_unknown_keys(s,
                            {"p", "expected_parents", "coef_range", "var_range", "structure_seed", "shifted_roots",
                             "root_mean_shift", "root_variance_scale"},
                            p);
        auto& r = c.random_dag;
        if (s.contains("p")) r.p = parse_count(s.at("p"), p + ".p", 2);
        if (s.contains("expected_parents")) {
            r.expected_parents = json_number(s.at("expected_parents"), p + ".expected_parents");
        }
        if (s.contains("coef_range")) r.coef_range = parse_range(s.at("coef_range"), p + ".coef_range");
        if (s.contains("var_range")) r.var_range = parse_range(s.at("var_range"), p + ".var_range");
        if (s.contains("structure_seed")) {
            r.structure_seed = parse_count(s.at("structure_seed"), p + ".structure_seed", 0);
        }
        if (s.contains("shifted_roots")) {
            r.shifted_roots = static_cast<int>(parse_count(s.at("shifted_roots"), p + ".shifted_roots", 0));
        }
        if (s.contains("root_mean_shift")) {
            r.root_mean_shift = json_number(s.at("root_mean_shift"), p + ".root_mean_shift");
        }
        if (s.contains("root_variance_scale")) {
            r.root_variance_scale = json_number(s.at("root_variance_scale"), p + ".root_variance_scale");
            if (!(r.root_variance_scale > 0.0)) throw ConfigError(p + ".root_variance_scale: must be positive");
        }
    }
    if (j.contains("shift")) {
        const Json& s = j.at("shift");
        if (s.is_string()) {
            c.shift_kind = s.get<std::string>();
            if (c.shift_kind != "mechanism" && c.shift_kind != "covariate" && c.shift_kind != "none") {
                throw ConfigError(f("shift") + ": expected mechanism, covariate, none or a scenario object");
            }
        } else {
            c.shift_kind = "custom";
            c.custom_shift = scenario_from_json(s, f("shift"));
        }
    }
    if (j.contains("target")) c.target = json_string(j.at("target"), f("target"));
    if (j.contains("n_source")) c.n_source = parse_count(j.at("n_source"), f("n_source"), 2);
    if (j.contains("n_target")) c.n_target = parse_count(j.at("n_target"), f("n_target"), 2);
    if (j.contains("repeats")) c.repeats = static_cast<int>(parse_count(j.at("repeats"), f("repeats"), 1));
    if (j.contains("seed")) c.seed = parse_count(j.at("seed"), f("seed"), 0);
    if (j.contains("methods")) {
        const Json& m = j.at("methods");
        if (!m.is_array() || m.empty()) throw ConfigError(f("methods") + ": expected a non-empty array");
        c.methods.clear();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string p = f("methods") + "[" + std::to_string(i) + "]";
            const Method method = parse_method(json_string(m[i], p), p);
            if (std::find(c.methods.begin(), c.methods.end(), method) != c.methods.end()) {
                throw ConfigError(p + ": duplicate method");
            }
            c.methods.push_back(method);
        }
    }
    if (j.contains("em")) c.em = em_config_from_json(j.at("em"), f("em"));
    if (j.contains("kiiveri")) c.kiiveri = em_config_from_json(j.at("kiiveri"), f("kiiveri"));
    if (j.contains("threads")) c.threads = static_cast<int>(parse_count(j.at("threads"), f("threads"), 0));
    if (j.contains("record_runtime")) c.record_runtime = json_bool(j.at("record_runtime"), f("record_runtime"));
    if (j.contains("scatter")) c.scatter = json_bool(j.at("scatter"), f("scatter"));
    if (j.contains("svg")) c.svg = json_bool(j.at("svg"), f("svg"));
    if (j.contains("external")) {
        const Json& e = j.at("external");
        const std::string p = f("external");
        reject_unknown_keys(e, {"dag", "source", "target", "truth"}, p);
        for (const char* key : {"dag", "source", "target"}) {
            if (!e.contains(key)) throw ConfigError(p + "." + key + ": required field is missing");
        }
        c.external.dag = resolve(base_dir, json_string(e.at("dag"), p + ".dag"));
        c.external.source = resolve(base_dir, json_string(e.at("source"), p + ".source"));
        c.external.target = resolve(base_dir, json_string(e.at("target"), p + ".target"));
        if (e.contains("truth")) c.external.truth = resolve(base_dir, json_string(e.at("truth"), p + ".truth"));
    }
    if (c.scenario == ScenarioKind::External) {
        if (c.external.dag.empty()) throw ConfigError(f("external") + ": required for the external scenario");
        if (c.target.empty()) throw ConfigError(f("target") + ": required for the external scenario");
    }
    return c;
}

Json experiment_config_to_json(const ExperimentConfig& c) {
    Json methods = Json::array();
    for (Method m : c.methods) methods.push_back(method_name(m));
    Json j = {{"label", c.label},
              {"scenario", scenario_name(c.scenario)},
              {"seven_node",
               {{"beta_c1", c.seven_node.beta_c1},
                {"beta_x", c.seven_node.beta_x},
                {"beta_z", c.seven_node.beta_z},
                {"intercept", c.seven_node.intercept}}},
              {"random_dag",
               {{"p", c.random_dag.p},
                {"expected_parents", c.random_dag.expected_parents},
                {"coef_range", {c.random_dag.coef_range.first, c.random_dag.coef_range.second}},
                {"var_range", {c.random_dag.var_range.first, c.random_dag.var_range.second}},
                {"structure_seed", c.random_dag.structure_seed},
                {"shifted_roots", c.random_dag.shifted_roots},
                {"root_mean_shift", c.random_dag.root_mean_shift},
                {"root_variance_scale", c.random_dag.root_variance_scale}}},
              {"n_source", c.n_source},
              {"n_target", c.n_target},
              {"repeats", c.repeats},
              {"seed", c.seed},
              {"methods", methods},
              {"em", em_config_to_json(c.em)},
              {"kiiveri", em_config_to_json(c.kiiveri)},
              {"threads", c.threads},
              {"record_runtime", c.record_runtime},
              {"scatter", c.scatter},
              {"svg", c.svg}};
    j["shift"] = c.shift_kind == "custom" ? scenario_to_json(c.custom_shift) : Json(c.shift_kind);
    if (!c.target.empty()) j["target"] = c.target;
    if (c.scenario == ScenarioKind::External) {
        j["external"] = {{"dag", c.external.dag.string()},
                         {"source", c.external.source.string()},
                         {"target", c.external.target.string()}};
        if (!c.external.truth.empty()) j["external"]["truth"] = c.external.truth.string();
    }
    return j;
}

Problem build_problem(const ExperimentConfig& config) {
    SemModel model;
    switch (config.scenario) {
        case ScenarioKind::SevenNode: model = seven_node_example(config.seven_node); break;
        case ScenarioKind::Contraction: model = contraction_example(); break;
        case ScenarioKind::RandomSparse: {
            const auto& r = config.random_dag;
            model = random_sparse_dag(r.p, r.expected_parents, r.coef_range, r.var_range, r.structure_seed);
            break;
        }
        case ScenarioKind::External:
            throw ConfigError("experiment.scenario: external data has no generating model");
    }
    Problem problem;
    problem.dag = model.dag;
    problem.source = model.params;
    if (!config.target.empty()) {
        problem.target = model.dag.index_of(config.target);
    } else {
        problem.target = config.scenario == ScenarioKind::RandomSparse ? auto_target(model.dag)
                                                                       : model.dag.index_of("T");
    }
    const std::string& t_name = model.dag.names[static_cast<std::size_t>(problem.target)];
    if (config.shift_kind == "mechanism") {
        problem.shift = default_mechanism_shift(model, t_name);
    } else if (config.shift_kind == "covariate") {
        switch (config.scenario) {
            case ScenarioKind::SevenNode: problem.shift = default_covariate_shift(); break;
            case ScenarioKind::Contraction: problem.shift = ShiftScenario{{CovariateShift{"A", 3.0, 4.0}}}; break;
            default: problem.shift = root_interventions(model.dag, model.params, problem.target, config.random_dag);
        }
    } else if (config.shift_kind == "custom") {
        problem.shift = config.custom_shift;
    }
    problem.target_law = apply_shift(model.params, model.dag, problem.shift);
    return problem;
}

std::uint64_t repeat_seed(std::uint64_t seed, int repeat) { return derive_seed(seed, static_cast<std::uint64_t>(repeat)); }

RepeatData generate_repeat(const Problem& problem, const ExperimentConfig& config, int repeat) {
    RepeatData data;
    data.seed = repeat_seed(config.seed, repeat);
    data.source = sample(problem.source, problem.dag, config.n_source, derive_seed(data.seed, 1));
    const Matrix full = sample(problem.target_law, problem.dag, config.n_target, derive_seed(data.seed, 2));
    data.target = split_target(full, problem.target);
    return data;
}

MethodOutput run_method(Method method, const SemParams& source_fit, const DagSpec& dag, int target,
                        const Matrix& observed, const ExperimentConfig& config) {
    MethodOutput out;
    switch (method) {
        case Method::FitOnSource:
            out.params = source_fit;
            break;
        case Method::FirstOrderEm:
        case Method::KiiveriEm: {
            AdaptResult res = method == Method::FirstOrderEm
                                  ? adapt(source_fit, dag, target, observed, config.em)
                                  : kiiveri_adapt(source_fit, dag, target, observed, config.kiiveri);
            out.params = std::move(res.params);
            out.iterations = static_cast<int>(res.trace.iterations.size());
            out.converged = res.trace.termination == Termination::Converged;
            break;
        }
    }
    out.prediction = impute_adapted(out.params, dag, target, observed);
    return out;
}

const MethodSummary& ExperimentReport::summary_for(Method method) const {
    for (const auto& s : summary) {
        if (s.method == method) return s;
    }
    throw ConfigError("method " + method_name(method) + " was not part of the experiment");
}

namespace {

struct RepeatResult {
    std::vector<MetricsRow> rows;
    std::optional<ScatterData> scatter;
};

RepeatResult score_repeat(const std::string& label, const DagSpec& dag, int target, const Matrix& source,
                          const Matrix& observed, const Vector& truth, std::uint64_t seed, int repeat,
                          const ExperimentConfig& config, bool keep_scatter) {
    RepeatResult result;
    const SemParams source_fit = fit_dag_source(dag, source);
    const ColumnMoments moments = column_moments(source.col(target));
    if (keep_scatter) {
        result.scatter = ScatterData{truth, {}};
    }
    for (Method method : config.methods) {
        MetricsRow row;
        row.scenario = label;
        row.method = method;
        row.repeat = repeat;
        row.seed = seed;
        const auto start = std::chrono::steady_clock::now();
        try {
            const MethodOutput out = run_method(method, source_fit, dag, target, observed, config);
            row.scores = metrics(truth, out.prediction, moments.mean, moments.sd);
            row.iterations = out.iterations;
            row.converged = out.converged;
            if (result.scatter) result.scatter->predictions.emplace_back(method, out.prediction);
        } catch (const NumericalError&) {
            row.status = "numerical_failure";
            row.scores = nan_scores();
            row.converged = false;
        }
        row.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.em.validate();
    config.kiiveri.validate();
    ExperimentReport report;
    report.scenario = config.label;
    report.seed = config.seed;
    report.record_runtime = config.record_runtime;

    std::vector<RepeatResult> results;
    if (config.scenario == ScenarioKind::External) {
        const ExternalInputs in = ingest_external(config.external.dag, config.external.source,
                                                  config.external.target, config.target, config.external.truth);
        if (!in.truth) {
            throw ConfigError("experiment.external.truth: required to score an external experiment");
        }
        results.push_back(score_repeat(config.label, in.dag, in.target, in.source, in.target_observed, *in.truth,
                                       config.seed, 0, config, config.scatter || config.svg));
    } else {
        const Problem problem = build_problem(config);
        results.resize(static_cast<std::size_t>(config.repeats));
        std::vector<std::exception_ptr> errors(results.size());
        std::atomic<int> next{0};
        auto worker = [&] {
            for (int r = next++; r < config.repeats; r = next++) {
                try {
                    const RepeatData data = generate_repeat(problem, config, r);
                    results[static_cast<std::size_t>(r)] =
                        score_repeat(config.label, problem.dag, problem.target, data.source, data.target.observed,
                                     data.target.truth, data.seed, r, config, r == 0 && (config.scatter || config.svg));
                } catch (...) {
                    errors[static_cast<std::size_t>(r)] = std::current_exception();
                }
            }
        };
        int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
        threads = std::clamp(threads, 1, config.repeats);
        std::vector<std::jthread> pool;
        for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
        worker();
        pool.clear();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    for (auto& r : results) {
        report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
        if (r.scatter && !report.scatter) report.scatter = std::move(r.scatter);
    }
    for (Method method : config.methods) {
        MethodSummary s;
        s.method = method;
        Scores sum;
        for (const auto& row : report.rows) {
            if (row.method != method) continue;
            if (row.status != "ok") {
                ++s.failed;
                continue;
            }
            ++s.ok;
            sum.mae += row.scores.mae;
            sum.rmse += row.scores.rmse;
            sum.r2 += row.scores.r2;
        }
        s.mean = s.ok > 0 ? Scores{sum.mae / s.ok, sum.rmse / s.ok, sum.r2 / s.ok} : nan_scores();
        report.summary.push_back(s);
    }
    return report;
}

std::string report_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "scenario,method,repeat,seed,status,iterations,converged,mae,rmse,r2";
    if (report.record_runtime) out << ",runtime_s";
    out << '\n';
    for (const auto& row : report.rows) {
        out << row.scenario << ',' << method_name(row.method) << ',' << row.repeat << ',' << row.seed << ','
            << row.status << ',' << row.iterations << ',' << (row.converged ? "true" : "false") << ','
            << format_double(row.scores.mae) << ',' << format_double(row.scores.rmse) << ','
            << format_double(row.scores.r2);
        if (report.record_runtime) out << ',' << format_double(row.runtime_seconds);
        out << '\n';
    }
    for (const auto& s : report.summary) {
        out << report.scenario << ',' << method_name(s.method) << ",mean,," << (s.failed ? "partial" : "ok") << ",,,"
            << format_double(s.mean.mae) << ',' << format_double(s.mean.rmse) << ',' << format_double(s.mean.r2);
        if (report.record_runtime) out << ',';
        out << '\n';
    }
    return out.str();
}

std::string report_json(const ExperimentReport& report) {
    auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
    Json rows = Json::array();
    for (const auto& row : report.rows) {
        Json r = {{"scenario", row.scenario},
                  {"method", method_name(row.method)},
                  {"repeat", row.repeat},
                  {"seed", row.seed},
                  {"status", row.status},
                  {"iterations", row.iterations},
                  {"converged", row.converged},
                  {"mae", num(row.scores.mae)},
                  {"rmse", num(row.scores.rmse)},
                  {"r2", num(row.scores.r2)}};
        if (report.record_runtime) r["runtime_s"] = row.runtime_seconds;
        rows.push_back(std::move(r));
    }
    Json summary = Json::array();
    for (const auto& s : report.summary) {
        summary.push_back({{"method", method_name(s.method)},
                           {"ok", s.ok},
                           {"failed", s.failed},
                           {"mae", num(s.mean.mae)},
                           {"rmse", num(s.mean.rmse)},
                           {"r2", num(s.mean.r2)}});
    }
    Json j = {{"scenario", report.scenario}, {"seed", report.seed}, {"rows", rows}, {"summary", summary}};
    return j.dump(2) + "\n";
}

std::string scatter_csv(const ScatterData& scatter) {
    std::ostringstream out;
    out << "truth";
    for (const auto& [method, pred] : scatter.predictions) out << ',' << method_name(method);
    out << '\n';
    for (Eigen::Index i = 0; i < scatter.truth.size(); ++i) {
        out << format_double(scatter.truth(i));
        for (const auto& [method, pred] : scatter.predictions) out << ',' << format_double(pred(i));
        out << '\n';
    }
    return out.str();
}

std::string scatter_svg(const ScatterData& scatter, const std::string& title) {
    constexpr double panel = 280.0;
    constexpr double pad = 30.0;
    constexpr Eigen::Index max_points = 2000;
    const auto panels = static_cast<double>(std::max<std::size_t>(1, scatter.predictions.size()));
    double lo = scatter.truth.minCoeff();
    double hi = scatter.truth.maxCoeff();
    for (const auto& [method, pred] : scatter.predictions) {
        lo = std::min(lo, pred.minCoeff());
        hi = std::max(hi, pred.maxCoeff());
    }
    if (!(hi > lo)) hi = lo + 1.0;
    auto sx = [&](double v) { return pad + (v - lo) / (hi - lo) * (panel - 2 * pad); };
    auto sy = [&](double v) { return panel - pad - (v - lo) / (hi - lo) * (panel - 2 * pad); };
    std::ostringstream out;
    out.precision(5);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel * panels << "\" height=\"" << panel + 20
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"4\" y=\"14\">" << title << "</text>\n";
    const Eigen::Index n = std::min(scatter.truth.size(), max_points);
    for (std::size_t m = 0; m < scatter.predictions.size(); ++m) {
        const auto& [method, pred] = scatter.predictions[m];
        out << "<g transform=\"translate(" << panel * static_cast<double>(m) << ",20)\">\n";
        out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << panel - 2 * pad << "\" height=\""
            << panel - 2 * pad << "\" fill=\"none\" stroke=\"#888\"/>\n";
        out << "<line x1=\"" << sx(lo) << "\" y1=\"" << sy(lo) << "\" x2=\"" << sx(hi) << "\" y2=\"" << sy(hi)
            << "\" stroke=\"#c33\"/>\n";
        out << "<text x=\"" << pad << "\" y=\"" << pad - 6 << "\">" << method_name(method) << "</text>\n";
        for (Eigen::Index i = 0; i < n; ++i) {
            out << "<circle cx=\"" << sx(scatter.truth(i)) << "\" cy=\"" << sy(pred(i))
                << "\" r=\"1.2\" fill=\"#246\" fill-opacity=\"0.5\"/>\n";
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

Matrix align_columns(const CsvTable& table, const std::vector<std::string>& names, const std::string& source) {
    for (const auto& h : table.header) {
        if (std::find(names.begin(), names.end(), h) == names.end()) {
            throw DataError(source + ": unexpected column '" + h + "'");
        }
    }
    Matrix out(table.values.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t c = 0; c < names.size(); ++c) {
        const int col = table.column(names[c]);
        if (col < 0) {
            throw DataError(source + ": missing column '" + names[c] + "'");
        }
        for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
            const double v = table.values(r, col);
            if (std::isnan(v)) {
                throw DataError(source + ": row " + std::to_string(r + 2) + ", column '" + names[c] +
                                "': empty cell");
            }
            out(r, static_cast<Eigen::Index>(c)) = v;
        }
    }
    return out;
}

ExternalInputs ingest_external(const std::filesystem::path& dag_file, const std::filesystem::path& source_csv,
                               const std::filesystem::path& target_csv, const std::string& target_node,
                               const std::filesystem::path& truth_csv) {
    ExternalInputs in;
    in.dag = dag_from_json(read_json_file(dag_file));
    in.target = in.dag.index_of(target_node);

    const CsvTable source = read_csv(source_csv);
    if (source.values.rows() == 0) throw DataError(source_csv.string() + ": no data rows");
    in.source = align_columns(source, in.dag.names, source_csv.string());

    CsvTable target = read_csv(target_csv);
    if (target.values.rows() == 0) throw DataError(target_csv.string() + ": no data rows");
    const int t_col = target.column(target_node);
    if (t_col >= 0) {
        const auto filled = (target.values.col(t_col).array() == target.values.col(t_col).array()).count();
        if (filled > 0) {
            throw DataError(target_csv.string() + ": column '" + target_node + "' has " + std::to_string(filled) +
                            " filled cells; the target must be missing in every row");
        }
        target.header.erase(target.header.begin() + t_col);
        Matrix rest(target.values.rows(), target.values.cols() - 1);
        for (Eigen::Index c = 0, o = 0; c < target.values.cols(); ++c) {
            if (c != t_col) rest.col(o++) = target.values.col(c);
        }
        target.values = std::move(rest);
    }
    std::vector<std::string> observed_names;
    for (int k : observed_indices(in.dag.size(), in.target)) {
        observed_names.push_back(in.dag.names[static_cast<std::size_t>(k)]);
    }
    in.target_observed = align_columns(target, observed_names, target_csv.string());

    if (!truth_csv.empty()) {
        const CsvTable truth = read_csv(truth_csv);
        const Matrix col = align_columns(truth, {target_node}, truth_csv.string());
        if (col.rows() != in.target_observed.rows()) {
            throw DataError(truth_csv.string() + ": row count differs from the target data");
        }
        in.truth = col.col(0);
    }
    return in;
}

}  // namespace dagem

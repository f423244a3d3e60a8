#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"
#include "dagem/experiment.hpp"
#include "dagem/fitting.hpp"
#include "dagem/kiiveri_em.hpp"
#include "dagem/theory_checks.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace dagem;

namespace {

struct Common {
    fs::path config;
    std::optional<std::uint64_t> seed;
    fs::path out;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
    auto* opt = cmd->add_option("--config", c.config, "JSON configuration file");
    if (needs_config) opt->required();
    cmd->add_option("--seed", c.seed, "Override the configured seed");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig load_experiment(const Common& c) {
    ExperimentConfig config = experiment_config_from_json(read_json_file(c.config), c.config.parent_path());
    if (c.seed) config.seed = *c.seed;
    return config;
}

std::vector<std::string> observed_names(const DagSpec& dag, int target) {
    std::vector<std::string> names;
    for (int k : observed_indices(dag.size(), target)) names.push_back(dag.names[static_cast<std::size_t>(k)]);
    return names;
}

// Target-domain CSV for a given DAG: the target column may be absent or empty.
Matrix read_target_data(const fs::path& path, const DagSpec& dag, int target) {
    CsvTable table = read_csv(path);
    const std::string& t_name = dag.names[static_cast<std::size_t>(target)];
    const int col = table.column(t_name);
    if (col >= 0) {
        if ((table.values.col(col).array() == table.values.col(col).array()).any()) {
            throw DataError(path.string() + ": column '" + t_name + "' must be empty in target data");
        }
        std::vector<std::string> keep;
        for (const auto& h : table.header) {
            if (h != t_name) keep.push_back(h);
        }
        Matrix rest(table.values.rows(), table.values.cols() - 1);
        for (Eigen::Index c = 0, o = 0; c < table.values.cols(); ++c) {
            if (c != col) rest.col(o++) = table.values.col(c);
        }
        table.header = std::move(keep);
        table.values = std::move(rest);
    }
    return align_columns(table, observed_names(dag, target), path.string());
}

void emit(const Common& c, const std::string& stem, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
    } else {
        write_text_file(c.out / (stem + "." + c.format), text);
    }
}

int cmd_generate(const Common& c) {
    const ExperimentConfig config = load_experiment(c);
    const Problem problem = build_problem(config);
    const RepeatData data = generate_repeat(problem, config, 0);
    const fs::path out = c.out.empty() ? fs::path(".") : c.out;
    write_text_file(out / "dag.json", dag_to_json(problem.dag).dump(2) + "\n");
    write_text_file(out / "source_params.json", params_to_json(problem.source, problem.dag).dump(2) + "\n");
    write_text_file(out / "target_params.json", params_to_json(problem.target_law, problem.dag).dump(2) + "\n");
    write_text_file(out / "scenario.json", scenario_to_json(problem.shift).dump(2) + "\n");
    write_csv(out / "source.csv", problem.dag.names, data.source);
    write_csv(out / "target.csv", observed_names(problem.dag, problem.target), data.target.observed);
    const std::string& t_name = problem.dag.names[static_cast<std::size_t>(problem.target)];
    write_csv(out / "target_truth.csv", {t_name}, Matrix(data.target.truth));
    std::cout << "target " << t_name << ", seed " << data.seed << ", wrote " << out.string() << "\n";
    return 0;
}

int cmd_fit(const Common& c, const fs::path& dag_file, const fs::path& data_file) {
    const DagSpec dag = dag_from_json(read_json_file(dag_file));
    const Matrix data = align_columns(read_csv(data_file), dag.names, data_file.string());
    const SemParams params = fit_dag_source(dag, data);
    const std::string text = params_to_json(params, dag).dump(2) + "\n";
    if (c.out.empty()) {
        std::cout << text;
    } else {
        write_text_file(c.out / "params.json", text);
    }
    return 0;
}

int cmd_adapt(const Common& c, const fs::path& dag_file, const fs::path& params_file, const fs::path& data_file,
              const std::string& target_name, const std::string& method_name_) {
    const DagSpec dag = dag_from_json(read_json_file(dag_file));
    const SemParams params = params_from_json(read_json_file(params_file), dag);
    const int target = dag.index_of(target_name);
    const Matrix observed = read_target_data(data_file, dag, target);
    EmConfig em;
    if (!c.config.empty()) {
        const Json j = read_json_file(c.config);
        em = j.contains("em") ? em_config_from_json(j.at("em")) : em_config_from_json(j);
    }
    const Method method = parse_method(method_name_, "--method");
    if (method == Method::FitOnSource) throw ConfigError("--method: adapt needs first_order_em or kiiveri_em");
    const AdaptResult res = method == Method::FirstOrderEm ? adapt(params, dag, target, observed, em)
                                                           : kiiveri_adapt(params, dag, target, observed, em);
    const fs::path out = c.out.empty() ? fs::path(".") : c.out;
    write_text_file(out / "adapted_params.json", params_to_json(res.params, dag).dump(2) + "\n");
    std::ostringstream trace;
    write_trace_csv(trace, res.trace);
    write_text_file(out / "trace.csv", trace.str());
    std::cout << res.trace.iterations.size() << " iterations, "
              << (res.trace.termination == Termination::Converged ? "converged" : "iteration cap reached") << "\n";
    return 0;
}

int cmd_impute(const Common& c, const fs::path& dag_file, const fs::path& params_file, const fs::path& data_file,
               const std::string& target_name) {
    const DagSpec dag = dag_from_json(read_json_file(dag_file));
    const SemParams params = params_from_json(read_json_file(params_file), dag);
    const int target = dag.index_of(target_name);
    const Matrix observed = read_target_data(data_file, dag, target);
    const Vector mu = impute_adapted(params, dag, target, observed);
    std::ostringstream text;
    write_csv(text, {target_name}, Matrix(mu));
    if (c.out.empty()) {
        std::cout << text.str();
    } else {
        write_text_file(c.out / "imputed.csv", text.str());
    }
    return 0;
}

int cmd_evaluate(const Common& c, const fs::path& truth_file, const fs::path& pred_file, const fs::path& source_file,
                 const std::string& target_name) {
    const Vector truth = align_columns(read_csv(truth_file), {target_name}, truth_file.string()).col(0);
    const Vector pred = align_columns(read_csv(pred_file), {target_name}, pred_file.string()).col(0);
    const CsvTable source = read_csv(source_file);
    const int col = source.column(target_name);
    if (col < 0) throw DataError(source_file.string() + ": missing column '" + target_name + "'");
    const ColumnMoments moments = column_moments(source.values.col(col));
    const Scores s = metrics(truth, pred, moments.mean, moments.sd);
    std::string text;
    if (c.format == "json") {
        text = Json{{"mae", s.mae}, {"rmse", s.rmse}, {"r2", s.r2}}.dump(2) + "\n";
    } else {
        text = "mae,rmse,r2\n" + format_double(s.mae) + "," + format_double(s.rmse) + "," + format_double(s.r2) + "\n";
    }
    emit(c, "metrics", text);
    return 0;
}

int cmd_experiment(const Common& c) {
    const ExperimentConfig config = load_experiment(c);
    const ExperimentReport report = run_experiment(config);
    const std::string text = c.format == "json" ? report_json(report) : report_csv(report);
    if (c.out.empty()) {
        std::cout << text;
        return 0;
    }
    write_text_file(c.out / ("report." + c.format), text);
    if (report.scatter && config.scatter) write_text_file(c.out / "scatter.csv", scatter_csv(*report.scatter));
    if (report.scatter && config.svg) {
        write_text_file(c.out / "scatter.svg", scatter_svg(*report.scatter, config.label));
    }
    std::printf("%-16s %10s %10s %10s %6s\n", "method", "MAE", "RMSE", "R2", "fail");
    for (const auto& s : report.summary) {
        std::printf("%-16s %10.4f %10.4f %10.4f %6d\n", method_name(s.method).c_str(), s.mean.mae, s.mean.rmse,
                    s.mean.r2, s.failed);
    }
    return 0;
}

int cmd_theory(const Common& c, double radius, int probes, double fd_step) {
    const ExperimentConfig config = load_experiment(c);
    const Problem problem = build_problem(config);
    const RepeatData data = generate_repeat(problem, config, 0);
    const DagSpec& dag = problem.dag;
    const int t = problem.target;
    const Matrix& observed = data.target.observed;
    const bool intercept = config.em.include_intercept;

    const SemParams source_fit = fit_dag_source(dag, data.source);
    const AdaptResult res = adapt(source_fit, dag, t, observed, config.em);

    const LipschitzEnvelope env = lipschitz_envelope(res.params, dag, t, radius, probes, config.seed, intercept);
    const double delta_min = res.params.variances(t) * std::exp(-radius);
    const Matrix design = parent_design(dag, t, observed, intercept);
    Vector m_obs(static_cast<Eigen::Index>(dag.size()) - 1);
    const Vector m = implied_mean(res.params, dag);
    const auto idx = observed_indices(dag.size(), t);
    for (std::size_t a = 0; a < idx.size(); ++a) m_obs(static_cast<Eigen::Index>(a)) = m(idx[a]);
    const double gamma = gamma_bound(env, radius, delta_min, design, observed, m_obs);
    const CurvatureReport curv = ball_curvature(res.params, dag, t, observed, radius, intercept, gamma);
    const InformationReport info = louis_check(problem.target_law, dag, t, observed, fd_step, intercept);

    Json j = {{"radius", radius},
              {"probes", env.probes},
              {"curvature",
               {{"lambda_b", curv.lambda_b},
                {"mu_b", curv.mu_b},
                {"lambda_alpha", curv.lambda_alpha},
                {"mu_alpha", curv.mu_alpha},
                {"rho", curv.rho},
                {"lambda", curv.lambda},
                {"mu", curv.mu},
                {"gamma", curv.gamma},
                {"margin", curv.margin},
                {"kappa_bound", std::isfinite(curv.kappa) ? Json(curv.kappa) : Json(nullptr)},
                {"schur_ok", curv.schur_ok}}},
              {"envelope", {{"c_m", env.c_m}, {"c_k", env.c_k}, {"c_a", env.c_a}}},
              {"louis",
               {{"residual", info.residual},
                {"residual_plain", info.residual_plain},
                {"fd_stable", info.fd_stable},
                {"min_eig_miss", info.min_eig_miss},
                {"min_eig_comp_minus_obs", info.min_eig_comp_minus_obs}}},
              {"em", {{"iterations", res.trace.iterations.size()}}}};
    if (res.trace.iterations.size() >= 5) {
        const Vector b = active_coefficients(problem.target_law, dag, t, intercept);
        Vector ref(b.size() + 1);
        ref << b, std::log(problem.target_law.variances(t));
        const ContractionEstimate est = contraction_rate(res.trace, ref);
        j["contraction"] = {{"kappa_hat", est.kappa}, {"floor", est.floor}, {"plateau_start", est.plateau_start}};
    }

    std::printf("%-28s %14s\n", "quantity", "value");
    std::printf("%-28s %14.6g\n", "lambda (combined)", curv.lambda);
    std::printf("%-28s %14.6g\n", "mu (combined)", curv.mu);
    std::printf("%-28s %14.6g\n", "gamma bound", curv.gamma);
    std::printf("%-28s %14.6g\n", "kappa bound gamma/lambda", curv.kappa);
    std::printf("%-28s %14s\n", "schur condition", curv.schur_ok ? "holds" : "violated");
    std::printf("%-28s %14.6g\n", "louis residual", info.residual);
    std::printf("%-28s %14.6g\n", "min eig I_miss", info.min_eig_miss);
    std::printf("%-28s %14.6g\n", "min eig I_comp - I_obs", info.min_eig_comp_minus_obs);
    if (j.contains("contraction")) {
        std::printf("%-28s %14.6g\n", "empirical kappa", j["contraction"]["kappa_hat"].get<double>());
        std::printf("%-28s %14.6g\n", "empirical floor", j["contraction"]["floor"].get<double>());
    }
    if (!c.out.empty()) write_text_file(c.out / "theory.json", j.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-adaptive EM for imputing a systematically missing node in a Gaussian DAG"};
    app.require_subcommand(1);

    Common common;
    fs::path dag_file, params_file, data_file, truth_file, pred_file, source_file;
    std::string target = "T";
    std::string method = "first_order_em";
    double radius = 1.0;
    int probes = 256;
    double fd_step = 1e-3;

    auto* gen = app.add_subcommand("generate", "Sample source and target data for a synthetic scenario");
    add_common(gen, common, true);

    auto* fit = app.add_subcommand("fit", "Fit all mechanisms on fully observed source data");
    add_common(fit, common, false);
    fit->add_option("--dag", dag_file, "DAG JSON")->required();
    fit->add_option("--data", data_file, "Source CSV")->required();

    auto* adp = app.add_subcommand("adapt", "Adapt the target mechanism on target data without the target column");
    add_common(adp, common, false);
    adp->add_option("--dag", dag_file, "DAG JSON")->required();
    adp->add_option("--params", params_file, "Source parameter JSON")->required();
    adp->add_option("--data", data_file, "Target CSV")->required();
    adp->add_option("--target", target, "Missing node");
    adp->add_option("--method", method, "first_order_em or kiiveri_em");

    auto* imp = app.add_subcommand("impute", "Conditional-mean imputation of the missing node");
    add_common(imp, common, false);
    imp->add_option("--dag", dag_file, "DAG JSON")->required();
    imp->add_option("--params", params_file, "Parameter JSON")->required();
    imp->add_option("--data", data_file, "Target CSV")->required();
    imp->add_option("--target", target, "Missing node");

    auto* ev = app.add_subcommand("evaluate", "Score imputations against held-out truth");
    add_common(ev, common, false);
    ev->add_option("--truth", truth_file, "Truth CSV")->required();
    ev->add_option("--pred", pred_file, "Prediction CSV")->required();
    ev->add_option("--source-data", source_file, "Source CSV used for standardization")->required();
    ev->add_option("--target", target, "Missing node");

    auto* exp = app.add_subcommand("experiment", "Run a repeated comparison of all methods");
    add_common(exp, common, true);

    auto* th = app.add_subcommand("theory-check", "Curvature, stability, Louis and contraction diagnostics");
    add_common(th, common, true);
    th->add_option("--radius", radius, "Basin radius")->check(CLI::PositiveNumber);
    th->add_option("--probes", probes, "Probe count for ball suprema")->check(CLI::NonNegativeNumber);
    th->add_option("--fd-step", fd_step, "Finite-difference step")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_generate(common);
        if (*fit) return cmd_fit(common, dag_file, data_file);
        if (*adp) return cmd_adapt(common, dag_file, params_file, data_file, target, method);
        if (*imp) return cmd_impute(common, dag_file, params_file, data_file, target);
        if (*ev) return cmd_evaluate(common, truth_file, pred_file, source_file, target);
        if (*exp) return cmd_experiment(common);
        if (*th) return cmd_theory(common, radius, probes, fd_step);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Numerical);
    }
    return 0;
}

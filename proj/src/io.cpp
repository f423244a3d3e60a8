#include "dagem/io.hpp"

#include "dagem/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dagem {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

const Json& require(const Json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(path + "." + key + ": required field is missing");
    }
    return j.at(key);
}

}  // namespace

double json_number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

long long json_integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<long long>();
}

bool json_bool(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
    return j.get<bool>();
}

std::string json_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a string");
    return j.get<std::string>();
}

void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError(path + ": expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(path + "." + key + ": unknown field");
        }
    }
}

Json dag_to_json(const DagSpec& dag) {
    Json edges = Json::array();
    for (std::size_t k = 0; k < dag.size(); ++k) {
        for (int j : dag.parents[k]) {
            edges.push_back({dag.names[static_cast<std::size_t>(j)], dag.names[k]});
        }
    }
    return {{"nodes", dag.names}, {"edges", edges}};
}

DagSpec dag_from_json(const Json& j) {
    reject_unknown_keys(j, {"nodes", "edges"}, "dag");
    const Json& nodes = require(j, "nodes", "dag");
    if (!nodes.is_array()) throw ConfigError("dag.nodes: expected an array of names");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        names.push_back(json_string(nodes[i], "dag.nodes[" + std::to_string(i) + "]"));
    }
    std::vector<std::pair<std::string, std::string>> edges;
    if (j.contains("edges")) {
        const Json& e = j.at("edges");
        if (!e.is_array()) throw ConfigError("dag.edges: expected an array");
        for (std::size_t i = 0; i < e.size(); ++i) {
            const std::string path = "dag.edges[" + std::to_string(i) + "]";
            if (!e[i].is_array() || e[i].size() != 2) throw ConfigError(path + ": expected [parent, child]");
            edges.emplace_back(json_string(e[i][0], path + "[0]"), json_string(e[i][1], path + "[1]"));
        }
    }
    return make_dag(std::move(names), edges);
}

Json params_to_json(const SemParams& params, const DagSpec& dag) {
    Json coef = Json::object();
    Json intercepts = Json::object();
    Json variances = Json::object();
    for (std::size_t k = 0; k < dag.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        for (int j : dag.parents[k]) {
            coef[dag.names[static_cast<std::size_t>(j)] + "->" + dag.names[k]] = params.coefficients(kk, j);
        }
        intercepts[dag.names[k]] = params.intercepts(kk);
        variances[dag.names[k]] = params.variances(kk);
    }
    return {{"coefficients", coef}, {"intercepts", intercepts}, {"variances", variances}};
}

SemParams params_from_json(const Json& j, const DagSpec& dag) {
    reject_unknown_keys(j, {"coefficients", "intercepts", "variances"}, "params");
    SemParams out = make_params(dag);
    if (j.contains("coefficients")) {
        const Json& c = j.at("coefficients");
        if (!c.is_object()) throw ConfigError("params.coefficients: expected an object");
        for (const auto& [key, value] : c.items()) {
            const std::string path = "params.coefficients." + key;
            const auto arrow = key.find("->");
            if (arrow == std::string::npos) throw ConfigError(path + ": key must look like parent->child");
            const int parent = dag.index_of(key.substr(0, arrow));
            const int child = dag.index_of(key.substr(arrow + 2));
            const auto& pa = dag.parents[static_cast<std::size_t>(child)];
            if (std::find(pa.begin(), pa.end(), parent) == pa.end()) {
                throw ConfigError(path + ": not an edge of the DAG");
            }
            out.coefficients(child, parent) = json_number(value, path);
        }
    }
    for (const char* field : {"intercepts", "variances"}) {
        if (!j.contains(field)) continue;
        const Json& m = j.at(field);
        const std::string base = std::string("params.") + field;
        if (!m.is_object()) throw ConfigError(base + ": expected an object");
        Vector& target = std::string(field) == "intercepts" ? out.intercepts : out.variances;
        for (const auto& [key, value] : m.items()) {
            target(dag.index_of(key)) = json_number(value, base + "." + key);
        }
    }
    check_params(out, dag);
    return out;
}

Json scenario_to_json(const ShiftScenario& scenario) {
    Json shifts = Json::array();
    for (const auto& shift : scenario.shifts) {
        if (const auto* cov = std::get_if<CovariateShift>(&shift)) {
            shifts.push_back(
                {{"kind", "covariate_shift"}, {"node", cov->node}, {"mean", cov->mean}, {"variance", cov->variance}});
        } else {
            const auto& mech = std::get<MechanismShift>(shift);
            shifts.push_back({{"kind", "mechanism_shift"},
                              {"node", mech.node},
                              {"coefficients", mech.coefficients},
                              {"intercept", mech.intercept},
                              {"variance", mech.variance}});
        }
    }
    return {{"shifts", shifts}};
}

ShiftScenario scenario_from_json(const Json& j, const std::string& path) {
    reject_unknown_keys(j, {"shifts"}, path);
    const Json& list = require(j, "shifts", path);
    if (!list.is_array()) throw ConfigError(path + ".shifts: expected an array");
    ShiftScenario out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = path + ".shifts[" + std::to_string(i) + "]";
        const Json& s = list[i];
        const std::string kind = json_string(require(s, "kind", p), p + ".kind");
        if (kind == "covariate_shift") {
            reject_unknown_keys(s, {"kind", "node", "mean", "variance"}, p);
            CovariateShift cov;
            cov.node = json_string(require(s, "node", p), p + ".node");
            cov.mean = json_number(require(s, "mean", p), p + ".mean");
            cov.variance = json_number(require(s, "variance", p), p + ".variance");
            out.shifts.emplace_back(cov);
        } else if (kind == "mechanism_shift") {
            reject_unknown_keys(s, {"kind", "node", "coefficients", "intercept", "variance"}, p);
            MechanismShift mech;
            mech.node = json_string(require(s, "node", p), p + ".node");
            if (s.contains("coefficients")) {
                const Json& c = s.at("coefficients");
                if (!c.is_object()) throw ConfigError(p + ".coefficients: expected an object");
                for (const auto& [name, value] : c.items()) {
                    mech.coefficients[name] = json_number(value, p + ".coefficients." + name);
                }
            }
            mech.intercept = json_number(require(s, "intercept", p), p + ".intercept");
            mech.variance = json_number(require(s, "variance", p), p + ".variance");
            out.shifts.emplace_back(mech);
        } else {
            throw ConfigError(p + ".kind: expected covariate_shift or mechanism_shift");
        }
    }
    return out;
}

Json em_config_to_json(const EmConfig& c) {
    return {{"m_step", c.m_step_mode == MStepMode::Exact ? "exact" : "gradient"},
            {"step_rule", c.step_rule == StepRule::Fixed ? "fixed" : "safe"},
            {"fixed_step", c.fixed_step},
            {"update_variance", c.update_variance},
            {"variance_min", c.variance_min},
            {"variance_max", c.variance_max},
            {"tol_b", c.tol_b},
            {"tol_sigma", c.tol_sigma},
            {"max_iterations", c.max_iterations},
            {"refit_roots", c.refit_roots},
            {"include_intercept", c.include_intercept},
            {"allow_parentless_target", c.allow_parentless_target},
            {"exact_refit_every", c.exact_refit_every},
            {"condition_cap", c.condition_cap}};
}

EmConfig em_config_from_json(const Json& j, const std::string& path) {
    reject_unknown_keys(j,
                        {"m_step", "step_rule", "fixed_step", "update_variance", "variance_min", "variance_max",
                         "tol_b", "tol_sigma", "max_iterations", "refit_roots", "include_intercept",
                         "allow_parentless_target", "exact_refit_every", "condition_cap"},
                        path);
    EmConfig c;
    auto field = [&](const char* key) { return path + "." + key; };
    if (j.contains("m_step")) {
        const std::string v = json_string(j.at("m_step"), field("m_step"));
        if (v == "exact") c.m_step_mode = MStepMode::Exact;
        else if (v == "gradient") c.m_step_mode = MStepMode::Gradient;
        else throw ConfigError(field("m_step") + ": expected gradient or exact");
    }
    if (j.contains("step_rule")) {
        const std::string v = json_string(j.at("step_rule"), field("step_rule"));
        if (v == "fixed") c.step_rule = StepRule::Fixed;
        else if (v == "safe") c.step_rule = StepRule::SafeDefault;
        else throw ConfigError(field("step_rule") + ": expected safe or fixed");
    }
    if (j.contains("fixed_step")) c.fixed_step = json_number(j.at("fixed_step"), field("fixed_step"));
    if (j.contains("update_variance")) c.update_variance = json_bool(j.at("update_variance"), field("update_variance"));
    if (j.contains("variance_min")) c.variance_min = json_number(j.at("variance_min"), field("variance_min"));
    if (j.contains("variance_max")) c.variance_max = json_number(j.at("variance_max"), field("variance_max"));
    if (j.contains("tol_b")) c.tol_b = json_number(j.at("tol_b"), field("tol_b"));
    if (j.contains("tol_sigma")) c.tol_sigma = json_number(j.at("tol_sigma"), field("tol_sigma"));
    if (j.contains("max_iterations")) {
        c.max_iterations = static_cast<int>(json_integer(j.at("max_iterations"), field("max_iterations")));
    }
    if (j.contains("refit_roots")) {
        const Json& r = j.at("refit_roots");
        if (!r.is_array()) throw ConfigError(field("refit_roots") + ": expected an array of node names");
        for (std::size_t i = 0; i < r.size(); ++i) {
            c.refit_roots.push_back(json_string(r[i], field("refit_roots") + "[" + std::to_string(i) + "]"));
        }
    }
    if (j.contains("include_intercept")) {
        c.include_intercept = json_bool(j.at("include_intercept"), field("include_intercept"));
    }
    if (j.contains("allow_parentless_target")) {
        c.allow_parentless_target = json_bool(j.at("allow_parentless_target"), field("allow_parentless_target"));
    }
    if (j.contains("exact_refit_every")) {
        c.exact_refit_every = static_cast<int>(json_integer(j.at("exact_refit_every"), field("exact_refit_every")));
    }
    if (j.contains("condition_cap")) c.condition_cap = json_number(j.at("condition_cap"), field("condition_cap"));
    try {
        c.validate();
    } catch (const ConfigError& e) {
        // validate() reports "em.<field>"; rebase onto the caller's path.
        std::string msg = e.what();
        if (msg.rfind("em.", 0) == 0) msg = path + msg.substr(2);
        throw ConfigError(msg);
    }
    return c;
}

int CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(std::string_view text, const std::string& source) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const auto line = trim(text.substr(start, end - start));
        if (!line.empty()) lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) {
        throw DataError(source + ": empty file");
    }
    CsvTable table;
    std::set<std::string> seen;
    for (auto cell : split_line(lines.front())) {
        std::string name(unquote(cell));
        if (name.empty()) throw DataError(source + ": row 1: empty column name");
        if (!seen.insert(name).second) throw DataError(source + ": row 1: duplicate column '" + name + "'");
        table.header.push_back(std::move(name));
    }
    const auto cols = static_cast<Eigen::Index>(table.header.size());
    table.values.resize(static_cast<Eigen::Index>(lines.size() - 1), cols);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_line(lines[r]);
        if (static_cast<Eigen::Index>(cells.size()) != cols) {
            throw DataError(source + ": row " + std::to_string(r + 1) + ": found " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(cols));
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto cell = cells[static_cast<std::size_t>(c)];
            double value = std::numeric_limits<double>::quiet_NaN();
            if (!cell.empty() && cell != "NA" && cell != "nan" && cell != "NaN") {
                const char* first = cell.data();
                const char* last = cell.data() + cell.size();
                if (*first == '+') ++first;
                const auto [ptr, ec] = std::from_chars(first, last, value);
                if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
                    throw DataError(source + ": row " + std::to_string(r + 1) + ", column '" +
                                    table.header[static_cast<std::size_t>(c)] + "': non-numeric cell '" +
                                    std::string(cell) + "'");
                }
            }
            table.values(static_cast<Eigen::Index>(r - 1), c) = value;
        }
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), path.string());
}

std::string format_double(double value) {
    if (std::isnan(value)) return "";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
    if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
        throw DataError("CSV header and matrix width differ");
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
        out << (c ? "," : "") << header[c];
    }
    out << '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            out << (c ? "," : "") << format_double(values(r, c));
        }
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& values) {
    std::ostringstream buffer;
    write_csv(buffer, header, values);
    write_text_file(path, buffer.str());
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
}

}  // namespace dagem

#pragma once

// File formats: adjacency lists/matrices, the dataset CSV, scenario files,
// fit results (JSON metadata plus CSV tables) and report tables.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stconfound/diagnostics.hpp"
#include "stconfound/error.hpp"
#include "stconfound/model.hpp"
#include "stconfound/pql.hpp"
#include "stconfound/simulate.hpp"
#include "stconfound/version.hpp"

namespace stconfound {

using nlohmann::json;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out.precision(17);
    return out;
}

inline double parse_number(const std::string& tok, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError(where + ": '" + tok + "' is not a number");
    }
}

inline long long parse_integer(const std::string& tok, const std::string& where) {
    const double v = parse_number(tok, where);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ValidationError(where + ": '" + tok + "' is not an integer");
    return static_cast<long long>(v);
}

/// Non-empty lines not starting with '#', paired with their 1-based line number.
inline std::vector<std::pair<int, std::string>> content_lines(std::istream& in) {
    std::vector<std::pair<int, std::string>> out;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        out.emplace_back(no, t);
    }
    return out;
}

inline std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- adjacency

/// "i j" per line, 1-based; both orientations of an edge may appear.
inline SpatialGraph load_adjacency_edges(const std::filesystem::path& path, int n_areas = 0) {
    auto in = detail::open_in(path);
    std::set<std::pair<int, int>> seen;
    int max_id = 0;
    for (const auto& [no, line] : detail::content_lines(in)) {
        auto tok = detail::tokens(line);
        if (tok.size() != 2) throw IoError(path.string() + ":" + std::to_string(no) + ": expected two area indices");
        const std::string where = path.string() + ":" + std::to_string(no);
        const auto a = detail::parse_integer(tok[0], where), b = detail::parse_integer(tok[1], where);
        if (a < 1 || b < 1) throw ValidationError(where + ": area indices are 1-based");
        if (a == b) throw ValidationError(where + ": self-loop on area " + std::to_string(a));
        max_id = std::max<int>(max_id, static_cast<int>(std::max(a, b)));
        seen.insert({static_cast<int>(std::min(a, b)) - 1, static_cast<int>(std::max(a, b)) - 1});
    }
    if (n_areas == 0) n_areas = max_id;
    if (max_id > n_areas)
        throw ValidationError(path.string() + ": area index " + std::to_string(max_id) + " exceeds " + std::to_string(n_areas) + " areas");
    return SpatialGraph::from_edges(n_areas, {seen.begin(), seen.end()});
}

/// Whitespace-separated symmetric 0/1 matrix, one row per line.
inline SpatialGraph load_adjacency_matrix(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    const auto lines = detail::content_lines(in);
    const auto n = static_cast<Eigen::Index>(lines.size());
    MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [no, line] = lines[i];
        const auto tok = detail::tokens(line);
        const std::string where = path.string() + ":" + std::to_string(no);
        if (static_cast<Eigen::Index>(tok.size()) != n)
            throw IoError(where + ": expected " + std::to_string(n) + " entries, found " + std::to_string(tok.size()));
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = detail::parse_number(tok[j], where);
    }
    return SpatialGraph::from_adjacency_matrix(a);
}

/// Matrix form when every row is 0/1 with as many entries as rows, edge list otherwise.
inline SpatialGraph load_adjacency(const std::filesystem::path& path, int n_areas = 0) {
    auto in = detail::open_in(path);
    const auto lines = detail::content_lines(in);
    bool matrix = lines.size() > 2;
    for (const auto& [no, line] : lines) {
        const auto tok = detail::tokens(line);
        if (tok.size() != lines.size()) {
            matrix = false;
            break;
        }
        for (const auto& t : tok)
            if (t != "0" && t != "1") matrix = false;
    }
    return matrix ? load_adjacency_matrix(path) : load_adjacency_edges(path, n_areas);
}

// ------------------------------------------------------------------ dataset

struct LoadedDataset {
    Dataset data;
    std::vector<long long> period_labels;  ///< time value of each period
};

/// Header: area,time,observed,expected[,population],x1..xp. The expected
/// column may be omitted when population is present (internal
/// standardisation). Area ids run 1..S and time values are consecutive integers
/// (1..T or calendar years); rows may come in any order.
inline LoadedDataset load_dataset_labeled(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError(path.string() + ": empty file");
    const auto header = detail::split(header_line, ',');
    std::map<std::string, std::size_t> col;
    for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
    for (const char* req : {"area", "time", "observed"})
        if (!col.count(req)) throw ValidationError(path.string() + ": missing required column '" + req + "'");
    const bool has_expected = col.count("expected"), has_population = col.count("population");
    if (!has_expected && !has_population)
        throw ValidationError(path.string() + ": needs an 'expected' or 'population' column");
    std::vector<std::size_t> cov_cols;
    std::vector<std::string> cov_names;
    for (std::size_t k = 0; k < header.size(); ++k) {
        const auto& h = header[k];
        if (h == "area" || h == "time" || h == "observed" || h == "expected" || h == "population") continue;
        cov_cols.push_back(k);
        cov_names.push_back(h);
    }

    struct Row {
        long long area, time;
        double observed, expected, population;
        std::vector<double> x;
    };
    std::vector<Row> rows;
    std::string line;
    int no = 1;
    while (std::getline(in, line)) {
        ++no;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split(line, ',');
        const std::string where = path.string() + ":" + std::to_string(no);
        if (f.size() != header.size())
            throw IoError(where + ": expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        Row r;
        r.area = detail::parse_integer(f[col["area"]], where);
        r.time = detail::parse_integer(f[col["time"]], where);
        r.observed = detail::parse_number(f[col["observed"]], where);
        if (r.observed < 0.0 || r.observed != std::floor(r.observed))
            throw ValidationError(where + ": observed count '" + f[col["observed"]] + "' is not a nonnegative integer");
        r.expected = has_expected ? detail::parse_number(f[col["expected"]], where) : 0.0;
        r.population = has_population ? detail::parse_number(f[col["population"]], where) : 0.0;
        for (auto c : cov_cols) r.x.push_back(detail::parse_number(f[c], where));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ValidationError(path.string() + ": no data rows");

    std::set<long long> area_ids, times;
    for (const auto& r : rows) {
        area_ids.insert(r.area);
        times.insert(r.time);
    }
    if (*area_ids.begin() < 1) throw ValidationError(path.string() + ": area ids are 1-based");
    const int s = static_cast<int>(*area_ids.rbegin());
    const int t = static_cast<int>(*times.rbegin() - *times.begin() + 1);
    std::vector<long long> tlabels;
    for (long long v = *times.begin(); v <= *times.rbegin(); ++v) tlabels.push_back(v);
    std::map<long long, int> tindex;
    for (int k = 0; k < t; ++k) tindex[tlabels[k]] = k;

    const Eigen::Index n = static_cast<Eigen::Index>(s) * t;
    std::vector<int> filled(n, 0);
    VectorXd obs(n), expct(n), pop(n);
    MatrixXd x(n, static_cast<Eigen::Index>(cov_cols.size()));
    for (const auto& r : rows) {
        const auto i = Dataset::index(static_cast<int>(r.area - 1), tindex[r.time], s);
        if (filled[i]++)
            throw ValidationError(path.string() + ": duplicate row for area " + std::to_string(r.area) + ", time " +
                                  std::to_string(r.time));
        obs(i) = r.observed;
        expct(i) = r.expected;
        pop(i) = r.population;
        for (std::size_t j = 0; j < r.x.size(); ++j) x(i, static_cast<Eigen::Index>(j)) = r.x[j];
    }
    std::vector<std::string> gaps;
    for (int per = 0; per < t; ++per)
        for (int a = 0; a < s; ++a)
            if (!filled[Dataset::index(a, per, s)])
                gaps.push_back("(" + std::to_string(a + 1) + "," + std::to_string(tlabels[per]) + ")");
    if (!gaps.empty()) {
        std::string msg = path.string() + ": incomplete area x time grid, " + std::to_string(gaps.size()) + " missing cell(s):";
        for (std::size_t k = 0; k < std::min<std::size_t>(gaps.size(), 20); ++k) msg += " " + gaps[k];
        if (gaps.size() > 20) msg += " ...";
        throw ValidationError(msg);
    }
    if (!has_expected) expct = expected_counts(obs, pop);
    LoadedDataset out;
    out.data = make_dataset(s, t, obs, expct, x, cov_names);
    out.period_labels = tlabels;
    return out;
}

inline Dataset load_dataset(const std::filesystem::path& path) { return load_dataset_labeled(path).data; }

/// Writes the dataset CSV with the stored (standardised) covariates.
inline void write_dataset(const Dataset& d, const std::filesystem::path& path,
                          const std::vector<long long>& period_labels = {}) {
    auto out = detail::open_out(path);
    out << "area,time,observed,expected";
    for (const auto& n : d.covariate_names) out << ',' << n;
    out << '\n';
    for (int per = 0; per < d.periods; ++per)
        for (int a = 0; a < d.areas; ++a) {
            const auto i = Dataset::index(a, per, d.areas);
            out << a + 1 << ',' << (period_labels.empty() ? per + 1 : period_labels[per]) << ',' << d.observed(i) << ','
                << d.expected(i);
            for (Eigen::Index j = 0; j < d.n_covariates(); ++j) out << ',' << d.covariates(i, j);
            out << '\n';
        }
    if (!out) throw IoError("failed writing " + path.string());
}

// ----------------------------------------------------------------- scenario

/// key = value lines; '#' starts a comment. Lists are comma-separated.
/// Keys: grid (RxC), adjacency (path), periods, intercept, beta, rho,
/// sigma2_spatial, sigma2_temporal, sigma2_interaction, baseline_expected, seed.
inline Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir = {}) {
    Scenario sc;
    bool rho_set = false;
    std::string line;
    int no = 0;
    auto vec = [](const std::string& v, const std::string& where) {
        const auto parts = detail::split(v, ',');
        VectorXd out(static_cast<Eigen::Index>(parts.size()));
        for (std::size_t k = 0; k < parts.size(); ++k) out(static_cast<Eigen::Index>(k)) = detail::parse_number(parts[k], where);
        return out;
    };
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        const auto t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty()) continue;
        const std::string where = "scenario line " + std::to_string(no);
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
        const auto key = detail::trim(t.substr(0, eq));
        const auto val = detail::trim(t.substr(eq + 1));
        if (key == "grid") {
            const auto x = val.find_first_of("xX");
            if (x == std::string::npos) throw ValidationError(where + ": grid must look like 5x4");
            sc.grid_rows = static_cast<int>(detail::parse_integer(detail::trim(val.substr(0, x)), where));
            sc.grid_cols = static_cast<int>(detail::parse_integer(detail::trim(val.substr(x + 1)), where));
        } else if (key == "adjacency") {
            const std::filesystem::path p = std::filesystem::path(val).is_absolute() ? std::filesystem::path(val) : base_dir / val;
            sc.graph = load_adjacency(p);
        } else if (key == "periods" || key == "T") {
            sc.periods = static_cast<int>(detail::parse_integer(val, where));
        } else if (key == "intercept") {
            sc.intercept = detail::parse_number(val, where);
        } else if (key == "beta") {
            sc.beta_true = vec(val, where);
        } else if (key == "rho") {
            sc.confounding_rho = vec(val, where);
            rho_set = true;
        } else if (key == "sigma2_spatial") {
            sc.sigma2_spatial = detail::parse_number(val, where);
        } else if (key == "sigma2_temporal") {
            sc.sigma2_temporal = detail::parse_number(val, where);
        } else if (key == "sigma2_interaction") {
            sc.sigma2_interaction = detail::parse_number(val, where);
        } else if (key == "baseline_expected") {
            sc.baseline_expected = detail::parse_number(val, where);
        } else if (key == "seed") {
            sc.seed = static_cast<std::uint64_t>(detail::parse_integer(val, where));
        } else {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
    if (!rho_set) sc.confounding_rho = VectorXd::Zero(sc.beta_true.size());
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    return parse_scenario(in, path.parent_path());
}

inline json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Non-finite doubles are written as null; read them back as NaN.
inline double number_from_json(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = number_from_json(j[static_cast<std::size_t>(i)]);
    return v;
}

inline json to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(VectorXd(m.row(i).transpose())));
    return rows;
}

inline MatrixXd matrix_from_json(const json& j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    const auto c = n ? static_cast<Eigen::Index>(j[0].size()) : 0;
    MatrixXd m(n, c);
    for (Eigen::Index i = 0; i < n; ++i) m.row(i) = vector_from_json(j[static_cast<std::size_t>(i)]).transpose();
    return m;
}

inline json truth_to_json(const TruthRecord& t) {
    return {{"generator", t.generator},
            {"seed", t.seed},
            {"replicate", t.replicate},
            {"intercept", t.intercept},
            {"beta", to_json(t.beta)},
            {"spatial", to_json(t.spatial)},
            {"temporal", to_json(t.temporal)},
            {"interaction", to_json(t.interaction)},
            {"linear_predictor", to_json(t.linear_predictor)},
            {"mean", to_json(t.mean)},
            {"eigenvector", to_json(t.eigenvector)}};
}

inline void write_json(const json& j, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline json read_json(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw IoError(path.string() + ": " + ex.what());
    }
}

// --------------------------------------------------------------------- fits

constexpr double wald_z = 1.959964;

inline std::vector<std::string> coefficient_names(const std::vector<std::string>& covariate_names) {
    std::vector<std::string> out{"intercept"};
    out.insert(out.end(), covariate_names.begin(), covariate_names.end());
    return out;
}

inline json fit_to_json(const FitResult& f, const Dataset& d) {
    json j;
    j["software"] = {{"name", software_name}, {"version", software_version}};
    j["variant"] = to_string(f.variant);
    const auto names = coefficient_names(d.covariate_names);
    const VectorXd se = f.beta_se();
    json coefs = json::array();
    for (Eigen::Index k = 0; k < f.beta.size(); ++k)
        coefs.push_back({{"term", k < static_cast<Eigen::Index>(names.size()) ? names[k] : "b" + std::to_string(k)},
                         {"estimate", f.beta(k)},
                         {"se", se(k)},
                         {"q0.025", f.beta(k) - wald_z * se(k)},
                         {"q0.975", f.beta(k) + wald_z * se(k)}});
    j["coefficients"] = coefs;
    j["beta"] = to_json(f.beta);
    j["beta_cov"] = to_json(f.beta_cov);
    json vc = json::object();
    for (const auto& [k, v] : f.variance_components.sigma2) {
        const auto se_it = f.variance_components.standard_errors.find(k);
        const auto b_it = f.variance_components.at_boundary.find(k);
        vc[k] = {{"sigma2", v},
                 {"se", se_it == f.variance_components.standard_errors.end() ? 0.0 : se_it->second},
                 {"at_boundary", b_it != f.variance_components.at_boundary.end() && b_it->second}};
    }
    j["variance_components"] = vc;
    j["convergence"] = {{"converged", f.converged},
                        {"iterations", f.iterations},
                        {"trace", f.convergence_trace},
                        {"wall_time_seconds", f.wall_time_seconds}};
    j["deviance"] = f.deviance;
    j["effective_df"] = f.effective_df;
    j["aic"] = f.aic;
    j["standardization"] = {{"covariates", d.covariate_names},
                            {"mean", to_json(d.standardization.mean)},
                            {"scale", to_json(d.standardization.scale)},
                            {"convention", d.standardization.convention}};
    j["dimensions"] = {{"areas", d.areas}, {"periods", d.periods}};
    j["expected"] = to_json(f.expected);
    j["fitted_mu"] = to_json(f.fitted_mu);
    j["linear_predictor"] = to_json(f.linear_predictor);
    j["working_weights"] = to_json(f.working_weights);
    auto vmap = [](const std::map<std::string, VectorXd>& m) {
        json o = json::object();
        for (const auto& [k, v] : m) o[k] = to_json(v);
        return o;
    };
    j["random_effects"] = vmap(f.random_effects);
    j["block_coefficients"] = vmap(f.block_coefficients);
    j["contributions"] = vmap(f.contributions);
    return j;
}

inline FitResult fit_from_json(const json& j) {
    try {
        FitResult f;
        f.variant = parse_variant(j.at("variant").get<std::string>());
        f.beta = vector_from_json(j.at("beta"));
        f.beta_cov = matrix_from_json(j.at("beta_cov"));
        for (const auto& [k, v] : j.at("variance_components").items()) {
            f.variance_components.sigma2[k] = number_from_json(v.at("sigma2"));
            f.variance_components.standard_errors[k] = number_from_json(v.at("se"));
            f.variance_components.at_boundary[k] = v.at("at_boundary").get<bool>();
        }
        const auto& c = j.at("convergence");
        f.converged = c.at("converged").get<bool>();
        f.iterations = c.at("iterations").get<int>();
        const VectorXd trace = vector_from_json(c.at("trace"));
        f.convergence_trace.assign(trace.data(), trace.data() + trace.size());
        f.wall_time_seconds = number_from_json(c.at("wall_time_seconds"));
        f.deviance = number_from_json(j.at("deviance"));
        f.effective_df = number_from_json(j.at("effective_df"));
        f.aic = number_from_json(j.at("aic"));
        f.expected = vector_from_json(j.at("expected"));
        f.fitted_mu = vector_from_json(j.at("fitted_mu"));
        f.linear_predictor = vector_from_json(j.at("linear_predictor"));
        f.working_weights = vector_from_json(j.at("working_weights"));
        for (const auto& [k, v] : j.at("random_effects").items()) f.random_effects[k] = vector_from_json(v);
        for (const auto& [k, v] : j.at("block_coefficients").items()) f.block_coefficients[k] = vector_from_json(v);
        for (const auto& [k, v] : j.at("contributions").items()) f.contributions[k] = vector_from_json(v);
        return f;
    } catch (const json::exception& ex) {
        throw IoError(std::string("malformed fit file: ") + ex.what());
    }
}

inline FitResult load_fit(const std::filesystem::path& path) { return fit_from_json(read_json(path)); }

inline void write_coefficients_csv(const FitResult& f, const Dataset& d, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    const auto names = coefficient_names(d.covariate_names);
    const VectorXd se = f.beta_se();
    out << "term,Estimate,SE,q0.025,q0.975\n";
    for (Eigen::Index k = 0; k < f.beta.size(); ++k)
        out << names[k] << ',' << f.beta(k) << ',' << se(k) << ',' << f.beta(k) - wald_z * se(k) << ','
            << f.beta(k) + wald_z * se(k) << '\n';
}

inline void write_random_effects_csv(const FitResult& f, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "block,index,value\n";
    for (const auto& [k, v] : f.random_effects)
        for (Eigen::Index i = 0; i < v.size(); ++i) out << k << ',' << i + 1 << ',' << v(i) << '\n';
}

/// One row per cell: fitted mean, relative risk and the multiplicative patterns.
inline void write_risks_csv(const FitResult& f, const DesignBundle& b, const Dataset& d, const std::filesystem::path& path,
                            const std::vector<long long>& period_labels = {}) {
    const auto p = decompose_patterns(f, b);
    auto out = detail::open_out(path);
    out << "area,time,observed,expected,fitted,risk,spatial_pattern,temporal_pattern,interaction_pattern\n";
    auto cell = [](const VectorXd& v, Eigen::Index i) { return v.size() ? v(i) : 1.0; };
    for (int per = 0; per < d.periods; ++per)
        for (int a = 0; a < d.areas; ++a) {
            const auto i = Dataset::index(a, per, d.areas);
            out << a + 1 << ',' << (period_labels.empty() ? per + 1 : period_labels[per]) << ',' << d.observed(i) << ','
                << d.expected(i) << ',' << f.fitted_mu(i) << ',' << p.risks(i) << ',' << cell(p.spatial, i) << ','
                << cell(p.temporal, i) << ',' << cell(p.interaction, i) << '\n';
        }
}

/// Writes <dir>/<stem>.json plus coefficient, random-effect and risk CSVs.
inline void serialize_fit(const FitResult& f, const DesignBundle& b, const Dataset& d, const std::filesystem::path& dir,
                          const std::string& stem, const std::vector<long long>& period_labels = {}) {
    write_json(fit_to_json(f, d), dir / (stem + ".json"));
    write_coefficients_csv(f, d, dir / (stem + "_coefficients.csv"));
    write_random_effects_csv(f, dir / (stem + "_random_effects.csv"));
    write_risks_csv(f, b, d, dir / (stem + "_risks.csv"), period_labels);
}

// ------------------------------------------------------------------ reports

inline void write_comparison_csv(const ModelComparison& c, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "model,deviance,effective_df,aic,wall_time_seconds\n";
    for (const auto& r : c.rows)
        out << r.label << ',' << r.deviance << ',' << r.effective_df << ',' << r.aic << ',' << r.wall_time_seconds << '\n';
}

inline void write_correlations_csv(const CorrelationDiagnostic& c, const std::filesystem::path& path,
                                   const std::vector<long long>& period_labels = {}) {
    auto out = detail::open_out(path);
    out << "covariate,dimension,slice,correlation\n";
    auto val = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("NA"); };
    for (std::size_t j = 0; j < c.covariate_names.size(); ++j) {
        for (std::size_t k = 0; k < c.spatial[j].size(); ++k)
            out << c.covariate_names[j] << ",spatial," << (period_labels.empty() ? static_cast<long long>(k + 1) : period_labels[k])
                << ',' << val(c.spatial[j][k]) << '\n';
        for (std::size_t k = 0; k < c.temporal[j].size(); ++k)
            out << c.covariate_names[j] << ",temporal," << k + 1 << ',' << val(c.temporal[j][k]) << '\n';
    }
}

inline void write_study_csv(const StudyResult& s, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "model,coefficient,truth,mean_estimate,empirical_sd,mean_se,coverage,used,failed\n";
    for (const auto& r : s.table)
        out << r.model << ',' << r.coefficient << ',' << r.truth << ',' << r.mean_estimate << ',' << r.empirical_sd << ','
            << r.mean_se << ',' << r.coverage << ',' << r.used << ',' << r.failed << '\n';
}

}  // namespace stconfound

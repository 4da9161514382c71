// Command-line front end: fit, simulate, diagnose, compare.
//
// Exit codes: 0 success, 2 invalid input, 3 convergence/numerical failure,
// 4 file I/O failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stconfound.hpp"

namespace sc = stconfound;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, validation = 2, convergence = 3, io = 4 };

struct CommonArgs {
    std::string data;
    std::string adjacency;
    std::vector<std::string> models;
    std::string restrict_blocks;
    double tol = 1e-5;
    int max_iter = 100;
    std::string warm_start;
    std::string out = ".";
};

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& r : raw)
        for (auto& p : sc::detail::split(r, ','))
            if (!p.empty()) out.push_back(p);
    return out;
}

std::vector<sc::ModelSpec> parse_models(const CommonArgs& a) {
    std::vector<sc::ModelSpec> specs;
    for (const auto& m : split_list(a.models)) {
        sc::ModelSpec s;
        s.variant = sc::parse_variant(m);
        if (!a.restrict_blocks.empty()) {
            s.restrict_blocks.clear();
            for (const auto& b : sc::detail::split(a.restrict_blocks, ',')) s.restrict_blocks.insert(sc::parse_block(b));
        }
        s.validate();
        specs.push_back(s);
    }
    if (specs.empty()) throw sc::ValidationError("no model given (--model st1|st2|st3|st4)");
    return specs;
}

struct Inputs {
    sc::LoadedDataset loaded;
    sc::ModelStructures structures;
};

Inputs load_inputs(const CommonArgs& a) {
    if (a.data.empty()) throw sc::ValidationError("--data is required");
    if (a.adjacency.empty()) throw sc::ValidationError("--adjacency is required");
    Inputs in;
    in.loaded = sc::load_dataset_labeled(a.data);
    const auto graph = sc::load_adjacency(a.adjacency, in.loaded.data.areas);
    if (graph.n_areas != in.loaded.data.areas)
        throw sc::ValidationError("adjacency has " + std::to_string(graph.n_areas) + " areas but the data has " +
                                  std::to_string(in.loaded.data.areas));
    in.structures = sc::ModelStructures::build(graph, in.loaded.data.periods);
    return in;
}

sc::WorkflowOptions workflow_options(const CommonArgs& a) {
    sc::WorkflowOptions w;
    w.fit.tol = a.tol;
    w.fit.max_outer = a.max_iter;
    return w;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool with_model) {
    cmd->add_option("--data", a.data, "dataset CSV (area,time,observed,expected[,population],x1..xp)");
    cmd->add_option("--adjacency", a.adjacency, "adjacency file: 'i j' pairs (1-based) or a 0/1 matrix");
    if (with_model) {
        cmd->add_option("--model", a.models, "variant(s): st1, st2, st3, st4 (comma-separated or repeated)");
        cmd->add_option("--restrict", a.restrict_blocks, "ST3 blocks to restrict: spatial,temporal,interaction");
        cmd->add_option("--tol", a.tol, "relative convergence tolerance")->check(CLI::PositiveNumber);
        cmd->add_option("--max-iter", a.max_iter, "maximum outer iterations")->check(CLI::PositiveNumber);
        cmd->add_option("--warm-start", a.warm_start, "fit JSON whose variance components start the iteration");
    }
    cmd->add_option("--out", a.out, "output directory");
}

int report(const std::vector<sc::VariantFit>& fits) {
    int code = Exit::ok;
    for (const auto& f : fits) {
        std::cout << sc::to_string(f.spec.variant) << ": deviance " << f.fit.deviance << ", df " << f.fit.effective_df
                  << ", AIC " << f.fit.aic << (f.fit.converged ? "" : " (not converged)") << '\n';
        if (!f.fit.converged) code = Exit::convergence;
    }
    if (code != Exit::ok) std::cerr << "error: at least one fit did not converge; results were written with converged=false\n";
    return code;
}

int run_fit(const CommonArgs& a) {
    const auto in = load_inputs(a);
    auto specs = parse_models(a);
    if (specs.size() != 1) throw sc::ValidationError("fit takes exactly one --model; use compare for several");
    auto wo = workflow_options(a);
    std::optional<sc::FitResult> prev;
    if (!a.warm_start.empty()) {
        prev = sc::load_fit(a.warm_start);
        if ((specs[0].variant == sc::Variant::ST3 || specs[0].variant == sc::Variant::ST4) && prev->variant == sc::Variant::ST2) {
            if (prev->fitted_mu.size() != in.loaded.data.size())
                throw sc::ValidationError("warm-start fit does not match the dataset size");
            wo.user_weights = prev->fitted_mu;
        }
        wo.warm_start = false;
    }
    std::vector<sc::VariantFit> fits;
    if (prev) {
        const auto& d = in.loaded.data;
        auto bundle = sc::build_design(specs[0], d, in.structures, wo.user_weights);
        auto opts = wo.fit;
        opts.warm_start = sc::warm_start_from(*prev, bundle);
        sc::VariantFit vf{specs[0], std::move(bundle), {}};
        vf.fit = sc::fit(vf.bundle, d, opts);
        fits.push_back(std::move(vf));
    } else {
        fits = sc::fit_variants(in.loaded.data, in.structures, specs, wo);
    }
    const auto& f = fits[0];
    sc::serialize_fit(f.fit, f.bundle, in.loaded.data, a.out, sc::to_string(f.spec.variant), in.loaded.period_labels);
    return report(fits);
}

int run_compare(const CommonArgs& a) {
    const auto in = load_inputs(a);
    const auto specs = parse_models(a);
    const auto fits = sc::fit_variants(in.loaded.data, in.structures, specs, workflow_options(a));
    sc::ModelComparison cmp;
    const auto labels = sc::model_labels(specs);
    nlohmann::json meta;
    meta["software"] = {{"name", sc::software_name}, {"version", sc::software_version}};
    for (std::size_t k = 0; k < fits.size(); ++k) {
        cmp.add(labels[k], fits[k].fit);
        sc::serialize_fit(fits[k].fit, fits[k].bundle, in.loaded.data, a.out, labels[k], in.loaded.period_labels);
        meta["models"].push_back({{"model", labels[k]},
                                  {"deviance", fits[k].fit.deviance},
                                  {"effective_df", fits[k].fit.effective_df},
                                  {"aic", fits[k].fit.aic},
                                  {"converged", fits[k].fit.converged},
                                  {"wall_time_seconds", fits[k].fit.wall_time_seconds}});
    }
    sc::write_comparison_csv(cmp, fs::path(a.out) / "comparison.csv");
    sc::write_json(meta, fs::path(a.out) / "comparison.json");
    return report(fits);
}

int run_diagnose(const CommonArgs& a) {
    const auto in = load_inputs(a);
    const auto diag = sc::confounding_correlations(in.loaded.data, in.structures.spatial, in.structures.temporal);
    sc::write_correlations_csv(diag, fs::path(a.out) / "correlations.csv", in.loaded.period_labels);
    nlohmann::json meta;
    meta["software"] = {{"name", sc::software_name}, {"version", sc::software_version}};
    meta["areas"] = in.loaded.data.areas;
    meta["periods"] = in.loaded.data.periods;
    for (std::size_t j = 0; j < diag.covariate_names.size(); ++j) {
        double max_abs = 0.0;
        for (const auto& v : diag.spatial[j])
            if (v) max_abs = std::max(max_abs, std::abs(*v));
        meta["max_abs_spatial_correlation"][diag.covariate_names[j]] = max_abs;
    }
    sc::write_json(meta, fs::path(a.out) / "diagnostics.json");
    std::cout << "wrote " << (fs::path(a.out) / "correlations.csv").string() << '\n';
    return Exit::ok;
}

struct SimArgs {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    int replicates = 0;
    std::vector<std::string> models;
    std::string out = ".";
};

int run_simulate(const SimArgs& s) {
    sc::Scenario scen = s.scenario.empty() ? sc::Scenario{} : sc::load_scenario(s.scenario);
    if (s.seed) scen.seed = *s.seed;
    scen.validate();
    const fs::path out(s.out);
    if (s.replicates > 0) {
        CommonArgs ca;
        ca.models = s.models.empty() ? std::vector<std::string>{"st1,st2,st3,st4"} : s.models;
        const auto res = sc::replicate_study(scen, s.replicates, parse_models(ca));
        sc::write_study_csv(res, out / "study.csv");
        nlohmann::json meta;
        meta["software"] = {{"name", sc::software_name}, {"version", sc::software_version}};
        meta["generator"] = sc::Philox4x32::name;
        meta["seed"] = scen.seed;
        meta["replicates"] = s.replicates;
        for (std::size_t m = 0; m < res.models.size(); ++m) {
            std::vector<double> dev;
            std::vector<bool> okv;
            for (const auto& row : res.replicates) {
                dev.push_back(row[m].deviance);
                okv.push_back(row[m].ok);
            }
            meta["deviance"][res.models[m]] = dev;
            meta["converged"][res.models[m]] = okv;
        }
        sc::write_json(meta, out / "study.json");
        for (const auto& r : res.table)
            std::cout << r.model << ' ' << r.coefficient << ": mean " << r.mean_estimate << " (truth " << r.truth
                      << "), coverage " << r.coverage << ", used " << r.used << ", failed " << r.failed << '\n';
        return Exit::ok;
    }
    const auto gen = sc::generate(scen);
    sc::write_dataset(gen.data, out / "dataset.csv");
    sc::write_json(sc::truth_to_json(gen.truth), out / "truth.json");
    auto adj = sc::detail::open_out(out / "adjacency.txt");
    adj << "# " << scen.areas() << " areas\n";
    for (auto [i, j] : scen.spatial_graph().edges) adj << i + 1 << ' ' << j + 1 << '\n';
    std::cout << "wrote " << (out / "dataset.csv").string() << '\n';
    return Exit::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal disease mapping with confounding adjustments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(sc::software_version));

    CommonArgs fit_args, cmp_args, diag_args;
    auto* fit_cmd = app.add_subcommand("fit", "fit one model variant");
    add_common(fit_cmd, fit_args, true);
    auto* cmp_cmd = app.add_subcommand("compare", "fit several variants (ST1 -> ST2 -> ST3/ST4) and compare");
    add_common(cmp_cmd, cmp_args, true);
    auto* diag_cmd = app.add_subcommand("diagnose", "covariate / eigenvector correlation diagnostics");
    add_common(diag_cmd, diag_args, false);

    SimArgs sim;
    std::uint64_t seed = 0;
    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset or run a replicate study");
    sim_cmd->add_option("--scenario", sim.scenario, "scenario file (key = value)");
    auto* seed_opt = sim_cmd->add_option("--seed", seed, "random seed");
    sim_cmd->add_option("--replicates", sim.replicates, "run a replicate study with this many replicates");
    sim_cmd->add_option("--model", sim.models, "variants for the replicate study");
    sim_cmd->add_option("--out", sim.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? Exit::ok : Exit::validation;
    }
    if (*seed_opt) sim.seed = seed;

    try {
        if (*fit_cmd) return run_fit(fit_args);
        if (*cmp_cmd) return run_compare(cmp_args);
        if (*diag_cmd) return run_diagnose(diag_args);
        return run_simulate(sim);
    } catch (const sc::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::validation;
    } catch (const sc::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::convergence;
    } catch (const sc::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::io;
    }
}

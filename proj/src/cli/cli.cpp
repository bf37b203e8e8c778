#include "scala/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "scala/cli/manifest.hpp"
#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"
#include "scala/harness/experiment.hpp"
#include "scala/model/checkpoint.hpp"

namespace scala::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ConfigFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string manifest;
};

void add_config_flags(CLI::App* app, ConfigFlags& f, bool with_manifest) {
    app->add_option("--config", f.config, "JSON config file");
    app->add_option("--set", f.sets, "Override as dotted.key=value (repeatable)");
    app->add_option("--out", f.out, "Output directory");
    app->add_option("--seed", f.seed, "Experiment seed");
    if (with_manifest)
        app->add_option("--manifest", f.manifest, "Re-run the config recorded in a manifest");
}

json resolve_json(const ConfigFlags& f) {
    json j;
    if (!f.manifest.empty()) {
        j = harness::default_config_json();
        harness::merge_config(j, read_manifest(f.manifest).at("config"));
        for (const std::string& s : f.sets)
            harness::apply_override(j, s);
    } else {
        j = harness::load_config_json(f.config.empty() ? std::nullopt : std::optional<fs::path>(f.config), f.sets);
    }
    if (f.seed)
        j["seed"] = *f.seed;
    if (!f.out.empty())
        j["output"]["dir"] = f.out;
    return j;
}

harness::ExperimentConfig resolve(const ConfigFlags& f) {
    return harness::parse_config(resolve_json(f));
}

void log_line(std::ostream& err, const std::string& msg) {
    err << "[scala-opt] " << msg << '\n';
}

harness::RunOptions progress(std::ostream& err) {
    harness::RunOptions o;
    o.observer = [&err](const harness::StepEvent& e) {
        if (e.record->test_acc)
            log_line(err, "epoch " + std::to_string(e.epoch) + " step " + std::to_string(e.step) + " test_acc " +
                              harness::format_double(*e.record->test_acc));
    };
    return o;
}

harness::RunResult train_into(const harness::ExperimentConfig& cfg, const std::string& verb, std::ostream& err) {
    if (cfg.output.dir.empty())
        throw ConfigError("output.dir", "set --out or output.dir");
    log_line(err, std::string("running mode ") + harness::to_string(cfg.mode) + " seed " + std::to_string(cfg.seed) +
                      " into " + cfg.output.dir);
    harness::RunResult r = harness::run_experiment(cfg, progress(err));
    write_manifest(cfg.output.dir, make_manifest(verb, harness::to_json(cfg), hash_artifacts(cfg.output.dir)));
    return r;
}

int cmd_train(const ConfigFlags& f, std::ostream& out, std::ostream& err) {
    const harness::ExperimentConfig cfg = resolve(f);
    const harness::RunResult r = train_into(cfg, "train", err);
    json result = {{"summary", harness::to_json(r.summary)},
                   {"out", cfg.output.dir},
                   {"manifest", (fs::path(cfg.output.dir) / "manifest.json").string()}};
    if (!f.manifest.empty()) {
        const json recorded = read_manifest(f.manifest).at("artifacts");
        const json now = read_manifest(fs::path(cfg.output.dir) / "manifest.json").at("artifacts");
        result["manifest_match"] = recorded == now;
    }
    out << result.dump(2) << '\n';
    if (r.summary.aborted) {
        log_line(err, "aborted at step " + std::to_string(r.summary.abort_step.value_or(0)) + ": " +
                          r.summary.abort_reason);
        return kExitNumerical;
    }
    return kExitOk;
}

struct ProbeFlags {
    std::string checkpoint;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> iters;
    std::optional<double> tol;
    std::optional<double> alpha;
};

model::Model probe_model(const harness::ExperimentConfig& cfg, const ProbeFlags& p) {
    if (p.checkpoint.empty())
        return harness::initial_model(cfg);
    model::Model m = model::load_checkpoint(p.checkpoint);
    if (!(m.arch() == harness::resolve_mode(cfg).architecture()))
        throw ConfigError("--checkpoint", "architecture does not match the config");
    return m;
}

model::Batch probe_batch(const harness::ExperimentConfig& cfg, std::size_t samples) {
    const harness::Dataset d = harness::synth_dataset(cfg.dataset, cfg.dataset_seed());
    return d.train.slice(0, std::min(samples, d.train.size));
}

int cmd_sharpness(const ConfigFlags& f, const ProbeFlags& p, std::ostream& out) {
    const harness::ExperimentConfig cfg = resolve(f);
    const model::Model m = probe_model(cfg, p);
    const model::Batch batch = probe_batch(cfg, p.samples.value_or(cfg.diagnostics.sharpness_samples));
    diag::SharpnessOptions o;
    o.max_iters = p.iters.value_or(cfg.diagnostics.sharpness_iters);
    o.tol = p.tol.value_or(cfg.diagnostics.sharpness_tol);
    o.seed = cfg.seed;
    const diag::SharpnessResult r = diag::sharpness(m, batch, o);
    out << json{{"eigenvalue", r.eigenvalue},
                {"top", r.top()},
                {"largest_algebraic", r.largest_algebraic ? json(*r.largest_algebraic) : json(nullptr)},
                {"negative", r.negative},
                {"converged", r.converged},
                {"iterations", r.iterations},
                {"restarts", r.restarts},
                {"samples", batch.size},
                {"rayleigh_trace", r.rayleigh_trace}}
                .dump(2)
        << '\n';
    return kExitOk;
}

int cmd_moreau(const ConfigFlags& f, const ProbeFlags& p, std::ostream& out) {
    const harness::ExperimentConfig cfg = resolve(f);
    const model::Model m = probe_model(cfg, p);
    const model::Batch batch = probe_batch(cfg, p.samples.value_or(cfg.diagnostics.moreau_samples));
    const ad::Objective obj = diag::task_objective(m, batch);
    const auto groups = diag::group_ranges(m);
    std::vector<double> alpha;
    const std::optional<double> fixed = p.alpha ? p.alpha : cfg.diagnostics.moreau_alpha;
    if (fixed) {
        alpha.assign(groups.size(), *fixed);
    } else {
        diag::AlphaProbeOptions po;
        po.seed = cfg.seed;
        alpha = diag::probe_alpha(obj, m.parameters(), groups, po);
    }
    diag::MoreauOptions mo;
    mo.max_iters = p.iters.value_or(cfg.diagnostics.moreau_iters);
    if (p.tol)
        mo.tol = *p.tol;
    const diag::MoreauProbeResult r = diag::moreau_grad(obj, m.parameters(), groups, alpha, mo);
    std::vector<std::string> names;
    for (const model::ParamGroup& g : m.groups())
        names.push_back(g.name);
    out << json{{"squared_norm", r.squared_norm},
                {"residual", r.residual},
                {"envelope", r.envelope},
                {"iterations", r.iterations},
                {"converged", r.converged},
                {"groups", names},
                {"alpha", alpha},
                {"samples", batch.size}}
                .dump(2)
        << '\n';
    return kExitOk;
}

double number(const json& j, const char* key, double fallback) {
    if (!j.contains(key))
        return fallback;
    if (!j.at(key).is_number())
        throw ConfigError(std::string("theory.") + key, "must be a number");
    return j.at(key).get<double>();
}

std::vector<double> numbers(const json& j, const char* key) {
    std::vector<double> v;
    if (!j.contains(key))
        return v;
    if (!j.at(key).is_array())
        throw ConfigError(std::string("theory.") + key, "must be an array of numbers");
    for (const json& x : j.at(key)) {
        if (!x.is_number())
            throw ConfigError(std::string("theory.") + key, "must be an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

diag::TheoryConstants read_constants(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("--constants", "cannot open " + path);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ConfigError("--constants", path + " is not a JSON object");
    static const std::vector<std::string> known = {"alpha", "D",     "G", "Z",       "sigma",
                                                   "eps-inner", "C", "S", "clip-lo", "clip-hi"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError("theory." + k, "unknown constant");
    diag::TheoryConstants c;
    c.alpha = numbers(j, "alpha");
    c.sigma = numbers(j, "sigma");
    c.D = number(j, "D", c.D);
    c.G = number(j, "G", c.G);
    c.Z = number(j, "Z", c.Z);
    c.eps_inner = number(j, "eps-inner", c.eps_inner);
    c.C = number(j, "C", c.C);
    c.S = number(j, "S", c.S);
    c.clip_lo = number(j, "clip-lo", c.clip_lo);
    c.clip_hi = number(j, "clip-hi", c.clip_hi);
    c.validate();
    return c;
}

int cmd_plan(const std::string& constants, std::size_t steps, std::ostream& out) {
    if (steps < 1)
        throw ConfigError("--steps", "must be at least 1");
    const diag::TheoryConstants c = read_constants(constants);
    const diag::RatePlan p = diag::rate_calculator(c, steps);
    out << json{{"T", steps},
                {"eta", p.eta},
                {"batch_size", p.batch_size},
                {"bound", p.bound},
                {"inner_iters", p.inner_iters ? json(*p.inner_iters) : json(p.inner_iters_note)},
                {"kappa", c.kappa()},
                {"alpha_inf", c.alpha_inf()}}
                .dump(2)
        << '\n';
    return kExitOk;
}

struct TableRow {
    std::string name;
    std::string mode;
    std::optional<harness::RunSummary> summary;
    std::string failure;
};

std::string cell(const std::optional<double>& v) {
    return v ? harness::format_double(*v) : std::string();
}

std::string render_table(const std::vector<TableRow>& rows) {
    std::ostringstream os;
    os << "name,mode,status,final_test_acc,best_test_acc,final_sharpness,forward_passes,backward_passes,"
          "steps_completed\n";
    for (const TableRow& r : rows) {
        os << r.name << ',' << r.mode << ',';
        if (!r.summary) {
            os << "failed: " << r.failure << ",,,,,,\n";
            continue;
        }
        const harness::RunSummary& s = *r.summary;
        os << (s.aborted ? "aborted" : "ok") << ',' << cell(s.final_test_acc) << ',' << cell(s.best_test_acc) << ','
           << cell(s.final_sharpness) << ',' << s.forward_passes << ',' << s.backward_passes << ','
           << s.steps_completed << '\n';
    }
    return os.str();
}

TableRow run_row(const std::string& name, const harness::ExperimentConfig& cfg, const std::string& verb,
                 std::ostream& err) {
    TableRow row{name, harness::to_string(cfg.mode), std::nullopt, {}};
    try {
        row.summary = train_into(cfg, verb, err).summary;
    } catch (const NumericalError& e) {
        row.failure = e.what();
    }
    return row;
}

int finish_table(const std::vector<TableRow>& rows, const fs::path& dir, const std::string& file, std::ostream& out) {
    const std::string table = render_table(rows);
    std::ofstream(dir / file) << table;
    out << table;
    for (const TableRow& r : rows)
        if (!r.summary || r.summary->aborted)
            return kExitNumerical;
    return kExitOk;
}

int cmd_ablate(const ConfigFlags& f, const std::vector<std::string>& modes, std::ostream& out, std::ostream& err) {
    const harness::ExperimentConfig base = resolve(f);
    if (base.output.dir.empty())
        throw ConfigError("output.dir", "set --out or output.dir");
    std::vector<harness::Mode> run_modes{harness::Mode::Scala};
    for (const std::string& m : modes) {
        harness::Mode mode;
        try {
            mode = harness::parse_mode(m.rfind("ablation-", 0) == 0 ? m : "ablation-" + m);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("--modes", e.what());
        }
        if (std::find(run_modes.begin(), run_modes.end(), mode) == run_modes.end())
            run_modes.push_back(mode);
    }
    std::vector<TableRow> rows;
    for (harness::Mode mode : run_modes) {
        harness::ExperimentConfig cfg = base;
        cfg.mode = mode;
        cfg.output.dir = (fs::path(base.output.dir) / harness::to_string(mode)).string();
        rows.push_back(run_row(harness::to_string(mode), cfg, "ablate", err));
    }
    return finish_table(rows, base.output.dir, "ablation.csv", out);
}

int cmd_compare(const std::vector<std::string>& configs, const ConfigFlags& f, std::ostream& out,
                std::ostream& err) {
    if (configs.size() < 2)
        throw ConfigError("configs", "compare needs at least two config files");
    if (f.out.empty())
        throw ConfigError("--out", "compare needs an output directory");
    std::vector<TableRow> rows;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        ConfigFlags each = f;
        each.config = configs[i];
        const std::string name = std::to_string(i) + "-" + fs::path(configs[i]).stem().string();
        each.out = (fs::path(f.out) / name).string();
        rows.push_back(run_row(name, resolve(each), "compare", err));
    }
    return finish_table(rows, f.out, "comparison.csv", out);
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Large-batch training with lightweight adversarial noise"};
    app.name("scala-opt");
    app.require_subcommand(1);

    ConfigFlags flags;
    ProbeFlags probe;
    std::string constants;
    std::size_t steps = 0;
    std::vector<std::string> modes{"no-delay", "adam", "no-pga", "gaussian-noise", "gt-label"};
    std::vector<std::string> configs;

    CLI::App* train = app.add_subcommand("train", "Run one experiment");
    add_config_flags(train, flags, true);

    CLI::App* sharp = app.add_subcommand("sharpness", "Top Hessian eigenvalue of a model on training data");
    add_config_flags(sharp, flags, false);
    sharp->add_option("--checkpoint", probe.checkpoint, "Model checkpoint; the initial model when omitted");
    sharp->add_option("--samples", probe.samples, "Training rows in the probe batch");
    sharp->add_option("--iters", probe.iters, "Power iterations");
    sharp->add_option("--tol", probe.tol, "Convergence tolerance");

    CLI::App* moreau = app.add_subcommand("moreau", "Moreau-envelope gradient of the task loss");
    add_config_flags(moreau, flags, false);
    moreau->add_option("--checkpoint", probe.checkpoint, "Model checkpoint; the initial model when omitted");
    moreau->add_option("--samples", probe.samples, "Training rows in the probe batch");
    moreau->add_option("--iters", probe.iters, "Inner iterations");
    moreau->add_option("--tol", probe.tol, "Inner residual tolerance");
    moreau->add_option("--alpha", probe.alpha, "Smoothness for every group; probed when omitted");

    CLI::App* plan = app.add_subcommand("plan", "Step size, batch size and bound for a step budget");
    plan->add_option("--constants", constants, "JSON file of theory constants")->required();
    plan->add_option("--steps", steps, "Total outer steps T")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "Run scala and its ablations");
    add_config_flags(ablate, flags, false);
    ablate->add_option("--modes", modes, "Ablations to run next to scala");

    CLI::App* compare = app.add_subcommand("compare", "Run several configs and tabulate their summaries");
    add_config_flags(compare, flags, false);
    compare->add_option("configs", configs, "Config files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitConfig;
    }

    try {
        if (*train)
            return cmd_train(flags, out, err);
        if (*sharp)
            return cmd_sharpness(flags, probe, out);
        if (*moreau)
            return cmd_moreau(flags, probe, out);
        if (*plan)
            return cmd_plan(constants, steps, out);
        if (*ablate)
            return cmd_ablate(flags, modes, out, err);
        if (*compare)
            return cmd_compare(configs, flags, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace scala::cli

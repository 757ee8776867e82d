#include "cdra/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cdra/audit.hpp"
#include "cdra/gcm.hpp"
#include "cdra/rendermap.hpp"
#include "cdra/serialize.hpp"
#include "cdra/table.hpp"

namespace cdra::cli {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kModelStream = 1ULL << 32;
constexpr std::string_view kToolVersion = "0.1.0";

struct Options {
    std::string config;
    std::string data;
    std::string dag;
    std::string out;
    std::string truth;
    std::string report_a;
    std::string report_b;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string estimator = "stratified";
    std::size_t bootstrap = 0;
    double level = 0.95;
    double floor = kDefaultCoverageFloor;
    std::vector<std::size_t> errors{1, 2, 4};
    std::vector<std::string> modes{"remove", "add"};
    std::size_t repeats = 5;
    std::size_t gcms = 0;
    std::size_t nodes = 5;
    double p_edge = 0.5;
    std::string factor;
    int from = 0;
    int to = 1;
    bool allow_partial = false;
    std::size_t workers = 1;
};

struct Manifest {
    std::string command;
    std::string config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not an unsigned integer: " + std::string(text));
    return v;
}

std::uint64_t resolve_seed(const CLI::App& sub, const Options& opt) {
    if (sub.count("--seed") > 0) return opt.seed;
    if (const char* env = std::getenv("CDRA_SEED"); env && *env) return parse_u64(env, "CDRA_SEED");
    return 0;
}

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

void write_manifest(const Manifest& m, const std::string& out, double seconds) {
    Json j;
    j["command"] = m.command;
    j["config"] = m.config.empty() ? Json(nullptr) : Json(m.config);
    j["config_hash"] = m.config.empty() ? Json(nullptr) : Json(fnv1a_hex(read_text_file(m.config)));
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["tool_version"] = std::string(kToolVersion);
    j["wall_time_seconds"] = seconds;
    write_text_file(manifest_path(out), dump_canonical(j));
}

Json with_manifest_ref(Json doc, const std::string& out) {
    doc["manifest"] = fs::path(manifest_path(out)).filename().string();
    return doc;
}

Gcm load_gcm(const std::string& path) { return gcm_from_json(read_json_file(path)); }

Gcm random_model(std::uint64_t seed, std::size_t index, std::size_t nodes, double p_edge) {
    Rng rng(derive_seed(seed, kModelStream + index));
    const CausalDag dag = random_dag(nodes, p_edge, rng);
    return random_gcm(dag, SeverityDomain{}, rng);
}

std::vector<PerturbMode> parse_modes(const std::vector<std::string>& names) {
    std::vector<PerturbMode> out;
    for (const auto& m : names) {
        if (m == "add") {
            out.push_back(PerturbMode::Add);
        } else if (m == "remove") {
            out.push_back(PerturbMode::Remove);
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown perturbation mode '" + m + "'");
        }
    }
    return out;
}

// Models named by --config, or --gcms random ones. Returns (model, seed) pairs.
std::vector<std::pair<Gcm, std::uint64_t>> models_for(const CLI::App& sub, const Options& opt,
                                                      std::uint64_t seed, Manifest& manifest) {
    std::vector<std::pair<Gcm, std::uint64_t>> out;
    if (!opt.config.empty()) {
        if (opt.gcms > 0) throw Error(ErrorCode::InvalidArgument, "--config and --gcms are exclusive");
        manifest.config = opt.config;
        manifest.inputs.push_back(opt.config);
        out.emplace_back(load_gcm(opt.config), seed);
        return out;
    }
    if (opt.gcms == 0) throw Error(ErrorCode::InvalidArgument, sub.get_name() + " needs --config or --gcms");
    if (opt.nodes == 0) throw Error(ErrorCode::InvalidArgument, "--nodes must be at least 1");
    for (std::size_t g = 0; g < opt.gcms; ++g)
        out.emplace_back(random_model(seed, g, opt.nodes, opt.p_edge), derive_seed(seed, g));
    return out;
}

AuditConfig base_config(const Options& opt, std::uint64_t seed) {
    AuditConfig cfg;
    cfg.estimator = parse_estimator(opt.estimator);
    cfg.bootstrap = opt.bootstrap;
    cfg.bootstrap_level = opt.level;
    cfg.coverage_floor = opt.floor;
    cfg.seed = seed;
    cfg.workers = std::max<std::size_t>(opt.workers, 1);
    cfg.default_pair = {opt.from, opt.to};
    return cfg;
}

// Run-settings file for `audit`; flags given on the command line win.
void apply_run_settings(const Json& doc, const CLI::App& sub, AuditConfig& cfg) {
    if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "/: run settings must be an object");
    auto given = [&](const char* flag) { return sub.count(flag) > 0; };
    try {
        if (doc.contains("estimator") && !given("--estimator"))
            cfg.estimator = parse_estimator(doc["estimator"].get<std::string>());
        if (doc.contains("bootstrap") && !given("--bootstrap")) cfg.bootstrap = doc["bootstrap"].get<std::size_t>();
        if (doc.contains("level") && !given("--level")) cfg.bootstrap_level = doc["level"].get<double>();
        if (doc.contains("coverage_floor") && !given("--floor")) cfg.coverage_floor = doc["coverage_floor"].get<double>();
        if (doc.contains("seed") && !given("--seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("forest")) {
            const Json& f = doc["forest"];
            if (f.contains("trees")) cfg.forest.trees = f["trees"].get<std::size_t>();
            if (f.contains("max_depth")) cfg.forest.max_depth = f["max_depth"].get<std::size_t>();
            if (f.contains("subsample")) cfg.forest.subsample = f["subsample"].get<double>();
            if (f.contains("min_leaf")) cfg.forest.min_leaf = f["min_leaf"].get<std::size_t>();
        }
        if (doc.contains("treatments")) {
            for (const auto& [name, pairs] : doc["treatments"].items()) {
                std::vector<TreatmentPair> list;
                for (const auto& p : pairs) list.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
                cfg.treatments[name] = std::move(list);
            }
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("run settings: ") + e.what());
    }
}

void print_rejections(const IngestResult& r, std::ostream& err) {
    if (r.rejected > 0)
        err << "warning: " << r.rejected << " row(s) rejected (level outside the declared domain)\n";
}

int cmd_validate(const Options& opt, std::ostream& out) {
    const Json doc = read_json_file(opt.config);
    if (doc.is_object() && doc.contains("cpds")) {
        const Gcm gcm = gcm_from_json(doc);
        out << "OK: model with " << gcm.factors().size() << " factors, " << gcm.dag().edge_count()
            << " edges, sink " << gcm.metric_name() << "\n";
    } else if (doc.is_object() && doc.contains("nodes")) {
        const CausalDag dag = dag_from_json(doc);
        domains_from_json(doc, dag);
        out << "OK: graph with " << dag.size() << " nodes, " << dag.edge_count() << " edges\n";
    } else if (doc.is_object() && doc.contains("factors")) {
        Rng rng(0);
        const RenderGraph g = render_graph_from_json(doc, rng);
        out << "OK: render graph with " << g.size() << " factors, " << g.edges().size() << " edges\n";
    } else {
        throw Error(ErrorCode::InvalidArgument, "/: not a model, graph or render config");
    }
    return kOk;
}

int cmd_sample(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    m.config = opt.config;
    m.inputs = {opt.config};
    m.outputs = {opt.out};
    const Gcm gcm = load_gcm(opt.config);
    Rng rng(m.seed);
    const ObservationTable table = sample_observational(gcm, opt.n, rng, std::max<std::size_t>(opt.workers, 1));
    write_csv(table, fs::path(opt.out));
    out << "wrote " << table.rows() << " rows to " << opt.out << "\n";
    return kOk;
}

int cmd_audit(const CLI::App& sub, const Options& opt, std::ostream& out, std::ostream& err,
              Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    m.inputs = {opt.data, opt.dag};
    const Json dag_doc = read_json_file(opt.dag);
    CausalDag dag;
    std::map<FactorId, SeverityDomain> domains;
    if (dag_doc.is_object() && dag_doc.contains("cpds")) {
        const Gcm gcm = gcm_from_json(dag_doc);
        dag = gcm.dag();
        domains = gcm.domain_map();
    } else {
        dag = with_metric_sink(dag_from_json(dag_doc), "M");
        domains = domains_from_json(dag_doc, dag);
    }

    IngestSchema schema;
    schema.factors = dag.factor_names();
    for (const auto& f : schema.factors) schema.domains.push_back(domains.at(f));
    schema.metric = *dag.sink_name();
    const IngestResult ingested = ingest_metrics(fs::path(opt.data), schema);
    print_rejections(ingested, err);

    AuditConfig cfg = base_config(opt, m.seed);
    cfg.assumed_dag = dag;
    if (!opt.config.empty()) {
        m.config = opt.config;
        m.inputs.push_back(opt.config);
        apply_run_settings(read_json_file(opt.config), sub, cfg);
        m.seed = cfg.seed;
    }
    AuditReport report = run_audit(ingested.table, cfg);
    if (!opt.truth.empty()) {
        m.inputs.push_back(opt.truth);
        attach_ground_truth(report, load_gcm(opt.truth), cfg);
    }

    out << render_audit_table(report);
    if (!opt.out.empty()) {
        m.outputs.push_back(opt.out);
        write_text_file(opt.out, dump_canonical(with_manifest_ref(to_json(report), opt.out)));
    }
    if (report.has_failures() && !opt.allow_partial) {
        err << "error: insufficient support for at least one factor (use --allow-partial to accept)\n";
        return kSupport;
    }
    return kOk;
}

int cmd_truth(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    m.config = opt.config;
    m.inputs = {opt.config};
    const Gcm gcm = load_gcm(opt.config);
    std::vector<FactorId> factors = gcm.factor_names();
    if (!opt.factor.empty()) factors = {opt.factor};

    Json list = Json::array();
    for (std::size_t k = 0; k < factors.size(); ++k) {
        TruthOptions t;
        t.seed = derive_seed(m.seed, k);
        t.workers = std::max<std::size_t>(opt.workers, 1);
        const GroundTruth g = ground_truth_ace(gcm, factors[k], opt.from, opt.to, t);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", g.value);
        out << factors[k] << " " << opt.from << "->" << opt.to << ": " << buf;
        if (!g.exact) {
            std::snprintf(buf, sizeof buf, "%.4f", g.std_error);
            out << " (Monte Carlo, se " << buf << ")";
        }
        out << "\n";
        list.push_back({{"factor", factors[k]},
                        {"from", opt.from},
                        {"to", opt.to},
                        {"value", g.value},
                        {"std_error", g.std_error},
                        {"exact", g.exact}});
    }
    if (!opt.out.empty()) {
        m.outputs.push_back(opt.out);
        write_text_file(opt.out, dump_canonical(with_manifest_ref(Json{{"truth", list}}, opt.out)));
    }
    return kOk;
}

int cmd_simulate(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    const auto models = models_for(sub, opt, m.seed, m);
    Json reports = Json::array();
    double sum = 0.0;
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t g = 0; g < models.size(); ++g) {
        AuditConfig cfg = base_config(opt, models[g].second);
        const AuditReport report = run_simulated_audit(models[g].first, opt.n, cfg);
        if (models.size() > 1) out << "model " << g << "\n";
        out << render_audit_table(report) << "\n";
        for (const auto& f : report.factors)
            for (const auto& r : f.results)
                if (r.delta) {
                    sum += *r.delta;
                    worst = std::max(worst, *r.delta);
                    ++count;
                }
        reports.push_back({{"model", to_json(models[g].first)}, {"report", to_json(report)}});
    }
    Json doc;
    doc["models"] = reports;
    doc["mean_delta"] = count ? Json(sum / static_cast<double>(count)) : Json(nullptr);
    doc["max_delta"] = count ? Json(worst) : Json(nullptr);
    if (count)
        out << "overall: " << count << " estimates, mean delta ACE " << format_percent(sum / static_cast<double>(count))
            << "%, max " << format_percent(worst) << "%\n";
    if (!opt.out.empty()) {
        m.outputs.push_back(opt.out);
        write_text_file(opt.out, dump_canonical(with_manifest_ref(doc, opt.out)));
    }
    return kOk;
}

int cmd_misspec(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    const auto models = models_for(sub, opt, m.seed, m);
    const auto modes = parse_modes(opt.modes);
    std::vector<MisspecReport> reports;
    Json list = Json::array();
    for (const auto& [gcm, seed] : models) {
        AuditConfig cfg = base_config(opt, seed);
        reports.push_back(run_misspec_sweep(gcm, opt.n, opt.errors, modes, opt.repeats, cfg));
        list.push_back({{"model", to_json(gcm)}, {"sweep", to_json(reports.back())}});
    }
    const auto summary = summarize_misspec(reports);
    out << "residual delta ACE vs. correctly specified graph\n" << render_misspec_table(summary);
    if (!opt.out.empty()) {
        Json doc;
        doc["models"] = list;
        doc["summary"] = to_json(std::span<const MisspecSummary>(summary));
        m.outputs.push_back(opt.out);
        write_text_file(opt.out, dump_canonical(with_manifest_ref(doc, opt.out)));
    }
    return kOk;
}

int cmd_renderplan(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    Rng weight_rng(derive_seed(m.seed, kModelStream));
    std::optional<RenderGraph> graph;
    if (opt.config.empty()) {
        graph = default_render_graph();
    } else {
        m.config = opt.config;
        m.inputs.push_back(opt.config);
        graph = render_graph_from_json(read_json_file(opt.config), weight_rng);
    }
    const RenderPlan plan = emit_plan(*graph, opt.n, m.seed, std::max<std::size_t>(opt.workers, 1));
    if (opt.out.empty()) {
        write_plan_jsonl(plan, out);
    } else {
        std::ostringstream ss;
        write_plan_jsonl(plan, ss);
        write_text_file(opt.out, ss.str());
        m.outputs.push_back(opt.out);
        out << "wrote " << plan.records.size() << " plan records to " << opt.out << "\n";
    }
    return kOk;
}

int cmd_generate(const CLI::App& sub, const Options& opt, std::ostream& out, Manifest& m) {
    m.seed = resolve_seed(sub, opt);
    if (opt.nodes == 0) throw Error(ErrorCode::InvalidArgument, "--nodes must be at least 1");
    const Gcm gcm = random_model(m.seed, 0, opt.nodes, opt.p_edge);
    const std::string text = dump_canonical(to_json(gcm));
    if (opt.out.empty()) {
        out << text;
    } else {
        write_text_file(opt.out, text);
        m.outputs.push_back(opt.out);
        out << "wrote model with " << gcm.factors().size() << " factors to " << opt.out << "\n";
    }
    return kOk;
}

// An audit report, or simulate output holding exactly one model.
AuditReport load_report(const std::string& path) {
    const Json doc = read_json_file(path);
    if (!doc.is_object() || !doc.contains("models")) return report_from_json(doc);
    const Json& models = doc.at("models");
    if (!models.is_array() || models.size() != 1 || !models[0].contains("report"))
        throw Error(ErrorCode::SchemaMismatch, path + ": expected a report for exactly one model");
    return report_from_json(models[0].at("report"));
}

int cmd_compare(const Options& opt, std::ostream& out, Manifest& m) {
    m.inputs = {opt.report_a, opt.report_b};
    const AuditReport a = load_report(opt.report_a);
    const AuditReport b = load_report(opt.report_b);
    const auto rows = compare_reports(a, b);
    out << render_comparison_table(rows);
    if (!opt.out.empty()) {
        m.outputs.push_back(opt.out);
        Json doc{{"comparison", to_json(std::span<const FactorComparison>(rows))}};
        write_text_file(opt.out, dump_canonical(with_manifest_ref(doc, opt.out)));
    }
    return kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError: return kParse;
        case ErrorCode::IoError: return kIo;
        case ErrorCode::InsufficientSupport: return kSupport;
        default: return kSemantic;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options opt;
    CLI::App app{"Causal robustness audits over imaging factors", "cdra"};
    app.require_subcommand(1);

    auto add_seed = [&](CLI::App* s) { s->add_option("--seed", opt.seed, "Seed (falls back to CDRA_SEED, then 0)"); };
    auto add_out = [&](CLI::App* s, bool required) {
        auto* o = s->add_option("--out", opt.out, "Output path");
        if (required) o->required();
    };
    auto add_workers = [&](CLI::App* s) {
        s->add_option("--workers", opt.workers, "Worker threads; results do not depend on it")
            ->check(CLI::PositiveNumber);
    };
    auto add_estimation = [&](CLI::App* s) {
        s->add_option("--estimator", opt.estimator, "stratified or forest")
            ->check(CLI::IsMember({"stratified", "forest"}));
        s->add_option("--bootstrap", opt.bootstrap, "Bootstrap replicates (0 disables; at least 50 otherwise)");
        s->add_option("--level", opt.level, "Bootstrap interval level");
        s->add_option("--floor", opt.floor, "Minimum stratum coverage");
        s->add_option("--from", opt.from, "Treatment baseline level");
        s->add_option("--to", opt.to, "Treatment target level");
    };
    auto add_models = [&](CLI::App* s) {
        s->add_option("--config", opt.config, "Model JSON");
        s->add_option("--gcms", opt.gcms, "Number of random models instead of --config");
        s->add_option("--nodes", opt.nodes, "Factors per random model");
        s->add_option("--p", opt.p_edge, "Edge probability for random models")->check(CLI::Range(0.0, 1.0));
        s->add_option("--n", opt.n, "Observational rows per model");
    };

    auto* validate = app.add_subcommand("validate", "Check a model, graph or render config");
    validate->add_option("--config", opt.config, "JSON file")->required();

    auto* sample = app.add_subcommand("sample", "Draw observational rows from a model");
    sample->add_option("--config", opt.config, "Model JSON")->required();
    sample->add_option("--n", opt.n, "Rows")->required();
    add_seed(sample);
    add_out(sample, true);
    add_workers(sample);

    auto* audit = app.add_subcommand("audit", "Estimate per-factor ACE from a metric table");
    audit->add_option("--data", opt.data, "Metric table CSV")->required();
    audit->add_option("--dag", opt.dag, "Assumed graph (graph or model JSON)")->required();
    audit->add_option("--config", opt.config, "Run settings JSON; flags override");
    audit->add_option("--truth", opt.truth, "Model JSON for ground-truth comparison");
    audit->add_flag("--allow-partial", opt.allow_partial, "Exit 0 even when a factor lacks support");
    add_estimation(audit);
    add_seed(audit);
    add_out(audit, false);
    add_workers(audit);

    auto* truth = app.add_subcommand("truth", "Interventional ground-truth ACE");
    truth->add_option("--config", opt.config, "Model JSON")->required();
    truth->add_option("--factor", opt.factor, "Single factor");
    truth->add_option("--from", opt.from, "Baseline level");
    truth->add_option("--to", opt.to, "Target level");
    add_seed(truth);
    add_out(truth, false);
    add_workers(truth);

    auto* simulate = app.add_subcommand("simulate", "Sample, audit and compare against ground truth");
    add_models(simulate);
    add_estimation(simulate);
    add_seed(simulate);
    add_out(simulate, false);
    add_workers(simulate);

    auto* misspec = app.add_subcommand("misspec", "Graph misspecification sweep");
    add_models(misspec);
    misspec->add_option("--errors", opt.errors, "Edge error counts, comma separated")->delimiter(',');
    misspec->add_option("--modes", opt.modes, "add and/or remove, comma separated")->delimiter(',');
    misspec->add_option("--repeats", opt.repeats, "Repeats per cell")->check(CLI::PositiveNumber);
    add_estimation(misspec);
    add_seed(misspec);
    add_out(misspec, false);
    add_workers(misspec);

    auto* renderplan = app.add_subcommand("renderplan", "Emit renderer settings from a render graph");
    renderplan->add_option("--config", opt.config, "Render config JSON (built-in defaults when absent)");
    renderplan->add_option("--n", opt.n, "Samples");
    add_seed(renderplan);
    add_out(renderplan, false);
    add_workers(renderplan);

    auto* generate = app.add_subcommand("generate", "Write a random model");
    generate->add_option("--nodes", opt.nodes, "Factors");
    generate->add_option("--p", opt.p_edge, "Edge probability")->check(CLI::Range(0.0, 1.0));
    add_seed(generate);
    add_out(generate, false);

    auto* compare = app.add_subcommand("compare", "Per-factor ACE differences between two reports");
    compare->add_option("--a", opt.report_a, "First report JSON")->required();
    compare->add_option("--b", opt.report_b, "Second report JSON")->required();
    add_out(compare, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kParse;
    }

    if ((simulate->parsed() || misspec->parsed()) && app.get_subcommands().front()->count("--n") == 0)
        opt.n = 50000;
    if (renderplan->parsed() && renderplan->count("--n") == 0) opt.n = 1000;

    const auto start = std::chrono::steady_clock::now();
    Manifest m;
    m.command = app.get_subcommands().front()->get_name();
    try {
        int code = kOk;
        if (validate->parsed()) return cmd_validate(opt, out);
        if (sample->parsed()) code = cmd_sample(*sample, opt, out, m);
        if (audit->parsed()) code = cmd_audit(*audit, opt, out, err, m);
        if (truth->parsed()) code = cmd_truth(*truth, opt, out, m);
        if (simulate->parsed()) code = cmd_simulate(*simulate, opt, out, m);
        if (misspec->parsed()) code = cmd_misspec(*misspec, opt, out, m);
        if (renderplan->parsed()) code = cmd_renderplan(*renderplan, opt, out, m);
        if (generate->parsed()) code = cmd_generate(*generate, opt, out, m);
        if (compare->parsed()) code = cmd_compare(opt, out, m);
        if (!opt.out.empty()) {
            const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
            write_manifest(m, opt.out, wall.count());
        }
        return code;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace cdra::cli

#include "cdra/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdra/error.hpp"

namespace cdra {

namespace {

// Decoding helpers; `path` is a JSON pointer to the value being read.
[[noreturn]] void fail(ErrorCode code, const std::string& path, const std::string& message) {
    throw Error(code, (path.empty() ? std::string("/") : path) + ": " + message);
}

std::string child_path(const std::string& path, const std::string& key) {
    std::string escaped;
    for (char c : key) {
        if (c == '~') {
            escaped += "~0";
        } else if (c == '/') {
            escaped += "~1";
        } else {
            escaped += c;
        }
    }
    return path + "/" + escaped;
}

std::string child_path(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

struct Reader {
    ErrorCode code;

    const Json& object(const Json& j, const std::string& path) const {
        if (!j.is_object()) fail(code, path, "expected an object");
        return j;
    }
    const Json& array(const Json& j, const std::string& path) const {
        if (!j.is_array()) fail(code, path, "expected an array");
        return j;
    }
    const Json& member(const Json& obj, const std::string& path, const std::string& key) const {
        object(obj, path);
        auto it = obj.find(key);
        if (it == obj.end()) fail(code, path, "missing field '" + key + "'");
        return *it;
    }
    const Json* optional(const Json& obj, const std::string& path, const std::string& key) const {
        object(obj, path);
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return nullptr;
        return &*it;
    }
    std::string string(const Json& j, const std::string& path) const {
        if (!j.is_string()) fail(code, path, "expected a string");
        return j.get<std::string>();
    }
    double number(const Json& j, const std::string& path) const {
        if (!j.is_number()) fail(code, path, "expected a number");
        return j.get<double>();
    }
    int integer(const Json& j, const std::string& path) const {
        if (!j.is_number_integer()) fail(code, path, "expected an integer");
        return j.get<int>();
    }
    std::uint64_t unsigned_integer(const Json& j, const std::string& path) const {
        if (!j.is_number_unsigned()) fail(code, path, "expected a non-negative integer");
        return j.get<std::uint64_t>();
    }
    bool boolean(const Json& j, const std::string& path) const {
        if (!j.is_boolean()) fail(code, path, "expected true or false");
        return j.get<bool>();
    }
};

Json edge_list(const std::vector<Edge>& edges) {
    Json out = Json::array();
    for (const auto& e : edges) out.push_back(Json::array({e.parent, e.child}));
    return out;
}

Json or_null(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// Flattens nested arrays indexed by parent levels into CPT rows, first parent
// most significant.
void flatten_cpd(const Reader& rd, const Json& j, const std::string& path, const std::vector<std::size_t>& radix,
                 std::size_t depth, std::vector<std::vector<double>>& rows) {
    rd.array(j, path);
    if (depth == radix.size()) {
        std::vector<double> row;
        for (std::size_t i = 0; i < j.size(); ++i) row.push_back(rd.number(j[i], child_path(path, i)));
        rows.push_back(std::move(row));
        return;
    }
    if (j.size() != radix[depth])
        fail(ErrorCode::InvalidGcm, path,
             "expected " + std::to_string(radix[depth]) + " entries, one per parent level");
    for (std::size_t i = 0; i < j.size(); ++i) flatten_cpd(rd, j[i], child_path(path, i), radix, depth + 1, rows);
}

Json nest_cpd(const std::vector<std::vector<double>>& rows, const std::vector<std::size_t>& radix,
              std::size_t depth, std::size_t& next) {
    if (depth == radix.size()) return Json(rows[next++]);
    Json out = Json::array();
    for (std::size_t i = 0; i < radix[depth]; ++i) out.push_back(nest_cpd(rows, radix, depth + 1, next));
    return out;
}

Json to_json(const FactorEstimate& fe) {
    Json j;
    j["from"] = fe.pair.from;
    j["to"] = fe.pair.to;
    j["estimate"] = fe.estimate ? to_json(*fe.estimate) : Json(nullptr);
    j["failure"] = fe.failure ? Json(*fe.failure) : Json(nullptr);
    j["coverage"] = fe.coverage;
    if (fe.truth) {
        j["truth"] = {{"value", fe.truth->value}, {"std_error", fe.truth->std_error}, {"exact", fe.truth->exact}};
    } else {
        j["truth"] = nullptr;
    }
    j["delta"] = or_null(fe.delta);
    return j;
}

}  // namespace

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        std::size_t line = 1;
        for (std::size_t i = 0; i < end; ++i)
            if (text[i] == '\n') ++line;
        std::string msg = e.what();
        if (auto pos = msg.find("] "); pos != std::string::npos) msg = msg.substr(pos + 2);
        throw ParseError(line, msg);
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    return ss.str();
}

Json read_json_file(const std::filesystem::path& path) { return parse_json(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

std::string dump_canonical(const Json& value) { return value.dump(2) + "\n"; }

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Json to_json(const CausalDag& dag) {
    Json j;
    j["nodes"] = dag.nodes();
    j["edges"] = edge_list(dag.edges());
    const auto sink = dag.sink_name();
    j["sink"] = sink ? Json(*sink) : Json(nullptr);
    return j;
}

CausalDag dag_from_json(const Json& doc) {
    const Reader rd{ErrorCode::InvalidArgument};
    DagDescription d;
    const Json& nodes = rd.array(rd.member(doc, "", "nodes"), "/nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) d.nodes.push_back(rd.string(nodes[i], child_path("/nodes", i)));
    const Json& edges = rd.array(rd.member(doc, "", "edges"), "/edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string p = child_path("/edges", i);
        const Json& e = rd.array(edges[i], p);
        if (e.size() != 2) fail(rd.code, p, "an edge is a [parent, child] pair");
        d.edges.push_back({rd.string(e[0], child_path(p, 0)), rd.string(e[1], child_path(p, 1))});
    }
    if (const Json* s = rd.optional(doc, "", "sink")) d.sink = rd.string(*s, "/sink");
    return CausalDag(d);
}

std::map<FactorId, SeverityDomain> domains_from_json(const Json& doc, const CausalDag& dag) {
    const Reader rd{ErrorCode::InvalidArgument};
    std::map<FactorId, SeverityDomain> out;
    const Json* domains = doc.is_object() ? rd.optional(doc, "", "domains") : nullptr;
    if (domains) rd.object(*domains, "/domains");
    for (const auto& f : dag.factor_names()) {
        if (domains && domains->contains(f)) {
            const std::string p = child_path("/domains", f);
            const Json& levels = rd.array((*domains)[f], p);
            std::vector<int> lv;
            for (std::size_t i = 0; i < levels.size(); ++i) lv.push_back(rd.integer(levels[i], child_path(p, i)));
            try {
                out.emplace(f, SeverityDomain(lv));
            } catch (const Error& e) {
                fail(e.code(), p, e.what());
            }
        } else {
            out.emplace(f, SeverityDomain{});
        }
    }
    if (domains)
        for (const auto& [name, _] : domains->items())
            if (!out.contains(name)) fail(rd.code, child_path("/domains", name), "not a factor of the graph");
    return out;
}

Json to_json(const Gcm& gcm) {
    Json j;
    j["dag"] = to_json(gcm.dag());
    Json domains = Json::object();
    for (const auto& [name, d] : gcm.domain_map()) domains[name] = d.levels();
    j["domains"] = domains;

    Json cpds = Json::object();
    for (const auto& c : gcm.cpds()) {
        std::vector<std::size_t> radix;
        for (const auto& p : c.parents) radix.push_back(gcm.domain(p).size());
        std::size_t next = 0;
        cpds[c.child] = nest_cpd(c.table, radix, 0, next);
    }
    j["cpds"] = cpds;

    const TaskResponse& r = gcm.response();
    Json resp;
    resp["kind"] = std::string(to_string(r.kind));
    resp["noise_sigma"] = r.noise_sigma;
    resp["base"] = r.base;
    Json retention = Json::object();
    for (const auto& [name, m] : r.retention) retention[name] = m;
    resp["retention"] = retention;
    Json inter = Json::array();
    for (const auto& ix : r.interactions)
        inter.push_back({{"a", ix.a}, {"b", ix.b}, {"level_a", ix.level_a}, {"level_b", ix.level_b},
                         {"multiplier", ix.multiplier}});
    resp["interactions"] = inter;
    j["response"] = resp;
    return j;
}

Gcm gcm_from_json(const Json& doc) {
    const Reader rd{ErrorCode::InvalidGcm};
    rd.object(doc, "");
    CausalDag dag;
    try {
        dag = with_metric_sink(dag_from_json(rd.member(doc, "", "dag")), "M");
    } catch (const CycleError&) {
        throw;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) fail(ErrorCode::InvalidGcm, "/dag", e.what());
        throw;
    }
    std::map<FactorId, SeverityDomain> domains;
    try {
        domains = domains_from_json(doc, dag);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidGcm, e.what());
    }

    std::vector<Cpd> cpds;
    const Json& cj = rd.object(rd.member(doc, "", "cpds"), "/cpds");
    for (const auto& [name, value] : cj.items()) {
        const std::string p = child_path("/cpds", name);
        if (!dag.contains(name)) fail(rd.code, p, "not a node of the graph");
        if (dag.sink_name() == name) fail(rd.code, p, "the metric sink takes no CPD");
        Cpd c;
        c.child = name;
        c.parents = dag.parent_names(name);
        std::vector<std::size_t> radix;
        for (const auto& par : c.parents) radix.push_back(domains.at(par).size());
        flatten_cpd(rd, value, p, radix, 0, c.table);
        cpds.push_back(std::move(c));
    }

    TaskResponse resp;
    if (const Json* rj = rd.optional(doc, "", "response")) {
        rd.object(*rj, "/response");
        if (const Json* k = rd.optional(*rj, "/response", "kind")) {
            const std::string kind = rd.string(*k, "/response/kind");
            if (kind == "correctness") {
                resp.kind = MetricKind::Correctness;
            } else if (kind == "continuous") {
                resp.kind = MetricKind::Continuous;
            } else {
                fail(rd.code, "/response/kind", "expected \"correctness\" or \"continuous\"");
            }
        }
        if (const Json* v = rd.optional(*rj, "/response", "noise_sigma"))
            resp.noise_sigma = rd.number(*v, "/response/noise_sigma");
        if (const Json* v = rd.optional(*rj, "/response", "base")) resp.base = rd.number(*v, "/response/base");
        if (const Json* ret = rd.optional(*rj, "/response", "retention")) {
            rd.object(*ret, "/response/retention");
            for (const auto& [name, m] : ret->items()) {
                const std::string p = child_path("/response/retention", name);
                rd.array(m, p);
                std::vector<double> mult;
                for (std::size_t i = 0; i < m.size(); ++i) mult.push_back(rd.number(m[i], child_path(p, i)));
                resp.retention[name] = std::move(mult);
            }
        }
        if (const Json* ix = rd.optional(*rj, "/response", "interactions")) {
            rd.array(*ix, "/response/interactions");
            for (std::size_t i = 0; i < ix->size(); ++i) {
                const std::string p = child_path("/response/interactions", i);
                const Json& e = (*ix)[i];
                resp.interactions.push_back({rd.string(rd.member(e, p, "a"), p + "/a"),
                                             rd.string(rd.member(e, p, "b"), p + "/b"),
                                             rd.integer(rd.member(e, p, "level_a"), p + "/level_a"),
                                             rd.integer(rd.member(e, p, "level_b"), p + "/level_b"),
                                             rd.number(rd.member(e, p, "multiplier"), p + "/multiplier")});
            }
        }
    }
    return Gcm(std::move(dag), std::move(domains), std::move(cpds), std::move(resp));
}

Json to_json(const AuditConfig& config) {
    Json j;
    j["assumed_dag"] = to_json(config.assumed_dag);
    Json treatments = Json::object();
    for (const auto& [name, pairs] : config.treatments) {
        Json list = Json::array();
        for (const auto& p : pairs) list.push_back(Json::array({p.from, p.to}));
        treatments[name] = list;
    }
    j["treatments"] = treatments;
    j["default_pair"] = Json::array({config.default_pair.from, config.default_pair.to});
    j["estimator"] = std::string(to_string(config.estimator));
    j["forest"] = {{"trees", config.forest.trees},
                   {"max_depth", config.forest.max_depth},
                   {"subsample", config.forest.subsample},
                   {"min_leaf", config.forest.min_leaf}};
    j["bootstrap"] = {{"replicates", config.bootstrap}, {"level", config.bootstrap_level}};
    j["seed"] = config.seed;
    j["coverage_floor"] = config.coverage_floor;
    j["truth"] = {{"state_cap", config.truth.state_cap}, {"mc_samples", config.truth.mc_samples}};
    return j;
}

Json to_json(const AceEstimate& e) {
    Json j;
    j["target"] = e.target;
    j["from"] = e.from;
    j["to"] = e.to;
    j["ace"] = e.value;
    if (e.ci) {
        j["ci"] = Json::array({e.ci->lo, e.ci->hi});
        j["ci_level"] = e.ci->level;
        j["replicates"] = e.ci->replicates;
        j["std_error"] = e.ci->std_error;
    } else {
        j["ci"] = nullptr;
    }
    j["coverage"] = e.coverage;
    j["n"] = e.n;
    j["adjustment"] = e.adjustment;
    j["estimator"] = std::string(to_string(e.estimator));
    return j;
}

Json to_json(const AuditReport& report) {
    Json j;
    j["metric"] = report.metric_name;
    j["mean_metric"] = report.mean_metric;
    j["rows"] = report.rows;
    j["estimator"] = std::string(to_string(report.estimator));
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["source"] = std::string(to_string(report.source));
    j["data_seed"] = report.data_seed ? Json(*report.data_seed) : Json(nullptr);
    j["mean_delta"] = or_null(report.mean_delta());
    j["max_delta"] = or_null(report.max_delta());
    Json factors = Json::array();
    for (const auto& f : report.factors) {
        Json fj;
        fj["factor"] = f.factor;
        fj["adjustment"] = {{"variables", f.adjustment.variables},
                            {"method", std::string(to_string(f.adjustment.method))},
                            {"minimal", f.adjustment.minimal}};
        fj["causal_path"] = f.causal_path;
        Json flags = Json::array();
        if (!f.causal_path) flags.push_back("no causal path");
        for (const auto& r : f.results)
            if (r.failure) {
                flags.push_back(*r.failure);
                break;
            }
        fj["flags"] = flags;
        Json results = Json::array();
        for (const auto& r : f.results) results.push_back(to_json(r));
        fj["results"] = results;
        factors.push_back(fj);
    }
    j["factors"] = factors;
    return j;
}

namespace {

AceEstimate estimate_from_json(const Reader& rd, const Json& j, const std::string& p) {
    AceEstimate est;
    est.target = rd.string(rd.member(j, p, "target"), p + "/target");
    est.from = rd.integer(rd.member(j, p, "from"), p + "/from");
    est.to = rd.integer(rd.member(j, p, "to"), p + "/to");
    est.value = rd.number(rd.member(j, p, "ace"), p + "/ace");
    if (const Json* ci = rd.optional(j, p, "ci")) {
        const Json& bounds = rd.array(*ci, p + "/ci");
        if (bounds.size() != 2) fail(rd.code, p + "/ci", "expected [lo, hi]");
        ConfidenceInterval c;
        c.lo = rd.number(bounds[0], p + "/ci/0");
        c.hi = rd.number(bounds[1], p + "/ci/1");
        c.level = rd.number(rd.member(j, p, "ci_level"), p + "/ci_level");
        c.replicates = rd.unsigned_integer(rd.member(j, p, "replicates"), p + "/replicates");
        c.std_error = rd.number(rd.member(j, p, "std_error"), p + "/std_error");
        est.ci = c;
    }
    est.coverage = rd.number(rd.member(j, p, "coverage"), p + "/coverage");
    est.n = rd.unsigned_integer(rd.member(j, p, "n"), p + "/n");
    const Json& adj = rd.array(rd.member(j, p, "adjustment"), p + "/adjustment");
    for (std::size_t i = 0; i < adj.size(); ++i) est.adjustment.push_back(rd.string(adj[i], child_path(p + "/adjustment", i)));
    est.estimator = parse_estimator(rd.string(rd.member(j, p, "estimator"), p + "/estimator"));
    return est;
}

}  // namespace

AuditReport report_from_json(const Json& doc) {
    const Reader rd{ErrorCode::SchemaMismatch};
    AuditReport report;
    report.metric_name = rd.string(rd.member(doc, "", "metric"), "/metric");
    report.mean_metric = rd.number(rd.member(doc, "", "mean_metric"), "/mean_metric");
    if (const Json* m = rd.optional(doc, "", "rows")) report.rows = rd.unsigned_integer(*m, "/rows");
    if (const Json* m = rd.optional(doc, "", "estimator")) report.estimator = parse_estimator(rd.string(*m, "/estimator"));
    if (const Json* m = rd.optional(doc, "", "config_hash")) report.config_hash = rd.string(*m, "/config_hash");
    if (const Json* m = rd.optional(doc, "", "seed")) report.seed = rd.unsigned_integer(*m, "/seed");
    if (const Json* m = rd.optional(doc, "", "source")) {
        const std::string src = rd.string(*m, "/source");
        if (src != "simulated" && src != "ingested") fail(rd.code, "/source", "unknown table source '" + src + "'");
        report.source = src == "simulated" ? TableSource::Simulated : TableSource::Ingested;
    }
    if (const Json* m = rd.optional(doc, "", "data_seed")) report.data_seed = rd.unsigned_integer(*m, "/data_seed");

    const Json& factors = rd.array(rd.member(doc, "", "factors"), "/factors");
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const std::string p = child_path("/factors", i);
        FactorAudit fa;
        fa.factor = rd.string(rd.member(factors[i], p, "factor"), p + "/factor");
        fa.adjustment.target = fa.factor;
        if (const Json* adj = rd.optional(factors[i], p, "adjustment")) {
            const std::string ap = p + "/adjustment";
            const Json& vars = rd.array(rd.member(*adj, ap, "variables"), ap + "/variables");
            for (std::size_t k = 0; k < vars.size(); ++k)
                fa.adjustment.variables.push_back(rd.string(vars[k], child_path(ap + "/variables", k)));
            const std::string method = rd.string(rd.member(*adj, ap, "method"), ap + "/method");
            if (method == to_string(AdjustmentMethod::Backdoor)) {
                fa.adjustment.method = AdjustmentMethod::Backdoor;
            } else if (method == to_string(AdjustmentMethod::FrontdoorCheckOnly)) {
                fa.adjustment.method = AdjustmentMethod::FrontdoorCheckOnly;
            } else {
                fail(rd.code, ap + "/method", "unknown method '" + method + "'");
            }
            fa.adjustment.minimal = rd.boolean(rd.member(*adj, ap, "minimal"), ap + "/minimal");
        }
        if (const Json* c = rd.optional(factors[i], p, "causal_path")) fa.causal_path = rd.boolean(*c, p + "/causal_path");
        const Json& results = rd.array(rd.member(factors[i], p, "results"), p + "/results");
        for (std::size_t k = 0; k < results.size(); ++k) {
            const std::string rp = child_path(p + "/results", k);
            FactorEstimate fe;
            fe.pair.from = rd.integer(rd.member(results[k], rp, "from"), rp + "/from");
            fe.pair.to = rd.integer(rd.member(results[k], rp, "to"), rp + "/to");
            if (const Json* e = rd.optional(results[k], rp, "estimate"))
                fe.estimate = estimate_from_json(rd, *e, rp + "/estimate");
            if (const Json* f = rd.optional(results[k], rp, "failure")) fe.failure = rd.string(*f, rp + "/failure");
            if (const Json* c = rd.optional(results[k], rp, "coverage")) fe.coverage = rd.number(*c, rp + "/coverage");
            if (const Json* t = rd.optional(results[k], rp, "truth")) {
                const std::string tp = rp + "/truth";
                GroundTruth g;
                g.value = rd.number(rd.member(*t, tp, "value"), tp + "/value");
                g.std_error = rd.number(rd.member(*t, tp, "std_error"), tp + "/std_error");
                g.exact = rd.boolean(rd.member(*t, tp, "exact"), tp + "/exact");
                fe.truth = g;
            }
            if (const Json* d = rd.optional(results[k], rp, "delta")) fe.delta = rd.number(*d, rp + "/delta");
            fa.results.push_back(std::move(fe));
        }
        report.factors.push_back(std::move(fa));
    }
    return report;
}

Json to_json(std::span<const MisspecSummary> summary) {
    Json out = Json::array();
    for (const auto& s : summary)
        out.push_back({{"n_errors", s.n_errors},
                       {"mode", std::string(to_string(s.mode))},
                       {"count", s.count},
                       {"mean_residual", s.mean_residual},
                       {"std_residual", s.std_residual},
                       {"mean_delta", s.mean_delta}});
    return out;
}

Json to_json(const MisspecReport& report) {
    Json j;
    j["baseline"] = to_json(report.baseline);
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    Json cells = Json::array();
    for (const auto& c : report.cells) {
        Json cj;
        cj["n_errors"] = c.n_errors;
        cj["mode"] = std::string(to_string(c.mode));
        cj["repeat"] = c.repeat;
        cj["added"] = edge_list(c.perturbation.added);
        cj["removed"] = edge_list(c.perturbation.removed);
        cj["skipped"] = c.skipped ? Json(*c.skipped) : Json(nullptr);
        cj["excluded"] = c.excluded;
        cj["mean_delta"] = c.mean_delta;
        cj["baseline_delta"] = c.baseline_delta;
        cj["residual"] = c.residual;
        Json fs = Json::array();
        for (const auto& f : c.factors)
            fs.push_back({{"factor", f.factor},
                          {"from", f.pair.from},
                          {"to", f.pair.to},
                          {"adjustment", f.adjustment},
                          {"valid_in_true_dag", f.valid_in_true_dag},
                          {"delta", f.delta},
                          {"baseline_delta", f.baseline_delta},
                          {"residual", f.residual}});
        cj["factors"] = fs;
        cells.push_back(cj);
    }
    j["cells"] = cells;
    j["summary"] = to_json(std::span<const MisspecSummary>(report.summary));
    return j;
}

Json to_json(std::span<const FactorComparison> rows) {
    Json out = Json::array();
    for (const auto& r : rows)
        out.push_back({{"factor", r.factor},
                       {"from", r.pair.from},
                       {"to", r.pair.to},
                       {"ace_a", r.ace_a},
                       {"ace_b", r.ace_b},
                       {"delta", r.delta},
                       {"rank_a", r.rank_a},
                       {"rank_b", r.rank_b}});
    return out;
}

RenderGraph render_graph_from_json(const Json& doc, Rng& rng) {
    const Reader rd{ErrorCode::InvalidArgument};
    std::vector<FactorSpec> specs;
    const Json& fj = rd.array(rd.member(doc, "", "factors"), "/factors");
    for (std::size_t i = 0; i < fj.size(); ++i) {
        const std::string p = child_path("/factors", i);
        const Json& f = fj[i];
        FactorSpec s;
        try {
            s.id = rd.string(rd.member(f, p, "id"), p + "/id");
            s.type = parse_corruption_type(rd.string(rd.member(f, p, "type"), p + "/type"));
            s.min = rd.number(rd.member(f, p, "min"), p + "/min");
            s.max = rd.number(rd.member(f, p, "max"), p + "/max");
            if (const Json* n = rd.optional(f, p, "nominal")) s.nominal = rd.number(*n, p + "/nominal");
            s.a = rd.number(rd.member(f, p, "a"), p + "/a");
            s.b = rd.number(rd.member(f, p, "b"), p + "/b");
            if (const Json* v = rd.optional(f, p, "sigma")) s.sigma = rd.number(*v, p + "/sigma");
            if (const Json* v = rd.optional(f, p, "squash")) s.squash = parse_squash(rd.string(*v, p + "/squash"));
            validate(s);
        } catch (const Error& e) {
            const std::string msg = e.what();
            if (!msg.empty() && msg.front() == '/') throw;
            fail(e.code(), p, msg);
        }
        specs.push_back(std::move(s));
    }

    bool sampled = false;
    if (const Json* w = rd.optional(doc, "", "weights")) {
        const std::string mode = rd.string(*w, "/weights");
        if (mode == "sampled") {
            sampled = true;
        } else if (mode != "fixed") {
            fail(rd.code, "/weights", "expected \"fixed\" or \"sampled\"");
        }
    }

    std::vector<WeightedEdge> edges;
    if (const Json* ej = rd.optional(doc, "", "edges")) {
        rd.array(*ej, "/edges");
        for (std::size_t i = 0; i < ej->size(); ++i) {
            const std::string p = child_path("/edges", i);
            const Json& e = (*ej)[i];
            WeightedEdge we;
            we.parent = rd.string(rd.member(e, p, "parent"), p + "/parent");
            we.child = rd.string(rd.member(e, p, "child"), p + "/child");
            if (!sampled) we.weight = rd.number(rd.member(e, p, "weight"), p + "/weight");
            edges.push_back(std::move(we));
        }
    }
    if (sampled) edges = sample_edge_weights(std::move(edges), rng);
    return RenderGraph(std::move(specs), std::move(edges));
}

Json to_json(const RenderGraph& graph) {
    Json j;
    Json factors = Json::array();
    for (const auto& s : graph.specs()) {
        Json f = {{"id", s.id},     {"type", std::string(to_string(s.type))},
                  {"min", s.min},   {"max", s.max},
                  {"a", s.a},       {"b", s.b},
                  {"sigma", s.sigma}, {"squash", std::string(to_string(s.squash))}};
        f["nominal"] = or_null(s.nominal);
        factors.push_back(f);
    }
    j["factors"] = factors;
    Json edges = Json::array();
    for (const auto& e : graph.edges())
        edges.push_back({{"parent", e.parent}, {"child", e.child}, {"weight", e.weight}});
    j["edges"] = edges;
    j["weights"] = "fixed";
    return j;
}

}  // namespace cdra

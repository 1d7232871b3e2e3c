#include "flatd2/report.hpp"

#include <sstream>

#include <json.hpp>

#include "flatd2/diffgeo.hpp"
#include "flatd2/error.hpp"
#include "flatd2/reptest.hpp"

namespace flatd2 {

using json = nlohmann::ordered_json;

namespace {

json names_json(const NameMap& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = to_string(v);
    return j;
}

json model_json(const SystemModel& m) {
    json j;
    j["name"] = m.name;
    j["provenance"] = m.provenance;
    j["states"] = m.states;
    j["inputs"] = m.inputs;
    json rhs = json::object();
    for (std::size_t i = 0; i < m.states.size(); ++i) rhs[m.states[i]] = to_string(m.rhs[i]);
    j["rhs"] = rhs;
    json params = json::array();
    for (const auto& p : m.params) {
        json q;
        q["name"] = p.name;
        if (p.range) q["range"] = {p.range->lo, p.range->hi};
        params.push_back(q);
    }
    j["params"] = params;
    return j;
}

json step_json(const TransformStep& s) {
    json j;
    j["kind"] = step_kind_name(s.kind);
    j["forward"] = names_json(s.forward);
    j["inverse"] = names_json(s.inverse);
    if (s.kind == StepKind::Prolong) {
        j["prolonged_input"] = s.prolonged_input;
        j["order"] = s.order;
    }
    if (s.kind == StepKind::Decompose) {
        j["kept_states"] = s.kept_states;
        j["residual"] = names_json(s.residual);
    }
    if (!s.rationale.empty()) j["rationale"] = s.rationale;
    return j;
}

json node_json(const TraceNode& t) {
    json j;
    j["case"] = case_tag_name(t.tag);
    if (!t.label.empty()) j["label"] = t.label;
    j["prolongations"] = t.prolongations;
    j["case1_count"] = t.case1_count;
    json steps = json::array();
    for (const auto& s : t.steps) steps.push_back(step_json(s));
    j["steps"] = steps;
    j["model"] = model_json(t.model);
    if (!t.note.empty()) j["note"] = t.note;
    json children = json::array();
    for (const auto& c : t.children) children.push_back(node_json(*c));
    j["children"] = children;
    return j;
}

json config_json(const RunConfig& c) {
    json j;
    j["system_file"] = c.system_file;
    j["seed"] = c.seed;
    j["samples"] = c.tol.samples;
    j["tol_zero"] = c.tol.zero;
    j["tol_rank"] = c.tol.rank;
    j["max_order"] = c.max_order;
    j["max_prolong"] = c.budget.max_prolong;
    j["max_case1"] = c.budget.max_case1;
    j["hints_file"] = c.hints_file;
    j["parallel"] = c.parallel;
    return j;
}

json candidate_json(const FlatOutputCandidate& c) {
    json j;
    json y = json::array();
    for (const auto& e : c.y) y.push_back(to_string(e));
    j["y"] = y;
    j["R"] = c.R;
    j["d"] = c.d;
    j["verified"] = c.verified;
    j["residual"] = c.residual;
    j["message"] = c.message;
    return j;
}

json header(const char* command, const RunConfig& cfg) {
    json j;
    j["schema"] = kReportSchema;
    j["command"] = command;
    j["config"] = config_json(cfg);
    return j;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

std::string exprs(const std::vector<Expr>& v) {
    std::vector<std::string> s;
    for (const auto& e : v) s.push_back(to_string(e));
    return join(s, ", ");
}

void tree_text(std::ostream& os, const TraceNode& t, int depth) {
    os << std::string(static_cast<std::size_t>(2 * depth + 2), ' ') << case_tag_name(t.tag);
    if (!t.label.empty()) os << "  " << t.label;
    os << "  (n=" << t.model.n() << ", prolongations " << t.prolongations << ")";
    if (!t.note.empty()) os << ": " << t.note;
    os << "\n";
    for (const auto& c : t.children) tree_text(os, *c, depth + 1);
}

}  // namespace

SystemInfo system_info(const SystemModel& m, Context& ctx) {
    SystemInfo info;
    info.n = m.n();
    info.m = m.m();
    info.input_rank = jacobian_rank(m.rhs, m.input_symbols(), m.domain(), ctx);
    const SflChain chain = sfl_chain(m, ctx);
    info.sfl = chain.sfl;
    info.sfl_ranks = chain.ranks;
    info.ai = ai_test(m, ctx);
    if (info.ai) {
        const SystemModel a = is_syntactically_affine(m) ? m : to_ai_form(m, ctx).first;
        const Domain dom = a.domain();
        const Distribution d1(a.state_symbols(), input_fields(a));
        info.d1_involutive = is_involutive(d1, dom, ctx);
        info.closure_dim = generic_rank(involutive_closure(d1, dom, ctx), dom, ctx);
        return info;
    }
    try {
        const auto sols = pai_condition_solutions(m, ctx);
        info.pai_candidates = static_cast<int>(sols.size());
        for (const auto& s : sols) {
            const bool ok = pai_filter(m, s, ctx);
            info.pai_passing += ok ? 1 : 0;
            info.pai_solutions.push_back("(" + to_string(s.a1) + ", " + to_string(s.a2) + ")" +
                                         (ok ? " passes the filter" : " rejected by the filter"));
        }
    } catch (const Error& e) {
        info.note = e.what();
    }
    return info;
}

std::string check_report_json(const SystemModel& m, const RunResult& r, const RunConfig& cfg) {
    json j = header("check", cfg);
    j["system"] = model_json(m);
    j["verdict"] = verdict_name(r.verdict);
    j["case_path"] = r.case_path;
    if (r.verdict == Verdict::Flat) {
        json t = json::array();
        for (const auto& e : r.terminal_output) t.push_back(to_string(e));
        j["terminal_output"] = t;
        j["flat_output"] = candidate_json(r.output);
    }
    j["not_flat_at_all"] = r.not_flat_at_all;
    j["hint_requests"] = r.hint_requests;
    j["message"] = r.message;
    j["trace"] = node_json(*r.trace);
    return j.dump(2) + "\n";
}

std::string check_report_text(const SystemModel& m, const RunResult& r) {
    std::ostringstream os;
    os << "system " << m.name << " (n=" << m.n() << ", m=" << m.m() << ")\n";
    os << "verdict: " << verdict_name(r.verdict) << "\n";
    if (!r.case_path.empty()) {
        std::vector<std::string> p;
        for (int c : r.case_path) p.push_back(std::to_string(c));
        os << "case path: [" << join(p, ", ") << "]\n";
    }
    if (r.verdict == Verdict::Flat) {
        os << "flat output: y = (" << exprs(r.output.y) << ")\n";
        std::vector<std::string> R;
        for (int x : r.output.R) R.push_back(std::to_string(x));
        os << "R = (" << join(R, ", ") << "), d=" << r.output.d << "\n";
        os << "terminal linearizing output: (" << exprs(r.terminal_output) << ")\n";
    }
    if (r.not_flat_at_all) os << "the system is not flat\n";
    if (!r.message.empty()) os << "note: " << r.message << "\n";
    for (const auto& h : r.hint_requests) os << "hint request: " << h << "\n";
    os << "trace:\n";
    tree_text(os, *r.trace, 0);
    return os.str();
}

std::string verify_report_json(const SystemModel& m, const FlatOutputCandidate& c, const RunConfig& cfg) {
    json j = header("verify", cfg);
    j["system"] = model_json(m);
    j["candidate"] = candidate_json(c);
    return j.dump(2) + "\n";
}

std::string verify_report_text(const FlatOutputCandidate& c) {
    std::ostringstream os;
    os << "candidate: y = (" << exprs(c.y) << ")\n";
    os << (c.verified ? "verified" : "not verified") << ": " << c.message << "\n";
    if (!c.R.empty()) {
        std::vector<std::string> R;
        for (int x : c.R) R.push_back(std::to_string(x));
        os << "R = (" << join(R, ", ") << "), d=" << c.d << "\n";
        os << "largest relative singular value below rank: " << c.residual << "\n";
    }
    return os.str();
}

std::string info_report_json(const SystemModel& m, const SystemInfo& info, const RunConfig& cfg) {
    json j = header("info", cfg);
    j["system"] = model_json(m);
    j["n"] = info.n;
    j["m"] = info.m;
    j["input_rank"] = info.input_rank;
    j["sfl"] = info.sfl;
    j["sfl_ranks"] = info.sfl_ranks;
    j["ai"] = info.ai;
    if (info.ai) {
        j["d1_involutive"] = info.d1_involutive;
        j["closure_dim"] = info.closure_dim;
    } else {
        j["pai_candidates"] = info.pai_candidates;
        j["pai_passing"] = info.pai_passing;
        j["pai_solutions"] = info.pai_solutions;
    }
    if (!info.note.empty()) j["note"] = info.note;
    return j.dump(2) + "\n";
}

std::string info_report_text(const SystemInfo& info) {
    std::ostringstream os;
    os << "n: " << info.n << "\n";
    os << "inputs: " << info.m << " (generic rank " << info.input_rank << ")\n";
    std::vector<std::string> ranks;
    for (int r : info.sfl_ranks) ranks.push_back(std::to_string(r));
    os << "SFL: " << (info.sfl ? "yes" : "no") << " (chain ranks " << join(ranks, " ") << ")\n";
    os << "AI: " << (info.ai ? "yes" : "no") << "\n";
    if (info.ai) {
        os << "D1 involutive: " << (info.d1_involutive ? "yes" : "no") << "\n";
        os << "dim of involutive closure of D1: " << info.closure_dim << "\n";
    } else {
        os << "PAI candidates: " << info.pai_candidates << "; pass filter: " << info.pai_passing << "\n";
        for (const auto& s : info.pai_solutions) os << "  " << s << "\n";
    }
    if (!info.note.empty()) os << "note: " << info.note << "\n";
    return os.str();
}

}  // namespace flatd2

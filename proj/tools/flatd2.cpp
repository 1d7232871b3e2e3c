// Command-line driver: check, verify and info on system files.

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "flatd2/error.hpp"
#include "flatd2/parse.hpp"
#include "flatd2/report.hpp"

using namespace flatd2;

namespace {

enum Exit { kFlat = 0, kUsage = 1, kNotLinearizable = 2, kInconclusive = 3 };

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Splits at commas outside parentheses.
std::vector<std::string> split_top_level(const std::string& s) {
    std::vector<std::string> out(1);
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            out.emplace_back();
            continue;
        }
        out.back() += c;
    }
    return out;
}

struct Options {
    RunConfig cfg;
    std::string format = "text";
    std::vector<std::string> candidates;
};

void emit(const std::string& s) { std::cout << s << std::flush; }

int cmd_check(const Options& o) {
    const SystemModel m = parse_system(read_file(o.cfg.system_file), o.cfg.seed);
    RunOptions ro;
    ro.budget = o.cfg.budget;
    ro.parallel = o.cfg.parallel;
    ro.verify.max_order = o.cfg.max_order;
    if (!o.cfg.hints_file.empty()) {
        ro.hints = parse_hints(read_file(o.cfg.hints_file));
        validate_hints(ro.hints, m);
    }
    Context ctx(o.cfg.seed, o.cfg.tol);
    const RunResult r = run(m, ctx, ro);
    emit(o.format == "json" ? check_report_json(m, r, o.cfg) : check_report_text(m, r));
    switch (r.verdict) {
        case Verdict::Flat: return kFlat;
        case Verdict::NotLinearizable: return kNotLinearizable;
        default: return kInconclusive;
    }
}

int cmd_verify(const Options& o) {
    const SystemModel m = parse_system(read_file(o.cfg.system_file), o.cfg.seed);
    std::vector<std::string> parts;
    for (const auto& c : o.candidates)
        for (auto& p : split_top_level(c)) parts.push_back(std::move(p));
    if (static_cast<int>(parts.size()) != m.m())
        throw ValidationError("expected " + std::to_string(m.m()) + " output components, got " +
                              std::to_string(parts.size()));
    std::set<std::string> known(m.states.begin(), m.states.end());
    known.insert(m.inputs.begin(), m.inputs.end());
    for (const auto& p : m.params) known.insert(p.name);
    std::vector<Expr> y;
    for (const auto& p : parts) {
        y.push_back(parse_expr(p));
        for (Symbol s : y.back().free_symbols())
            if (!known.count(symbol_name(s)))
                throw ValidationError("output references unknown variable '" + symbol_name(s) + "'");
    }
    Context ctx(o.cfg.seed, o.cfg.tol);
    VerifyOptions vo;
    vo.max_order = o.cfg.max_order;
    FlatOutputCandidate c;
    int code = kNotLinearizable;
    try {
        c = verify_flat_output(m, y, ctx, vo);
        code = c.verified ? kFlat : kNotLinearizable;
    } catch (const SamplingError& e) {
        c.y = y;
        c.message = e.what();
        code = kInconclusive;
    } catch (const RankInstability& e) {
        c.y = y;
        c.message = e.what();
        code = kInconclusive;
    }
    emit(o.format == "json" ? verify_report_json(m, c, o.cfg) : verify_report_text(c));
    return code;
}

int cmd_info(const Options& o) {
    const SystemModel m = parse_system(read_file(o.cfg.system_file), o.cfg.seed);
    Context ctx(o.cfg.seed, o.cfg.tol);
    const SystemInfo info = system_info(m, ctx);
    emit(o.format == "json" ? info_report_json(m, info, o.cfg) : info_report_text(info));
    return kFlat;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test two-input systems for linearizability by endogenous dynamic feedback of dimension at most two"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("system", o.cfg.system_file, "System file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.cfg.seed, "Sampling seed")->capture_default_str();
        sub->add_option("--samples", o.cfg.tol.samples, "Sample points per decision")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--tol-zero", o.cfg.tol.zero, "Zero test tolerance")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--tol-rank", o.cfg.tol.rank, "Relative singular value cutoff")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--max-order", o.cfg.max_order, "Highest output derivative order in verification (default n+4)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--format", o.format, "Report format")
            ->check(CLI::IsMember({"text", "json"}))
            ->capture_default_str();
    };

    CLI::App* check = app.add_subcommand("check", "Run the linearizability test and report a flat output");
    common(check);
    check->add_option("--hints", o.cfg.hints_file, "Hint file")->check(CLI::ExistingFile);
    check->add_option("--max-prolong", o.cfg.budget.max_prolong, "Prolongation budget")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    check->add_option("--max-case1", o.cfg.budget.max_case1, "Decomposition budget (default n)");
    check->add_flag("--parallel", o.cfg.parallel, "Explore branches concurrently");

    CLI::App* verify = app.add_subcommand("verify", "Check that given expressions form a flat output");
    common(verify);
    verify->add_option("outputs", o.candidates, "Output components, separately or comma separated")->required();

    CLI::App* info = app.add_subcommand("info", "Print representation diagnostics");
    common(info);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*check) return cmd_check(o);
        if (*verify) return cmd_verify(o);
        return cmd_info(o);
    } catch (const ParseError& e) {
        std::cerr << o.cfg.system_file << ":" << e.what() << "\n";
        return kUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInconclusive;
    }
}

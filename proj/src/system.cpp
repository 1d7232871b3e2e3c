#include "flatd2/system.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>

#include "flatd2/linalg.hpp"
#include "flatd2/parse.hpp"

namespace flatd2 {

std::vector<Symbol> SystemModel::state_symbols() const {
    std::vector<Symbol> out;
    for (const auto& s : states) out.push_back(intern(s));
    return out;
}

std::vector<Symbol> SystemModel::input_symbols() const {
    std::vector<Symbol> out;
    for (const auto& s : inputs) out.push_back(intern(s));
    return out;
}

std::vector<Symbol> SystemModel::coordinates() const {
    std::vector<Symbol> out = state_symbols();
    for (Symbol s : input_symbols()) out.push_back(s);
    return out;
}

bool SystemModel::is_param(std::string_view name) const {
    return std::any_of(params.begin(), params.end(), [&](const Parameter& p) { return p.name == name; });
}

int SystemModel::state_index(std::string_view name) const {
    auto it = std::find(states.begin(), states.end(), name);
    return it == states.end() ? -1 : static_cast<int>(it - states.begin());
}

int SystemModel::input_index(std::string_view name) const {
    auto it = std::find(inputs.begin(), inputs.end(), name);
    return it == inputs.end() ? -1 : static_cast<int>(it - inputs.begin());
}

Domain SystemModel::domain() const {
    Domain d;
    for (const auto& p : params) d.add_param(intern(p.name), p.range.value_or(ParamRange{}));
    for (Symbol s : coordinates()) d.add_var(s);
    for (const auto& c : constraints) {
        d.add_guard(c, Guard::NonZero);
        d.add_implicit_guards(c);
    }
    for (const auto& f : rhs) d.add_implicit_guards(f);
    return d;
}

// ---------------------------------------------------------------------------

void validate_system(const SystemModel& m, Context* ctx) {
    if (m.n() < 1) throw ValidationError("system has no states");
    if (m.m() < 1 || m.m() > 2) throw ValidationError("input count must be 1 or 2, got " + std::to_string(m.m()));
    if (m.rhs.size() != m.states.size()) throw ValidationError("every state needs exactly one dot equation");
    std::set<std::string> names;
    auto declare = [&](const std::string& s) {
        if (!names.insert(s).second) throw ValidationError("name '" + s + "' declared twice");
    };
    for (const auto& s : m.states) declare(s);
    for (const auto& s : m.inputs) declare(s);
    for (const auto& p : m.params) {
        declare(p.name);
        if (p.range && !(p.range->lo < p.range->hi))
            throw ValidationError("parameter '" + p.name + "' has an empty range");
    }
    auto check_vars = [&](const Expr& e, const std::string& where) {
        for (const auto& v : free_names(e))
            if (!names.count(v)) throw ValidationError("undeclared variable '" + v + "' in " + where);
    };
    for (int i = 0; i < m.n(); ++i) check_vars(m.rhs[i], "dot " + m.states[i]);
    for (const auto& c : m.constraints) check_vars(c, "domain constraint");
    if (!ctx) return;

    // rank of the input Jacobian at generic points
    std::vector<std::vector<Expr>> jac(m.n());
    const auto us = m.input_symbols();
    for (int i = 0; i < m.n(); ++i)
        for (Symbol u : us) jac[i].push_back(diff(m.rhs[i], u));
    Domain d = m.domain();
    std::vector<int> ranks;
    for (const Point& p : ctx->points(d, ctx->tol().samples)) {
        Eigen::MatrixXd j(m.n(), m.m());
        try {
            for (int i = 0; i < m.n(); ++i)
                for (int k = 0; k < m.m(); ++k) j(i, k) = eval(jac[i][k], p);
        } catch (const DomainError&) {
            continue;
        }
        ranks.push_back(numeric_rank(j, ctx->tol().rank));
    }
    if (ranks.empty()) throw SamplingError("input Jacobian undefined at every sample point");
    int r = majority(ranks);
    if (r < m.m())
        throw ValidationError("rank of the input Jacobian is " + std::to_string(r) + " but " +
                              std::to_string(m.m()) + " inputs are declared");
}

// ---------------------------------------------------------------------------

namespace {

bool is_ident(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

struct Token {
    std::string text;
    int col;  // 1-based
};

std::vector<Token> split_words(std::string_view line, std::size_t from, std::size_t to) {
    std::vector<Token> out;
    std::size_t i = from;
    while (i < to) {
        while (i < to && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= to) break;
        std::size_t j = i;
        while (j < to && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        out.push_back({std::string(line.substr(i, j - i)), static_cast<int>(i) + 1});
        i = j;
    }
    return out;
}

double parse_number(const Token& t, int line) {
    char* end = nullptr;
    double v = std::strtod(t.text.c_str(), &end);
    if (end == t.text.c_str() || *end != '\0' || !std::isfinite(v))
        throw ParseError("expected a number, got '" + t.text + "'", line, t.col);
    return v;
}

std::string_view strip_comment(std::string_view line) {
    auto h = line.find('#');
    return h == std::string_view::npos ? line : line.substr(0, h);
}

// Iterates over lines with their 1-based numbers.
template <class F>
void for_lines(std::string_view text, F&& f) {
    int no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        f(++no, strip_comment(line));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

}  // namespace

SystemModel parse_system(std::string_view text, std::uint64_t seed) {
    SystemModel m;
    bool have_name = false;
    std::vector<std::optional<Expr>> dots;
    std::vector<std::pair<std::string, Expr>> dot_list;
    std::vector<std::pair<int, int>> dot_pos;

    for_lines(text, [&](int no, std::string_view line) {
        auto words = split_words(line, 0, line.size());
        if (words.empty()) return;
        const std::string& kw = words[0].text;
        if (kw == "system") {
            if (words.size() != 2 || !is_ident(words[1].text))
                throw ParseError("expected 'system <name>'", no, words[0].col);
            if (have_name) throw ParseError("duplicate 'system' line", no, words[0].col);
            m.name = words[1].text;
            have_name = true;
        } else if (kw == "param") {
            if (words.size() < 2 || !is_ident(words[1].text))
                throw ParseError("expected 'param <name> [range <lo> <hi>]'", no, words[0].col);
            Parameter p{words[1].text, std::nullopt};
            if (words.size() > 2) {
                if (words[2].text != "range" || words.size() != 5)
                    throw ParseError("expected 'range <lo> <hi>'", no, words[2].col);
                p.range = ParamRange{parse_number(words[3], no), parse_number(words[4], no)};
                if (!(p.range->lo < p.range->hi)) throw ParseError("empty parameter range", no, words[3].col);
            }
            m.params.push_back(std::move(p));
        } else if (kw == "state" || kw == "input") {
            if (words.size() < 2) throw ParseError("expected at least one name", no, words[0].col + static_cast<int>(kw.size()));
            for (std::size_t i = 1; i < words.size(); ++i) {
                if (!is_ident(words[i].text)) throw ParseError("invalid name '" + words[i].text + "'", no, words[i].col);
                (kw == "state" ? m.states : m.inputs).push_back(words[i].text);
            }
        } else if (kw == "domain") {
            std::size_t start = static_cast<std::size_t>(words[0].col - 1) + kw.size();
            auto ne = line.rfind("!=");
            if (ne == std::string_view::npos || ne < start)
                throw ParseError("expected 'domain <expr> != 0'", no, words[0].col);
            auto rhs = split_words(line, ne + 2, line.size());
            if (rhs.size() != 1 || rhs[0].text != "0")
                throw ParseError("expected '0' after '!='", no, static_cast<int>(ne) + 3);
            m.constraints.push_back(parse_expr(line.substr(start, ne - start), no, static_cast<int>(start) + 1));
        } else if (kw == "dot") {
            if (words.size() < 2 || !is_ident(words[1].text))
                throw ParseError("expected 'dot <state> = <expr>'", no, words[0].col);
            std::size_t after_name = static_cast<std::size_t>(words[1].col - 1) + words[1].text.size();
            auto eq = line.find('=', after_name);
            if (eq == std::string_view::npos ||
                !split_words(line, after_name, eq).empty())
                throw ParseError("expected '=' after state name", no, static_cast<int>(after_name) + 1);
            std::string_view body = line.substr(eq + 1);
            if (split_words(body, 0, body.size()).empty())
                throw ParseError("missing right-hand side", no, static_cast<int>(eq) + 2);
            dot_list.emplace_back(words[1].text, parse_expr(body, no, static_cast<int>(eq) + 2));
            dot_pos.emplace_back(no, words[1].col);
        } else {
            throw ParseError("unknown declaration '" + kw + "'", no, words[0].col);
        }
    });

    dots.assign(m.states.size(), std::nullopt);
    for (std::size_t k = 0; k < dot_list.size(); ++k) {
        int i = m.state_index(dot_list[k].first);
        if (i < 0)
            throw ParseError("'" + dot_list[k].first + "' is not a declared state", dot_pos[k].first, dot_pos[k].second);
        if (dots[i]) throw ParseError("second dot equation for '" + dot_list[k].first + "'", dot_pos[k].first, dot_pos[k].second);
        dots[i] = dot_list[k].second;
    }
    for (std::size_t i = 0; i < dots.size(); ++i) {
        if (!dots[i]) throw ValidationError("state '" + m.states[i] + "' has no dot equation");
        m.rhs.push_back(*dots[i]);
    }
    Context ctx(seed);
    validate_system(m, &ctx);
    return m;
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string serialize_system(const SystemModel& m) {
    std::ostringstream os;
    if (m.provenance != "original") os << "# " << m.provenance << "\n";
    os << "system " << m.name << "\n";
    for (const auto& p : m.params) {
        os << "param " << p.name;
        if (p.range) os << " range " << fmt_double(p.range->lo) << " " << fmt_double(p.range->hi);
        os << "\n";
    }
    os << "state";
    for (const auto& s : m.states) os << " " << s;
    os << "\ninput";
    for (const auto& s : m.inputs) os << " " << s;
    os << "\n";
    for (const auto& c : m.constraints) os << "domain " << to_string(c) << " != 0\n";
    for (int i = 0; i < m.n(); ++i) os << "dot " << m.states[i] << " = " << to_string(m.rhs[i]) << "\n";
    return os.str();
}

bool structurally_equal(const SystemModel& a, const SystemModel& b) {
    if (a.name != b.name || a.states != b.states || a.inputs != b.inputs) return false;
    if (a.params.size() != b.params.size() || a.rhs.size() != b.rhs.size() ||
        a.constraints.size() != b.constraints.size())
        return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        const auto &p = a.params[i], &q = b.params[i];
        if (p.name != q.name || p.range.has_value() != q.range.has_value()) return false;
        if (p.range && (p.range->lo != q.range->lo || p.range->hi != q.range->hi)) return false;
    }
    for (std::size_t i = 0; i < a.rhs.size(); ++i)
        if (a.rhs[i] != b.rhs[i]) return false;
    for (std::size_t i = 0; i < a.constraints.size(); ++i)
        if (a.constraints[i] != b.constraints[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------

HintSet parse_hints(std::string_view text) {
    HintSet h;
    for_lines(text, [&](int no, std::string_view line) {
        auto words = split_words(line, 0, line.size());
        if (words.empty()) return;
        if (words[0].text != "hint" || words.size() < 3)
            throw ParseError("expected 'hint first_integral <expr>' or 'hint linearizing_output <expr> , <expr>'", no,
                             words[0].col);
        const Token& kind = words[1];
        std::size_t body = static_cast<std::size_t>(kind.col - 1) + kind.text.size();
        if (kind.text == "first_integral") {
            h.first_integrals.push_back(parse_expr(line.substr(body), no, static_cast<int>(body) + 1));
        } else if (kind.text == "linearizing_output") {
            // the separating comma is the only top-level ',' (functions take one argument)
            auto comma = line.find(',', body);
            if (comma == std::string_view::npos) throw ParseError("expected ',' between the two outputs", no, kind.col);
            Expr a = parse_expr(line.substr(body, comma - body), no, static_cast<int>(body) + 1);
            Expr b = parse_expr(line.substr(comma + 1), no, static_cast<int>(comma) + 2);
            h.linearizing_outputs.emplace_back(a, b);
        } else {
            throw ParseError("unknown hint kind '" + kind.text + "'", no, kind.col);
        }
    });
    return h;
}

std::string serialize_hints(const HintSet& h) {
    std::ostringstream os;
    for (const auto& e : h.first_integrals) os << "hint first_integral " << to_string(e) << "\n";
    for (const auto& [a, b] : h.linearizing_outputs)
        os << "hint linearizing_output " << to_string(a) << " , " << to_string(b) << "\n";
    return os.str();
}

namespace {

// Strips trailing _bar and _d<k> suffixes.
std::string base_name(std::string s) {
    for (;;) {
        if (s.size() > 4 && s.compare(s.size() - 4, 4, "_bar") == 0) {
            s.resize(s.size() - 4);
            continue;
        }
        auto d = s.rfind("_d");
        if (d != std::string::npos && d > 0 && d + 2 < s.size() &&
            std::all_of(s.begin() + static_cast<long>(d) + 2, s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            s.resize(d);
            continue;
        }
        return s;
    }
}

}  // namespace

void validate_hints(const HintSet& h, const SystemModel& m) {
    std::set<std::string> known(m.states.begin(), m.states.end());
    known.insert(m.inputs.begin(), m.inputs.end());
    for (const auto& p : m.params) known.insert(p.name);
    auto check = [&](const Expr& e) {
        for (const auto& v : free_names(e))
            if (!known.count(v) && !known.count(base_name(v)))
                throw ValidationError("hint references unknown variable '" + v + "'");
    };
    for (const auto& e : h.first_integrals) check(e);
    for (const auto& [a, b] : h.linearizing_outputs) {
        check(a);
        check(b);
    }
}

}  // namespace flatd2

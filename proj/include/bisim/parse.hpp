#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bisim/system.hpp"

namespace bisim {

struct ParseError : std::runtime_error {
    int line, col;
    ParseError(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                             std::to_string(col_) + ")"),
          line(line_), col(col_) {}
};

namespace detail {

struct Tok {
    enum class Kind { Ident, Int, Punct, Newline, End };
    Kind kind;
    std::string text;
    Int ival = 0;
    int line, col;
};

inline std::vector<Tok> lex(const std::string& src) {
    std::vector<Tok> out;
    int line = 1, col = 1;
    size_t i = 0;
    auto push = [&](Tok::Kind k, std::string t, Int v, int l, int c) {
        out.push_back({k, std::move(t), v, l, c});
    };
    while (i < src.size()) {
        char c = src[i];
        if (c == '\n') {
            if (out.empty() || out.back().kind != Tok::Kind::Newline)
                push(Tok::Kind::Newline, "\n", 0, line, col);
            ++i;
            ++line;
            col = 1;
            continue;
        }
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        if (std::isspace((unsigned char)c)) {
            ++i;
            ++col;
            continue;
        }
        int tl = line, tc = col;
        if (std::isdigit((unsigned char)c)) {
            size_t j = i;
            while (j < src.size() && std::isdigit((unsigned char)src[j])) ++j;
            std::string text = src.substr(i, j - i);
            Int v;
            try {
                v = std::stoll(text);
            } catch (const std::out_of_range&) {
                throw ParseError("integer literal out of range", tl, tc);
            }
            push(Tok::Kind::Int, text, v, tl, tc);
            col += (int)(j - i);
            i = j;
            continue;
        }
        if (std::isalpha((unsigned char)c) || c == '_') {
            size_t j = i;
            while (j < src.size() &&
                   (std::isalnum((unsigned char)src[j]) || src[j] == '_'))
                ++j;
            push(Tok::Kind::Ident, src.substr(i, j - i), 0, tl, tc);
            col += (int)(j - i);
            i = j;
            continue;
        }
        auto two = src.substr(i, 2);
        if (two == "&&" || two == "||" || two == "->" || two == "!=" ||
            two == "<=" || two == ">=" || two == "==") {
            push(Tok::Kind::Punct, two, 0, tl, tc);
            i += 2;
            col += 2;
            continue;
        }
        if (std::string("+-*%/()!<>=:,").find(c) != std::string::npos) {
            push(Tok::Kind::Punct, std::string(1, c), 0, tl, tc);
            ++i;
            ++col;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", tl, tc);
    }
    push(Tok::Kind::End, "", 0, line, col);
    return out;
}

inline const std::set<std::string>& reserved_words() {
    static const std::set<std::string> words = {
        "vars", "init", "transitions", "labels", "else", "true", "false"};
    return words;
}

struct Parser {
    std::vector<Tok> toks;
    size_t pos = 0;
    std::map<std::string, int> var_index;

    const Tok& cur() const { return toks[pos]; }
    const Tok& advance() { return toks[pos++]; }
    bool at_punct(const std::string& t) const {
        return cur().kind == Tok::Kind::Punct && cur().text == t;
    }
    bool at_ident(const std::string& t) const {
        return cur().kind == Tok::Kind::Ident && cur().text == t;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, cur().line, cur().col);
    }
    void expect_punct(const std::string& t) {
        if (!at_punct(t)) fail("expected '" + t + "'");
        ++pos;
    }
    void skip_newlines() {
        while (cur().kind == Tok::Kind::Newline) ++pos;
    }
    void end_line() {
        if (cur().kind == Tok::Kind::End) return;
        if (cur().kind != Tok::Kind::Newline) fail("expected end of line");
        skip_newlines();
    }

    // expr := term (('+'|'-') term)*
    // term := factor ('*' factor | ('%'|'/') INT)*
    // factor := INT | VAR | '-' factor | '(' expr ')'
    ExprPtr parse_expr() {
        ExprPtr e = parse_term();
        while (at_punct("+") || at_punct("-")) {
            bool plus = cur().text == "+";
            ++pos;
            ExprPtr r = parse_term();
            e = plus ? IntExpr::add(e, r) : IntExpr::sub(e, r);
        }
        return e;
    }
    ExprPtr parse_term() {
        ExprPtr e = parse_factor();
        while (at_punct("*") || at_punct("%") || at_punct("/")) {
            std::string op = cur().text;
            ++pos;
            if (op == "*") {
                e = IntExpr::mul(e, parse_factor());
            } else {
                if (cur().kind != Tok::Kind::Int)
                    fail("divisor must be a positive integer literal");
                Int k = cur().ival;
                if (k <= 0) fail("divisor must be positive");
                ++pos;
                e = op == "%" ? IntExpr::mod(e, k) : IntExpr::div(e, k);
            }
        }
        return e;
    }
    ExprPtr parse_factor() {
        if (cur().kind == Tok::Kind::Int) {
            Int v = advance().ival;
            return IntExpr::constant(v);
        }
        if (at_punct("-")) {
            ++pos;
            return IntExpr::neg(parse_factor());
        }
        if (at_punct("(")) {
            ++pos;
            ExprPtr e = parse_expr();
            expect_punct(")");
            return e;
        }
        if (cur().kind == Tok::Kind::Ident) {
            if (reserved_words().count(cur().text))
                fail("unexpected keyword '" + cur().text + "'");
            auto it = var_index.find(cur().text);
            if (it == var_index.end()) fail("unknown variable '" + cur().text + "'");
            ++pos;
            return IntExpr::variable(it->second);
        }
        fail("expected expression");
    }

    // pred := conj ('||' conj)* ; conj := unit ('&&' unit)*
    // unit := '!' unit | 'true' | 'false' | comparison | '(' pred ')'
    PredPtr parse_pred() {
        PredPtr p = parse_conj();
        while (at_punct("||")) {
            ++pos;
            p = Predicate::disj(p, parse_conj());
        }
        return p;
    }
    PredPtr parse_conj() {
        PredPtr p = parse_unit();
        while (at_punct("&&")) {
            ++pos;
            p = Predicate::conj(p, parse_unit());
        }
        return p;
    }
    PredPtr parse_unit() {
        if (at_punct("!")) {
            ++pos;
            return Predicate::neg(parse_unit());
        }
        if (at_ident("true")) {
            ++pos;
            return Predicate::top();
        }
        if (at_ident("false")) {
            ++pos;
            return Predicate::bot();
        }
        // A comparison and a parenthesized predicate can both start with '(';
        // try the expression first and fall back, keeping the deeper error.
        size_t save = pos;
        try {
            ExprPtr lhs = parse_expr();
            Cmp op = parse_cmp();
            ExprPtr rhs = parse_expr();
            return make_atom(lhs, op, rhs);
        } catch (const ParseError& expr_err) {
            size_t reached = pos;
            pos = save;
            if (!at_punct("(")) throw;
            try {
                ++pos;
                PredPtr p = parse_pred();
                expect_punct(")");
                return p;
            } catch (const ParseError& pred_err) {
                if (reached > pos) {
                    pos = reached;
                    throw expr_err;
                }
                throw;
            }
        }
    }
    Cmp parse_cmp() {
        if (cur().kind != Tok::Kind::Punct) fail("expected comparison operator");
        std::string t = cur().text;
        Cmp op;
        if (t == "=" || t == "==") op = Cmp::Eq;
        else if (t == "!=") op = Cmp::Ne;
        else if (t == "<") op = Cmp::Lt;
        else if (t == "<=") op = Cmp::Le;
        else if (t == ">") op = Cmp::Gt;
        else if (t == ">=") op = Cmp::Ge;
        else fail("expected comparison operator");
        ++pos;
        return op;
    }
    static PredPtr make_atom(ExprPtr lhs, Cmp op, ExprPtr rhs) {
        if (rhs->kind == IntExpr::Kind::Const && rhs->value == 0)
            return Predicate::atom(lhs, op);
        return Predicate::atom(IntExpr::sub(lhs, rhs), op);
    }

    std::string parse_name(const char* what) {
        if (cur().kind != Tok::Kind::Ident) fail(std::string("expected ") + what);
        if (reserved_words().count(cur().text))
            fail("'" + cur().text + "' is a reserved word");
        return advance().text;
    }

    TransitionSystem parse_system() {
        TransitionSystem m;
        skip_newlines();
        if (!at_ident("vars")) fail("expected 'vars'");
        ++pos;
        while (cur().kind == Tok::Kind::Ident) {
            int l = cur().line, c = cur().col;
            std::string name = parse_name("variable name");
            if (var_index.count(name))
                throw ParseError("duplicate variable '" + name + "'", l, c);
            var_index[name] = (int)m.vars.size();
            m.vars.push_back(name);
        }
        if (m.vars.empty()) fail("expected at least one variable");
        end_line();

        if (!at_ident("init")) fail("expected 'init'");
        ++pos;
        m.init = parse_pred();
        end_line();

        if (!at_ident("transitions")) fail("expected 'transitions'");
        ++pos;
        end_line();
        while (!at_ident("labels") && cur().kind != Tok::Kind::End) {
            GuardedCommand cmd;
            int l = cur().line, c = cur().col;
            if (at_ident("else")) {
                ++pos;
                cmd.is_else = true;
                cmd.guard = Predicate::top();
            } else {
                cmd.guard = parse_pred();
            }
            expect_punct("->");
            cmd.update.push_back(parse_expr());
            while (at_punct(",")) {
                ++pos;
                cmd.update.push_back(parse_expr());
            }
            if (cmd.update.size() != m.vars.size())
                throw ParseError("update arity " + std::to_string(cmd.update.size()) +
                                     " does not match " + std::to_string(m.vars.size()) +
                                     " variables",
                                 l, c);
            if (!m.commands.empty() && m.commands.back().is_else)
                throw ParseError("no commands allowed after 'else'", l, c);
            m.commands.push_back(std::move(cmd));
            end_line();
        }
        if (m.commands.empty() || !m.commands.back().is_else)
            fail("transitions must end with an 'else' catch-all");

        if (at_ident("labels")) {
            ++pos;
            end_line();
            std::set<std::string> seen;
            while (cur().kind == Tok::Kind::Ident) {
                int l = cur().line, c = cur().col;
                std::string name = parse_name("label name");
                if (!seen.insert(name).second)
                    throw ParseError("duplicate label '" + name + "'", l, c);
                expect_punct(":");
                m.labels.emplace_back(name, parse_pred());
                end_line();
            }
        }
        skip_newlines();
        if (cur().kind != Tok::Kind::End) fail("unexpected trailing input");
        return m;
    }
};

} // namespace detail

inline TransitionSystem parse_system_text(const std::string& src) {
    detail::Parser p;
    p.toks = detail::lex(src);
    return p.parse_system();
}

// Helpers for parsing a predicate or expression in isolation, against a fixed
// variable list. Used by the JSON loader and by artifact round-trips.
inline PredPtr parse_predicate(const std::string& src, const std::vector<std::string>& vars) {
    detail::Parser p;
    p.toks = detail::lex(src);
    for (size_t i = 0; i < vars.size(); ++i) p.var_index[vars[i]] = (int)i;
    p.skip_newlines();
    PredPtr out = p.parse_pred();
    p.skip_newlines();
    if (p.cur().kind != detail::Tok::Kind::End) p.fail("unexpected trailing input");
    return out;
}

inline ExprPtr parse_expression(const std::string& src, const std::vector<std::string>& vars) {
    detail::Parser p;
    p.toks = detail::lex(src);
    for (size_t i = 0; i < vars.size(); ++i) p.var_index[vars[i]] = (int)i;
    p.skip_newlines();
    ExprPtr out = p.parse_expr();
    p.skip_newlines();
    if (p.cur().kind != detail::Tok::Kind::End) p.fail("unexpected trailing input");
    return out;
}

inline TransitionSystem parse_system_json(const std::string& src) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(src);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), 0, 0);
    }
    auto field_error = [](const std::string& where, const ParseError& e) {
        return ParseError("in " + where + ": " + e.what(), 0, 0);
    };
    try {
        TransitionSystem m;
        if (!j.contains("vars") || !j["vars"].is_array() || j["vars"].empty())
            throw ParseError("'vars' must be a non-empty array", 0, 0);
        std::set<std::string> seen;
        for (const auto& v : j["vars"]) {
            std::string name = v.get<std::string>();
            if (detail::reserved_words().count(name))
                throw ParseError("'" + name + "' is a reserved word", 0, 0);
            if (!seen.insert(name).second)
                throw ParseError("duplicate variable '" + name + "'", 0, 0);
            m.vars.push_back(name);
        }
        try {
            m.init = parse_predicate(j.value("init", "true"), m.vars);
        } catch (const ParseError& e) {
            throw field_error("init", e);
        }
        if (!j.contains("transitions") || !j["transitions"].is_array())
            throw ParseError("'transitions' must be an array", 0, 0);
        int idx = 0;
        for (const auto& t : j["transitions"]) {
            GuardedCommand cmd;
            std::string where = "transitions[" + std::to_string(idx) + "]";
            std::string guard = t.at("guard").get<std::string>();
            if (guard == "else") {
                cmd.is_else = true;
                cmd.guard = Predicate::top();
            } else {
                try {
                    cmd.guard = parse_predicate(guard, m.vars);
                } catch (const ParseError& e) {
                    throw field_error(where + ".guard", e);
                }
            }
            for (const auto& u : t.at("update")) {
                try {
                    cmd.update.push_back(parse_expression(u.get<std::string>(), m.vars));
                } catch (const ParseError& e) {
                    throw field_error(where + ".update", e);
                }
            }
            if (cmd.update.size() != m.vars.size())
                throw ParseError(where + ": update arity mismatch", 0, 0);
            if (!m.commands.empty() && m.commands.back().is_else)
                throw ParseError("no commands allowed after 'else'", 0, 0);
            m.commands.push_back(std::move(cmd));
            ++idx;
        }
        if (m.commands.empty() || !m.commands.back().is_else)
            throw ParseError("transitions must end with an 'else' catch-all", 0, 0);
        if (j.contains("labels")) {
            for (const auto& [name, pred] : j["labels"].items()) {
                if (detail::reserved_words().count(name))
                    throw ParseError("'" + name + "' is a reserved word", 0, 0);
                try {
                    m.labels.emplace_back(name, parse_predicate(pred.get<std::string>(), m.vars));
                } catch (const ParseError& e) {
                    throw field_error("labels." + name, e);
                }
            }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid system JSON: ") + e.what(), 0, 0);
    }
}

inline TransitionSystem parse_system(const std::string& src) {
    for (char c : src) {
        if (std::isspace((unsigned char)c)) continue;
        return c == '{' ? parse_system_json(src) : parse_system_text(src);
    }
    throw ParseError("empty input", 1, 1);
}

inline TransitionSystem load_system(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'", 0, 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_system(ss.str());
}

inline std::string print_system(const TransitionSystem& m) {
    std::ostringstream os;
    os << "vars";
    for (const auto& v : m.vars) os << ' ' << v;
    os << "\ninit " << pred_to_string(*m.init, m.vars) << "\ntransitions\n";
    for (const auto& cmd : m.commands) {
        os << "  ";
        if (cmd.is_else) os << "else";
        else os << pred_to_string(*cmd.guard, m.vars);
        os << " -> ";
        for (size_t i = 0; i < cmd.update.size(); ++i) {
            if (i) os << ", ";
            os << expr_to_string(*cmd.update[i], m.vars);
        }
        os << '\n';
    }
    if (!m.labels.empty()) {
        os << "labels\n";
        for (const auto& [name, pred] : m.labels)
            os << "  " << name << ": " << pred_to_string(*pred, m.vars) << '\n';
    }
    return os.str();
}

} // namespace bisim

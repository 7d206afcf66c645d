#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "bisim/parse.hpp"

namespace bisim {

struct LtlFormula;
using LtlPtr = std::shared_ptr<const LtlFormula>;

// Core connectives only; eventually/globally/or are built as sugar. The next
// operator is deliberately absent: it is not preserved by the quotient.
struct LtlFormula {
    enum class Kind { True, Prop, And, Not, Until };
    Kind kind;
    std::string prop;
    LtlPtr a, b;

    static LtlPtr top() { return std::make_shared<LtlFormula>(LtlFormula{Kind::True, "", {}, {}}); }
    static LtlPtr proposition(std::string name) {
        return std::make_shared<LtlFormula>(LtlFormula{Kind::Prop, std::move(name), {}, {}});
    }
    static LtlPtr conj(LtlPtr x, LtlPtr y) {
        return std::make_shared<LtlFormula>(LtlFormula{Kind::And, "", std::move(x), std::move(y)});
    }
    static LtlPtr neg(LtlPtr x) {
        return std::make_shared<LtlFormula>(LtlFormula{Kind::Not, "", std::move(x), {}});
    }
    static LtlPtr until(LtlPtr x, LtlPtr y) {
        return std::make_shared<LtlFormula>(
            LtlFormula{Kind::Until, "", std::move(x), std::move(y)});
    }
    static LtlPtr bot() { return neg(top()); }
    static LtlPtr disj(LtlPtr x, LtlPtr y) { return neg(conj(neg(std::move(x)), neg(std::move(y)))); }
    static LtlPtr eventually(LtlPtr x) { return until(top(), std::move(x)); }
    static LtlPtr globally(LtlPtr x) { return neg(until(top(), neg(std::move(x)))); }
};

inline void collect_props(const LtlPtr& f, std::set<std::string>& out) {
    if (!f) return;
    if (f->kind == LtlFormula::Kind::Prop) out.insert(f->prop);
    collect_props(f->a, out);
    collect_props(f->b, out);
}

inline std::set<std::string> collect_props(const LtlPtr& f) {
    std::set<std::string> out;
    collect_props(f, out);
    return out;
}

inline std::string ltl_to_string(const LtlPtr& f) {
    switch (f->kind) {
    case LtlFormula::Kind::True: return "true";
    case LtlFormula::Kind::Prop: return f->prop;
    case LtlFormula::Kind::Not: return "!" + (f->a->kind == LtlFormula::Kind::True ||
                                                      f->a->kind == LtlFormula::Kind::Prop
                                                  ? ltl_to_string(f->a)
                                                  : "(" + ltl_to_string(f->a) + ")");
    case LtlFormula::Kind::And: return "(" + ltl_to_string(f->a) + " & " + ltl_to_string(f->b) + ")";
    case LtlFormula::Kind::Until:
        return "(" + ltl_to_string(f->a) + " U " + ltl_to_string(f->b) + ")";
    }
    throw std::logic_error("unreachable");
}

namespace detail {

struct LtlParser {
    const std::string& src;
    size_t pos = 0;
    int line = 1, col = 1;

    explicit LtlParser(const std::string& s) : src(s) {}

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, line, col); }

    void skip_ws() {
        while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n' ||
                                    src[pos] == '\r')) {
            if (src[pos] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++pos;
        }
    }

    bool eat(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            ++col;
            return true;
        }
        return false;
    }

    std::string peek_word() {
        skip_ws();
        size_t p = pos;
        std::string w;
        while (p < src.size() && (std::isalnum((unsigned char)src[p]) || src[p] == '_'))
            w += src[p++];
        return w;
    }

    void take_word(const std::string& w) {
        pos += w.size();
        col += (int)w.size();
    }

    LtlPtr parse_or() {
        LtlPtr f = parse_and();
        while (true) {
            skip_ws();
            if (eat('|')) {
                eat('|');
                f = LtlFormula::disj(f, parse_and());
            } else {
                return f;
            }
        }
    }

    LtlPtr parse_and() {
        LtlPtr f = parse_until();
        while (true) {
            skip_ws();
            if (eat('&')) {
                eat('&');
                f = LtlFormula::conj(f, parse_until());
            } else {
                return f;
            }
        }
    }

    LtlPtr parse_until() { // right-associative
        LtlPtr f = parse_unary();
        skip_ws();
        if (peek_word() == "U") {
            take_word("U");
            return LtlFormula::until(f, parse_until());
        }
        return f;
    }

    LtlPtr parse_unary() {
        skip_ws();
        if (pos >= src.size()) fail("expected a formula");
        if (eat('!')) return LtlFormula::neg(parse_unary());
        if (eat('(')) {
            LtlPtr f = parse_or();
            if (!eat(')')) fail("expected ')'");
            return f;
        }
        std::string w = peek_word();
        if (w.empty()) fail(std::string("unexpected character '") + src[pos] + "'");
        if (w == "true") {
            take_word(w);
            return LtlFormula::top();
        }
        if (w == "false") {
            take_word(w);
            return LtlFormula::bot();
        }
        if (w == "F") {
            take_word(w);
            return LtlFormula::eventually(parse_unary());
        }
        if (w == "G") {
            take_word(w);
            return LtlFormula::globally(parse_unary());
        }
        if (w == "X") {
            take_word(w);
            parse_unary();
            fail("the next operator is not preserved by stutter-insensitive bisimulation");
        }
        if (w == "U") fail("'U' is an operator, not a proposition");
        take_word(w);
        return LtlFormula::proposition(w);
    }
};

} // namespace detail

inline LtlPtr parse_ltl(const std::string& src) {
    detail::LtlParser p(src);
    LtlPtr f = p.parse_or();
    p.skip_ws();
    if (p.pos != src.size()) p.fail("trailing input after formula");
    return f;
}

// Satisfaction per position of an ultimately periodic word. word[i] is the
// label set at position i; positions from loop_start repeat forever. Until is
// the least fixpoint of its expansion, reached by monotone backward sweeps.
inline std::vector<bool> evaluate_lasso(const LtlPtr& f,
                                        const std::vector<std::set<std::string>>& word,
                                        size_t loop_start) {
    size_t n = word.size();
    if (n == 0 || loop_start >= n) throw std::invalid_argument("bad lasso shape");
    switch (f->kind) {
    case LtlFormula::Kind::True: return std::vector<bool>(n, true);
    case LtlFormula::Kind::Prop: {
        std::vector<bool> out(n);
        for (size_t i = 0; i < n; ++i) out[i] = word[i].count(f->prop) > 0;
        return out;
    }
    case LtlFormula::Kind::Not: {
        auto va = evaluate_lasso(f->a, word, loop_start);
        for (size_t i = 0; i < n; ++i) va[i] = !va[i];
        return va;
    }
    case LtlFormula::Kind::And: {
        auto va = evaluate_lasso(f->a, word, loop_start);
        auto vb = evaluate_lasso(f->b, word, loop_start);
        for (size_t i = 0; i < n; ++i) va[i] = va[i] && vb[i];
        return va;
    }
    case LtlFormula::Kind::Until: {
        auto va = evaluate_lasso(f->a, word, loop_start);
        auto vb = evaluate_lasso(f->b, word, loop_start);
        std::vector<bool> out(n, false);
        bool changed = true;
        while (changed) {
            changed = false;
            for (size_t k = n; k-- > 0;) {
                bool nxt = out[k + 1 < n ? k + 1 : loop_start];
                bool v = vb[k] || (va[k] && nxt);
                if (v != out[k]) {
                    out[k] = v;
                    changed = true;
                }
            }
        }
        return out;
    }
    }
    throw std::logic_error("unreachable");
}

} // namespace bisim

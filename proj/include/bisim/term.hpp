#pragma once

#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bisim/expr.hpp"

namespace bisim {

enum class Sort { Int, Bool };

using Value = std::variant<Int, bool>;
using Valuation = std::map<std::string, Value>;

// First-order terms over integer and boolean sorts, the common currency
// between the condition encodings, the solver backend, and the evaluator.
// Nodes are immutable and shared; construction goes through the t_* builders
// below, which fold constants so that grounding a formula collapses it.
struct TermNode;

struct Term {
    std::shared_ptr<const TermNode> n;
    explicit operator bool() const { return n != nullptr; }
    const TermNode& operator*() const { return *n; }
    const TermNode* operator->() const { return n.get(); }
};

struct TermNode {
    enum class Op {
        IntConst, BoolConst, Var,
        Add, Sub, Mul, Neg, Mod, Div,
        Cmp, And, Or, Not, Implies, Ite
    };

    Op op;
    Sort sort;
    Int ival = 0;           // IntConst, and divisor for Mod/Div
    bool bval = false;      // BoolConst
    std::string name;       // Var
    Cmp cmp = Cmp::Eq;      // Cmp
    std::vector<Term> kids;
};

namespace detail {

inline Term mk(TermNode node) {
    return Term{std::make_shared<TermNode>(std::move(node))};
}

inline void want(const Term& t, Sort s, const char* ctx) {
    if (!t) throw std::invalid_argument(std::string("null term in ") + ctx);
    if (t->sort != s)
        throw std::invalid_argument(std::string("sort mismatch in ") + ctx);
}

} // namespace detail

inline Term t_int(Int v) {
    TermNode n;
    n.op = TermNode::Op::IntConst;
    n.sort = Sort::Int;
    n.ival = v;
    return detail::mk(std::move(n));
}

inline Term t_bool(bool v) {
    TermNode n;
    n.op = TermNode::Op::BoolConst;
    n.sort = Sort::Bool;
    n.bval = v;
    return detail::mk(std::move(n));
}

inline Term t_var(const std::string& name, Sort sort = Sort::Int) {
    TermNode n;
    n.op = TermNode::Op::Var;
    n.sort = sort;
    n.name = name;
    return detail::mk(std::move(n));
}

inline bool is_int_const(const Term& t) { return t && t->op == TermNode::Op::IntConst; }
inline bool is_bool_const(const Term& t) { return t && t->op == TermNode::Op::BoolConst; }
inline bool is_true(const Term& t) { return is_bool_const(t) && t->bval; }
inline bool is_false(const Term& t) { return is_bool_const(t) && !t->bval; }

namespace detail {

inline Term mk_arith(TermNode::Op op, Term a, Term b) {
    TermNode n;
    n.op = op;
    n.sort = Sort::Int;
    n.kids = {std::move(a), std::move(b)};
    return mk(std::move(n));
}

} // namespace detail

inline Term t_add(Term a, Term b) {
    detail::want(a, Sort::Int, "add");
    detail::want(b, Sort::Int, "add");
    if (is_int_const(a) && is_int_const(b)) return t_int(a->ival + b->ival);
    if (is_int_const(a) && a->ival == 0) return b;
    if (is_int_const(b) && b->ival == 0) return a;
    return detail::mk_arith(TermNode::Op::Add, std::move(a), std::move(b));
}

inline Term t_neg(Term a) {
    detail::want(a, Sort::Int, "neg");
    if (is_int_const(a)) return t_int(-a->ival);
    if (a->op == TermNode::Op::Neg) return a->kids[0];
    TermNode n;
    n.op = TermNode::Op::Neg;
    n.sort = Sort::Int;
    n.kids = {std::move(a)};
    return detail::mk(std::move(n));
}

inline Term t_sub(Term a, Term b) {
    detail::want(a, Sort::Int, "sub");
    detail::want(b, Sort::Int, "sub");
    if (is_int_const(a) && is_int_const(b)) return t_int(a->ival - b->ival);
    if (is_int_const(b) && b->ival == 0) return a;
    if (is_int_const(a) && a->ival == 0) return t_neg(std::move(b));
    return detail::mk_arith(TermNode::Op::Sub, std::move(a), std::move(b));
}

inline Term t_mul(Term a, Term b) {
    detail::want(a, Sort::Int, "mul");
    detail::want(b, Sort::Int, "mul");
    if (is_int_const(a) && is_int_const(b)) return t_int(a->ival * b->ival);
    if (is_int_const(a)) {
        if (a->ival == 0) return t_int(0);
        if (a->ival == 1) return b;
    }
    if (is_int_const(b)) {
        if (b->ival == 0) return t_int(0);
        if (b->ival == 1) return a;
    }
    return detail::mk_arith(TermNode::Op::Mul, std::move(a), std::move(b));
}

inline Term t_mod(Term a, Int k) {
    detail::want(a, Sort::Int, "mod");
    if (k <= 0) throw std::invalid_argument("divisor must be positive");
    if (is_int_const(a)) return t_int(euclid_mod(a->ival, k));
    if (k == 1) return t_int(0);
    TermNode n;
    n.op = TermNode::Op::Mod;
    n.sort = Sort::Int;
    n.ival = k;
    n.kids = {std::move(a)};
    return detail::mk(std::move(n));
}

inline Term t_div(Term a, Int k) {
    detail::want(a, Sort::Int, "div");
    if (k <= 0) throw std::invalid_argument("divisor must be positive");
    if (is_int_const(a)) return t_int(euclid_div(a->ival, k));
    if (k == 1) return a;
    TermNode n;
    n.op = TermNode::Op::Div;
    n.sort = Sort::Int;
    n.ival = k;
    n.kids = {std::move(a)};
    return detail::mk(std::move(n));
}

inline bool eval_cmp(Cmp op, Int a, Int b) {
    switch (op) {
    case Cmp::Eq: return a == b;
    case Cmp::Ne: return a != b;
    case Cmp::Lt: return a < b;
    case Cmp::Le: return a <= b;
    case Cmp::Gt: return a > b;
    case Cmp::Ge: return a >= b;
    }
    throw std::logic_error("unreachable");
}

inline Term t_cmp(Cmp op, Term a, Term b) {
    detail::want(a, Sort::Int, "cmp");
    detail::want(b, Sort::Int, "cmp");
    if (is_int_const(a) && is_int_const(b)) return t_bool(eval_cmp(op, a->ival, b->ival));
    TermNode n;
    n.op = TermNode::Op::Cmp;
    n.sort = Sort::Bool;
    n.cmp = op;
    n.kids = {std::move(a), std::move(b)};
    return detail::mk(std::move(n));
}

inline Term t_eq(Term a, Term b) { return t_cmp(Cmp::Eq, std::move(a), std::move(b)); }
inline Term t_ne(Term a, Term b) { return t_cmp(Cmp::Ne, std::move(a), std::move(b)); }
inline Term t_lt(Term a, Term b) { return t_cmp(Cmp::Lt, std::move(a), std::move(b)); }
inline Term t_le(Term a, Term b) { return t_cmp(Cmp::Le, std::move(a), std::move(b)); }
inline Term t_gt(Term a, Term b) { return t_cmp(Cmp::Gt, std::move(a), std::move(b)); }
inline Term t_ge(Term a, Term b) { return t_cmp(Cmp::Ge, std::move(a), std::move(b)); }

inline Term t_and(std::vector<Term> kids) {
    std::vector<Term> out;
    for (auto& k : kids) {
        detail::want(k, Sort::Bool, "and");
        if (is_true(k)) continue;
        if (is_false(k)) return t_bool(false);
        if (k->op == TermNode::Op::And) {
            for (const auto& g : k->kids) out.push_back(g);
        } else {
            out.push_back(std::move(k));
        }
    }
    if (out.empty()) return t_bool(true);
    if (out.size() == 1) return out[0];
    TermNode n;
    n.op = TermNode::Op::And;
    n.sort = Sort::Bool;
    n.kids = std::move(out);
    return detail::mk(std::move(n));
}

inline Term t_or(std::vector<Term> kids) {
    std::vector<Term> out;
    for (auto& k : kids) {
        detail::want(k, Sort::Bool, "or");
        if (is_false(k)) continue;
        if (is_true(k)) return t_bool(true);
        if (k->op == TermNode::Op::Or) {
            for (const auto& g : k->kids) out.push_back(g);
        } else {
            out.push_back(std::move(k));
        }
    }
    if (out.empty()) return t_bool(false);
    if (out.size() == 1) return out[0];
    TermNode n;
    n.op = TermNode::Op::Or;
    n.sort = Sort::Bool;
    n.kids = std::move(out);
    return detail::mk(std::move(n));
}

inline Term t_and(Term a, Term b) {
    std::vector<Term> kids;
    kids.push_back(std::move(a));
    kids.push_back(std::move(b));
    return t_and(std::move(kids));
}

inline Term t_or(Term a, Term b) {
    std::vector<Term> kids;
    kids.push_back(std::move(a));
    kids.push_back(std::move(b));
    return t_or(std::move(kids));
}

inline Term t_and(Term a, Term b, Term c) {
    return t_and(t_and(std::move(a), std::move(b)), std::move(c));
}

inline Term t_or(Term a, Term b, Term c) {
    return t_or(t_or(std::move(a), std::move(b)), std::move(c));
}

inline Term t_not(Term a) {
    detail::want(a, Sort::Bool, "not");
    if (is_bool_const(a)) return t_bool(!a->bval);
    if (a->op == TermNode::Op::Not) return a->kids[0];
    TermNode n;
    n.op = TermNode::Op::Not;
    n.sort = Sort::Bool;
    n.kids = {std::move(a)};
    return detail::mk(std::move(n));
}

inline Term t_implies(Term a, Term b) {
    detail::want(a, Sort::Bool, "implies");
    detail::want(b, Sort::Bool, "implies");
    if (is_true(a)) return b;
    if (is_false(a)) return t_bool(true);
    if (is_true(b)) return t_bool(true);
    if (is_false(b)) return t_not(std::move(a));
    TermNode n;
    n.op = TermNode::Op::Implies;
    n.sort = Sort::Bool;
    n.kids = {std::move(a), std::move(b)};
    return detail::mk(std::move(n));
}

inline Term t_ite(Term c, Term a, Term b) {
    detail::want(c, Sort::Bool, "ite");
    if (!a || !b || a->sort != b->sort)
        throw std::invalid_argument("sort mismatch in ite");
    if (is_true(c)) return a;
    if (is_false(c)) return b;
    TermNode n;
    n.op = TermNode::Op::Ite;
    n.sort = a->sort;
    n.kids = {std::move(c), std::move(a), std::move(b)};
    return detail::mk(std::move(n));
}

inline Value evaluate_term(const Term& t, const Valuation& env) {
    const TermNode& n = *t;
    auto iv = [&](const Term& k) { return std::get<Int>(evaluate_term(k, env)); };
    auto bv = [&](const Term& k) { return std::get<bool>(evaluate_term(k, env)); };
    switch (n.op) {
    case TermNode::Op::IntConst: return n.ival;
    case TermNode::Op::BoolConst: return n.bval;
    case TermNode::Op::Var: {
        auto it = env.find(n.name);
        if (it == env.end())
            throw std::out_of_range("unbound variable '" + n.name + "'");
        if ((n.sort == Sort::Int) != std::holds_alternative<Int>(it->second))
            throw std::invalid_argument("sort mismatch for '" + n.name + "'");
        return it->second;
    }
    case TermNode::Op::Add: return iv(n.kids[0]) + iv(n.kids[1]);
    case TermNode::Op::Sub: return iv(n.kids[0]) - iv(n.kids[1]);
    case TermNode::Op::Mul: return iv(n.kids[0]) * iv(n.kids[1]);
    case TermNode::Op::Neg: return -iv(n.kids[0]);
    case TermNode::Op::Mod: return euclid_mod(iv(n.kids[0]), n.ival);
    case TermNode::Op::Div: return euclid_div(iv(n.kids[0]), n.ival);
    case TermNode::Op::Cmp: return eval_cmp(n.cmp, iv(n.kids[0]), iv(n.kids[1]));
    case TermNode::Op::And:
        for (const auto& k : n.kids)
            if (!bv(k)) return false;
        return true;
    case TermNode::Op::Or:
        for (const auto& k : n.kids)
            if (bv(k)) return true;
        return false;
    case TermNode::Op::Not: return !bv(n.kids[0]);
    case TermNode::Op::Implies: return !bv(n.kids[0]) || bv(n.kids[1]);
    case TermNode::Op::Ite:
        return bv(n.kids[0]) ? evaluate_term(n.kids[1], env) : evaluate_term(n.kids[2], env);
    }
    throw std::logic_error("unreachable");
}

// Substitution by terms; constant folding in the builders does the
// simplification, so grounding the state variables of a condition collapses
// every decided branch.
inline Term substitute_terms(const Term& t, const std::map<std::string, Term>& sub) {
    const TermNode& n = *t;
    if (n.op == TermNode::Op::Var) {
        auto it = sub.find(n.name);
        if (it == sub.end()) return t;
        if (it->second->sort != n.sort)
            throw std::invalid_argument("sort mismatch substituting '" + n.name + "'");
        return it->second;
    }
    if (n.kids.empty()) return t;
    std::vector<Term> kids;
    kids.reserve(n.kids.size());
    bool changed = false;
    for (const auto& k : n.kids) {
        kids.push_back(substitute_terms(k, sub));
        changed = changed || kids.back().n != k.n;
    }
    if (!changed) return t;
    switch (n.op) {
    case TermNode::Op::Add: return t_add(kids[0], kids[1]);
    case TermNode::Op::Sub: return t_sub(kids[0], kids[1]);
    case TermNode::Op::Mul: return t_mul(kids[0], kids[1]);
    case TermNode::Op::Neg: return t_neg(kids[0]);
    case TermNode::Op::Mod: return t_mod(kids[0], n.ival);
    case TermNode::Op::Div: return t_div(kids[0], n.ival);
    case TermNode::Op::Cmp: return t_cmp(n.cmp, kids[0], kids[1]);
    case TermNode::Op::And: return t_and(std::move(kids));
    case TermNode::Op::Or: return t_or(std::move(kids));
    case TermNode::Op::Not: return t_not(kids[0]);
    case TermNode::Op::Implies: return t_implies(kids[0], kids[1]);
    case TermNode::Op::Ite: return t_ite(kids[0], kids[1], kids[2]);
    default: throw std::logic_error("unreachable");
    }
}

inline Term substitute(const Term& t, const Valuation& env) {
    std::map<std::string, Term> sub;
    for (const auto& [name, v] : env) {
        if (std::holds_alternative<Int>(v)) sub[name] = t_int(std::get<Int>(v));
        else sub[name] = t_bool(std::get<bool>(v));
    }
    return substitute_terms(t, sub);
}

inline void collect_free_vars(const Term& t, std::map<std::string, Sort>& out) {
    if (t->op == TermNode::Op::Var) {
        auto [it, fresh] = out.emplace(t->name, t->sort);
        if (!fresh && it->second != t->sort)
            throw std::invalid_argument("variable '" + t->name + "' used at two sorts");
        return;
    }
    for (const auto& k : t->kids) collect_free_vars(k, out);
}

inline std::map<std::string, Sort> free_vars(const Term& t) {
    std::map<std::string, Sort> out;
    collect_free_vars(t, out);
    return out;
}

namespace detail {

inline bool contains_var(const Term& t) {
    if (t->op == TermNode::Op::Var) return true;
    for (const auto& k : t->kids)
        if (contains_var(k)) return true;
    return false;
}

} // namespace detail

// True when some product has variables on both sides, which is what pushes a
// query from linear into nonlinear arithmetic. Mod and Div keep constant
// divisors by construction and stay linear.
inline bool is_nonlinear(const Term& t) {
    if (t->op == TermNode::Op::Mul && detail::contains_var(t->kids[0]) &&
        detail::contains_var(t->kids[1]))
        return true;
    for (const auto& k : t->kids)
        if (is_nonlinear(k)) return true;
    return false;
}

namespace detail {

inline void smtlib_rec(std::ostream& os, const Term& t) {
    const TermNode& n = *t;
    auto nary = [&](const char* head) {
        os << '(' << head;
        for (const auto& k : n.kids) {
            os << ' ';
            smtlib_rec(os, k);
        }
        os << ')';
    };
    switch (n.op) {
    case TermNode::Op::IntConst:
        if (n.ival < 0) os << "(- " << -(unsigned long long)n.ival << ')';
        else os << n.ival;
        break;
    case TermNode::Op::BoolConst: os << (n.bval ? "true" : "false"); break;
    case TermNode::Op::Var: os << n.name; break;
    case TermNode::Op::Add: nary("+"); break;
    case TermNode::Op::Sub: nary("-"); break;
    case TermNode::Op::Mul: nary("*"); break;
    case TermNode::Op::Neg: nary("-"); break;
    case TermNode::Op::Mod:
        os << "(mod ";
        smtlib_rec(os, n.kids[0]);
        os << ' ' << n.ival << ')';
        break;
    case TermNode::Op::Div:
        os << "(div ";
        smtlib_rec(os, n.kids[0]);
        os << ' ' << n.ival << ')';
        break;
    case TermNode::Op::Cmp: {
        const char* head = nullptr;
        switch (n.cmp) {
        case Cmp::Eq: head = "="; break;
        case Cmp::Ne: head = "distinct"; break;
        case Cmp::Lt: head = "<"; break;
        case Cmp::Le: head = "<="; break;
        case Cmp::Gt: head = ">"; break;
        case Cmp::Ge: head = ">="; break;
        }
        nary(head);
        break;
    }
    case TermNode::Op::And: nary("and"); break;
    case TermNode::Op::Or: nary("or"); break;
    case TermNode::Op::Not: nary("not"); break;
    case TermNode::Op::Implies: nary("=>"); break;
    case TermNode::Op::Ite: nary("ite"); break;
    }
}

} // namespace detail

inline std::string to_smtlib(const Term& t) {
    std::ostringstream os;
    detail::smtlib_rec(os, t);
    return os.str();
}

// Bridges from the guarded-command syntax to terms, mapping variable i of the
// system to syms[i].
inline Term expr_to_term(const IntExpr& e, const std::vector<Term>& syms) {
    switch (e.kind) {
    case IntExpr::Kind::Const: return t_int(e.value);
    case IntExpr::Kind::Var: return syms.at(e.var);
    case IntExpr::Kind::Add: return t_add(expr_to_term(*e.a, syms), expr_to_term(*e.b, syms));
    case IntExpr::Kind::Sub: return t_sub(expr_to_term(*e.a, syms), expr_to_term(*e.b, syms));
    case IntExpr::Kind::Mul: return t_mul(expr_to_term(*e.a, syms), expr_to_term(*e.b, syms));
    case IntExpr::Kind::Neg: return t_neg(expr_to_term(*e.a, syms));
    case IntExpr::Kind::Mod: return t_mod(expr_to_term(*e.a, syms), e.divisor);
    case IntExpr::Kind::Div: return t_div(expr_to_term(*e.a, syms), e.divisor);
    }
    throw std::logic_error("unreachable");
}

inline Term pred_to_term(const Predicate& p, const std::vector<Term>& syms) {
    switch (p.kind) {
    case Predicate::Kind::True: return t_bool(true);
    case Predicate::Kind::False: return t_bool(false);
    case Predicate::Kind::Atom: return t_cmp(p.op, expr_to_term(*p.expr, syms), t_int(0));
    case Predicate::Kind::Not: return t_not(pred_to_term(*p.a, syms));
    case Predicate::Kind::And: return t_and(pred_to_term(*p.a, syms), pred_to_term(*p.b, syms));
    case Predicate::Kind::Or: return t_or(pred_to_term(*p.a, syms), pred_to_term(*p.b, syms));
    }
    throw std::logic_error("unreachable");
}

inline std::vector<Term> state_symbols(int dim, const std::string& prefix) {
    std::vector<Term> out;
    out.reserve(dim);
    for (int i = 0; i < dim; ++i) out.push_back(t_var(prefix + std::to_string(i)));
    return out;
}

} // namespace bisim

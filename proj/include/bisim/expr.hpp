#pragma once

#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bisim {

using Int = long long;
using StateVector = std::vector<Int>;

// Division and remainder follow the SMT-LIB convention: the remainder is
// always in [0, k) for a positive divisor k, regardless of the sign of the
// dividend. C++ truncates toward zero, so both need an adjustment.
inline Int euclid_div(Int a, Int k) {
    Int q = a / k;
    if (a % k < 0) q -= 1;
    return q;
}

inline Int euclid_mod(Int a, Int k) {
    Int r = a % k;
    return r < 0 ? r + k : r;
}

struct IntExpr;
using ExprPtr = std::shared_ptr<const IntExpr>;

// Arithmetic over the state variables of a system. Variables are referenced
// by their index in the system's variable list. Mod and Div take a constant
// positive divisor, stored in `divisor`.
struct IntExpr {
    enum class Kind { Const, Var, Add, Sub, Mul, Neg, Mod, Div };

    Kind kind;
    Int value = 0;   // Const
    int var = -1;    // Var
    Int divisor = 0; // Mod, Div
    ExprPtr a, b;

    static ExprPtr constant(Int v) {
        auto e = std::make_shared<IntExpr>();
        e->kind = Kind::Const;
        e->value = v;
        return e;
    }
    static ExprPtr variable(int idx) {
        auto e = std::make_shared<IntExpr>();
        e->kind = Kind::Var;
        e->var = idx;
        return e;
    }
    static ExprPtr add(ExprPtr x, ExprPtr y) { return binary(Kind::Add, std::move(x), std::move(y)); }
    static ExprPtr sub(ExprPtr x, ExprPtr y) { return binary(Kind::Sub, std::move(x), std::move(y)); }
    static ExprPtr mul(ExprPtr x, ExprPtr y) { return binary(Kind::Mul, std::move(x), std::move(y)); }
    static ExprPtr neg(ExprPtr x) {
        auto e = std::make_shared<IntExpr>();
        e->kind = Kind::Neg;
        e->a = std::move(x);
        return e;
    }
    static ExprPtr mod(ExprPtr x, Int k) { return divlike(Kind::Mod, std::move(x), k); }
    static ExprPtr div(ExprPtr x, Int k) { return divlike(Kind::Div, std::move(x), k); }

private:
    static ExprPtr binary(Kind k, ExprPtr x, ExprPtr y) {
        auto e = std::make_shared<IntExpr>();
        e->kind = k;
        e->a = std::move(x);
        e->b = std::move(y);
        return e;
    }
    static ExprPtr divlike(Kind k, ExprPtr x, Int d) {
        if (d <= 0) throw std::invalid_argument("divisor must be positive");
        auto e = std::make_shared<IntExpr>();
        e->kind = k;
        e->divisor = d;
        e->a = std::move(x);
        return e;
    }
};

inline Int evaluate_expr(const IntExpr& e, const StateVector& s) {
    switch (e.kind) {
    case IntExpr::Kind::Const: return e.value;
    case IntExpr::Kind::Var:
        if (e.var < 0 || e.var >= (int)s.size())
            throw std::out_of_range("variable index out of range");
        return s[e.var];
    case IntExpr::Kind::Add: return evaluate_expr(*e.a, s) + evaluate_expr(*e.b, s);
    case IntExpr::Kind::Sub: return evaluate_expr(*e.a, s) - evaluate_expr(*e.b, s);
    case IntExpr::Kind::Mul: return evaluate_expr(*e.a, s) * evaluate_expr(*e.b, s);
    case IntExpr::Kind::Neg: return -evaluate_expr(*e.a, s);
    case IntExpr::Kind::Mod: return euclid_mod(evaluate_expr(*e.a, s), e.divisor);
    case IntExpr::Kind::Div: return euclid_div(evaluate_expr(*e.a, s), e.divisor);
    }
    throw std::logic_error("unreachable");
}

// Comparison operators shared by predicates and the template machinery.
enum class Cmp { Eq, Ne, Lt, Le, Gt, Ge };

inline const char* cmp_text(Cmp op) {
    switch (op) {
    case Cmp::Eq: return "=";
    case Cmp::Ne: return "!=";
    case Cmp::Lt: return "<";
    case Cmp::Le: return "<=";
    case Cmp::Gt: return ">";
    case Cmp::Ge: return ">=";
    }
    return "?";
}

struct Predicate;
using PredPtr = std::shared_ptr<const Predicate>;

// Boolean combinations of comparisons between integer expressions. Atoms are
// normalized to `expr op 0`.
struct Predicate {
    enum class Kind { True, False, Atom, Not, And, Or };

    Kind kind;
    Cmp op = Cmp::Eq; // Atom
    ExprPtr expr;     // Atom
    PredPtr a, b;

    static PredPtr top() { return leaf(Kind::True); }
    static PredPtr bot() { return leaf(Kind::False); }
    static PredPtr atom(ExprPtr e, Cmp op) {
        auto p = std::make_shared<Predicate>();
        p->kind = Kind::Atom;
        p->op = op;
        p->expr = std::move(e);
        return p;
    }
    static PredPtr neg(PredPtr x) {
        auto p = std::make_shared<Predicate>();
        p->kind = Kind::Not;
        p->a = std::move(x);
        return p;
    }
    static PredPtr conj(PredPtr x, PredPtr y) { return binary(Kind::And, std::move(x), std::move(y)); }
    static PredPtr disj(PredPtr x, PredPtr y) { return binary(Kind::Or, std::move(x), std::move(y)); }

private:
    static PredPtr leaf(Kind k) {
        auto p = std::make_shared<Predicate>();
        p->kind = k;
        return p;
    }
    static PredPtr binary(Kind k, PredPtr x, PredPtr y) {
        auto p = std::make_shared<Predicate>();
        p->kind = k;
        p->a = std::move(x);
        p->b = std::move(y);
        return p;
    }
};

inline bool evaluate_pred(const Predicate& p, const StateVector& s) {
    switch (p.kind) {
    case Predicate::Kind::True: return true;
    case Predicate::Kind::False: return false;
    case Predicate::Kind::Not: return !evaluate_pred(*p.a, s);
    case Predicate::Kind::And: return evaluate_pred(*p.a, s) && evaluate_pred(*p.b, s);
    case Predicate::Kind::Or: return evaluate_pred(*p.a, s) || evaluate_pred(*p.b, s);
    case Predicate::Kind::Atom: {
        Int v = evaluate_expr(*p.expr, s);
        switch (p.op) {
        case Cmp::Eq: return v == 0;
        case Cmp::Ne: return v != 0;
        case Cmp::Lt: return v < 0;
        case Cmp::Le: return v <= 0;
        case Cmp::Gt: return v > 0;
        case Cmp::Ge: return v >= 0;
        }
    }
    }
    throw std::logic_error("unreachable");
}

namespace detail {

inline int expr_prec(IntExpr::Kind k) {
    switch (k) {
    case IntExpr::Kind::Add:
    case IntExpr::Kind::Sub: return 1;
    case IntExpr::Kind::Mul:
    case IntExpr::Kind::Mod:
    case IntExpr::Kind::Div: return 2;
    case IntExpr::Kind::Neg: return 3;
    default: return 4;
    }
}

inline void print_expr_rec(std::ostream& os, const IntExpr& e,
                           const std::vector<std::string>& vars, int parent) {
    int prec = expr_prec(e.kind);
    bool paren = prec < parent;
    if (paren) os << '(';
    switch (e.kind) {
    case IntExpr::Kind::Const: os << e.value; break;
    case IntExpr::Kind::Var: os << vars.at(e.var); break;
    case IntExpr::Kind::Add:
        print_expr_rec(os, *e.a, vars, prec);
        os << " + ";
        print_expr_rec(os, *e.b, vars, prec + 1);
        break;
    case IntExpr::Kind::Sub:
        print_expr_rec(os, *e.a, vars, prec);
        os << " - ";
        print_expr_rec(os, *e.b, vars, prec + 1);
        break;
    case IntExpr::Kind::Mul:
        print_expr_rec(os, *e.a, vars, prec);
        os << " * ";
        print_expr_rec(os, *e.b, vars, prec + 1);
        break;
    case IntExpr::Kind::Mod:
        print_expr_rec(os, *e.a, vars, prec);
        os << " % " << e.divisor;
        break;
    case IntExpr::Kind::Div:
        print_expr_rec(os, *e.a, vars, prec);
        os << " / " << e.divisor;
        break;
    case IntExpr::Kind::Neg:
        os << '-';
        print_expr_rec(os, *e.a, vars, prec + 1);
        break;
    }
    if (paren) os << ')';
}

inline int pred_prec(Predicate::Kind k) {
    switch (k) {
    case Predicate::Kind::Or: return 1;
    case Predicate::Kind::And: return 2;
    case Predicate::Kind::Not: return 3;
    default: return 4;
    }
}

inline void print_pred_rec(std::ostream& os, const Predicate& p,
                           const std::vector<std::string>& vars, int parent) {
    int prec = pred_prec(p.kind);
    bool paren = prec < parent;
    if (paren) os << '(';
    switch (p.kind) {
    case Predicate::Kind::True: os << "true"; break;
    case Predicate::Kind::False: os << "false"; break;
    case Predicate::Kind::Atom:
        print_expr_rec(os, *p.expr, vars, 0);
        os << ' ' << cmp_text(p.op) << " 0";
        break;
    case Predicate::Kind::Not:
        os << '!';
        if (p.a->kind == Predicate::Kind::Atom) {
            os << '(';
            print_pred_rec(os, *p.a, vars, 0);
            os << ')';
        } else {
            print_pred_rec(os, *p.a, vars, prec);
        }
        break;
    case Predicate::Kind::And:
        print_pred_rec(os, *p.a, vars, prec);
        os << " && ";
        print_pred_rec(os, *p.b, vars, prec);
        break;
    case Predicate::Kind::Or:
        print_pred_rec(os, *p.a, vars, prec);
        os << " || ";
        print_pred_rec(os, *p.b, vars, prec);
        break;
    }
    if (paren) os << ')';
}

} // namespace detail

inline void print_expr(std::ostream& os, const IntExpr& e, const std::vector<std::string>& vars) {
    detail::print_expr_rec(os, e, vars, 0);
}

inline std::string expr_to_string(const IntExpr& e, const std::vector<std::string>& vars) {
    std::ostringstream os;
    print_expr(os, e, vars);
    return os.str();
}

inline void print_pred(std::ostream& os, const Predicate& p, const std::vector<std::string>& vars) {
    detail::print_pred_rec(os, p, vars, 0);
}

inline std::string pred_to_string(const Predicate& p, const std::vector<std::string>& vars) {
    std::ostringstream os;
    print_pred(os, p, vars);
    return os.str();
}

} // namespace bisim

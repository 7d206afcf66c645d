#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>

#include "bisim/system.hpp"
#include "bisim/term.hpp"

namespace bisim {

using ClassId = int;

// A candidate classifier instantiation: decision coefficients for the
// parametric subtrees, one successor class per class, and one affine rank
// function per class.
struct ParameterAssignment {
    std::map<std::string, Int> theta;
    std::vector<ClassId> gamma;
    std::vector<std::pair<std::vector<Int>, Int>> eta; // weights, offset
};

// Binary decision tree template over state vectors. The fixed upper layer is
// built from the label predicates so that every leaf (exit) has all labels
// decided; each exit carries a parametric subtree whose decisions are affine
// tests with unknown coefficients. Exits that agree on their label set feed
// the same observation cell and share its class list, so a class may gather
// states from several exits.
struct BdtTemplate {
    struct FixedNode {
        PredPtr test;
        int yes, no; // >= 0: fixed node index; < 0: exit index ~child
    };
    struct ParamNode {
        std::vector<std::string> w; // empty for leaves
        std::string b;
        int yes = -1, no = -1; // indices into Exit::nodes
        ClassId leaf = -1;
        bool is_leaf() const { return w.empty(); }
    };
    struct Exit {
        int cell = -1;
        std::vector<std::pair<PredPtr, bool>> fixed_path; // test, polarity from root
        std::vector<ParamNode> nodes;                     // nodes[0] is the subtree root
    };
    struct Cell {
        std::vector<std::string> labels; // in declaration order
        std::vector<ClassId> classes;    // left-to-right leaf order
        std::vector<int> exits;
    };

    int dim = 0;
    std::vector<std::string> var_names;
    std::vector<FixedNode> fixed;
    int root = 0; // fixed node index, or ~exit when the tree is a single exit
    std::vector<Exit> exits;
    std::vector<Cell> cells;
    int num_classes = 0;
    std::vector<int> class_cell;
    int next_theta = 0;

    std::vector<std::string> theta_names() const {
        std::vector<std::string> out;
        for (const auto& e : exits)
            for (const auto& n : e.nodes) {
                for (const auto& w : n.w) out.push_back(w);
                if (!n.b.empty()) out.push_back(n.b);
            }
        return out;
    }
};

namespace detail {

// Interval with open ends, saturating arithmetic.
struct Ival {
    bool lo_inf = true, hi_inf = true;
    Int lo = 0, hi = 0;

    static Ival point(Int v) { return {false, false, v, v}; }
    static Ival range(Int a, Int b) { return {false, false, a, b}; }
    static Ival all() { return {}; }
};

inline Int sat_add(Int a, Int b) {
    Int r;
    if (__builtin_add_overflow(a, b, &r)) return a > 0 ? INT64_MAX / 4 : INT64_MIN / 4;
    return r;
}

inline Int sat_mul(Int a, Int b) {
    Int r;
    if (__builtin_mul_overflow(a, b, &r))
        return ((a > 0) == (b > 0)) ? INT64_MAX / 4 : INT64_MIN / 4;
    return r;
}

inline Ival ival_add(const Ival& a, const Ival& b) {
    Ival r;
    r.lo_inf = a.lo_inf || b.lo_inf;
    r.hi_inf = a.hi_inf || b.hi_inf;
    if (!r.lo_inf) r.lo = sat_add(a.lo, b.lo);
    if (!r.hi_inf) r.hi = sat_add(a.hi, b.hi);
    return r;
}

inline Ival ival_scale(const Ival& a, Int c) {
    if (c == 0) return Ival::point(0);
    Ival r;
    if (c > 0) {
        r.lo_inf = a.lo_inf;
        r.hi_inf = a.hi_inf;
        if (!r.lo_inf) r.lo = sat_mul(a.lo, c);
        if (!r.hi_inf) r.hi = sat_mul(a.hi, c);
    } else {
        r.lo_inf = a.hi_inf;
        r.hi_inf = a.lo_inf;
        if (!r.lo_inf) r.lo = sat_mul(a.hi, c);
        if (!r.hi_inf) r.hi = sat_mul(a.lo, c);
    }
    return r;
}

inline Ival ival_mul(const Ival& a, const Ival& b) {
    // Bounds as candidate products of the four corners; any infinite factor
    // with a possibly nonzero partner makes the result unbounded.
    if (!a.lo_inf && !a.hi_inf && !b.lo_inf && !b.hi_inf) {
        Int c1 = sat_mul(a.lo, b.lo), c2 = sat_mul(a.lo, b.hi);
        Int c3 = sat_mul(a.hi, b.lo), c4 = sat_mul(a.hi, b.hi);
        Ival r;
        r.lo_inf = r.hi_inf = false;
        r.lo = std::min(std::min(c1, c2), std::min(c3, c4));
        r.hi = std::max(std::max(c1, c2), std::max(c3, c4));
        return r;
    }
    if (!a.lo_inf && !a.hi_inf && a.lo == 0 && a.hi == 0) return Ival::point(0);
    if (!b.lo_inf && !b.hi_inf && b.lo == 0 && b.hi == 0) return Ival::point(0);
    return Ival::all();
}

// Monomials are sorted multisets of base keys; a base is a variable or an
// opaque mod/div composite registered in the builder.
using Mono = std::vector<std::string>;
using Poly = std::map<Mono, Int>;

struct BaseInfo {
    Ival bounds;
    ExprPtr repr;
};

inline void poly_acc(Poly& p, const Mono& m, Int c) {
    auto it = p.find(m);
    if (it == p.end()) {
        if (c != 0) p[m] = c;
        return;
    }
    it->second += c;
    if (it->second == 0) p.erase(it);
}

inline Poly poly_add(const Poly& a, const Poly& b, Int bscale = 1) {
    Poly r = a;
    for (const auto& [m, c] : b) poly_acc(r, m, c * bscale);
    return r;
}

inline Poly poly_scale(const Poly& a, Int c) {
    Poly r;
    if (c == 0) return r;
    for (const auto& [m, k] : a) r[m] = k * c;
    return r;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r;
    for (const auto& [ma, ca] : a)
        for (const auto& [mb, cb] : b) {
            Mono m = ma;
            m.insert(m.end(), mb.begin(), mb.end());
            std::sort(m.begin(), m.end());
            poly_acc(r, m, ca * cb);
        }
    return r;
}

inline std::string poly_key(const Poly& p) {
    std::string out;
    for (const auto& [m, c] : p) {
        out += std::to_string(c);
        for (const auto& b : m) {
            out += '*';
            out += b;
        }
        out += '|';
    }
    return out;
}

struct PolyCtx {
    const std::vector<std::string>* vars = nullptr;
    std::map<std::string, BaseInfo> bases;

    std::string base_var(int idx) {
        std::string key = "v" + std::to_string(idx);
        if (!bases.count(key)) bases[key] = {Ival::all(), IntExpr::variable(idx)};
        return key;
    }

    std::string base_opaque(const std::string& key, Ival bounds, ExprPtr repr) {
        if (!bases.count(key)) bases[key] = {bounds, std::move(repr)};
        return key;
    }

    Ival mono_bounds(const Mono& m) const {
        Ival r = Ival::point(1);
        for (const auto& b : m) r = ival_mul(r, bases.at(b).bounds);
        return r;
    }

    Ival poly_bounds(const Poly& p) const {
        Ival r = Ival::point(0);
        for (const auto& [m, c] : p) r = ival_add(r, ival_scale(mono_bounds(m), c));
        return r;
    }

    ExprPtr mono_expr(const Mono& m) const {
        ExprPtr e;
        for (const auto& b : m) {
            ExprPtr f = bases.at(b).repr;
            e = e ? IntExpr::mul(e, f) : f;
        }
        return e ? e : IntExpr::constant(1);
    }

    ExprPtr poly_expr(const Poly& p) const {
        if (p.empty()) return IntExpr::constant(0);
        ExprPtr acc;
        for (const auto& [m, c] : p) {
            Int a = c < 0 ? -c : c;
            ExprPtr piece = m.empty() ? IntExpr::constant(a)
                            : a == 1  ? mono_expr(m)
                                      : IntExpr::mul(IntExpr::constant(a), mono_expr(m));
            if (!acc) acc = c < 0 ? IntExpr::neg(piece) : piece;
            else acc = c < 0 ? IntExpr::sub(acc, piece) : IntExpr::add(acc, piece);
        }
        return acc;
    }

    Poly normalize(const IntExpr& e) {
        switch (e.kind) {
        case IntExpr::Kind::Const: {
            Poly p;
            if (e.value) p[{}] = e.value;
            return p;
        }
        case IntExpr::Kind::Var: {
            Poly p;
            p[{base_var(e.var)}] = 1;
            return p;
        }
        case IntExpr::Kind::Add: return poly_add(normalize(*e.a), normalize(*e.b));
        case IntExpr::Kind::Sub: return poly_add(normalize(*e.a), normalize(*e.b), -1);
        case IntExpr::Kind::Neg: return poly_scale(normalize(*e.a), -1);
        case IntExpr::Kind::Mul: return poly_mul(normalize(*e.a), normalize(*e.b));
        case IntExpr::Kind::Mod: {
            Poly inner = normalize(*e.a);
            // coefficients can be reduced: (c + jk) x == c x  (mod k)
            Poly reduced;
            for (const auto& [m, c] : inner) {
                Int cr = euclid_mod(c, e.divisor);
                if (cr) reduced[m] = cr;
            }
            if (reduced.empty()) return {};
            if (reduced.size() == 1 && reduced.begin()->first.empty()) {
                Poly p;
                Int v = euclid_mod(reduced.begin()->second, e.divisor);
                if (v) p[{}] = v;
                return p;
            }
            std::string key = "m" + std::to_string(e.divisor) + ":" + poly_key(reduced);
            ExprPtr repr = IntExpr::mod(poly_expr(reduced), e.divisor);
            Poly p;
            p[{base_opaque(key, Ival::range(0, e.divisor - 1), repr)}] = 1;
            return p;
        }
        case IntExpr::Kind::Div: {
            Poly inner = normalize(*e.a);
            if (inner.empty()) return {};
            if (inner.size() == 1 && inner.begin()->first.empty()) {
                Poly p;
                Int v = euclid_div(inner.begin()->second, e.divisor);
                if (v) p[{}] = v;
                return p;
            }
            Ival ib = poly_bounds(inner);
            Ival db = Ival::all();
            if (!ib.lo_inf && !ib.hi_inf)
                db = Ival::range(euclid_div(ib.lo, e.divisor), euclid_div(ib.hi, e.divisor));
            else if (!ib.lo_inf)
                db = {false, true, euclid_div(ib.lo, e.divisor), 0};
            else if (!ib.hi_inf)
                db = {true, false, 0, euclid_div(ib.hi, e.divisor)};
            std::string key = "d" + std::to_string(e.divisor) + ":" + poly_key(inner);
            ExprPtr repr = IntExpr::div(poly_expr(inner), e.divisor);
            Poly p;
            p[{base_opaque(key, db, repr)}] = 1;
            return p;
        }
        }
        throw std::logic_error("unreachable");
    }
};

// A comparison in canonical form: a gcd- and sign-normalized linear part
// tested against an integer bound. Tests over the same form share interval
// refinements along a path, which is what decides redundant tests.
struct CanonTest {
    bool decided = false;
    bool truth = false; // when decided
    std::string key;
    Poly form;
    bool ge = true; // form >= bound, else form <= bound
    Int bound = 0;
};

// Canonicalizes the test  p >= 0.
inline CanonTest canonicalize(PolyCtx& ctx, Poly p) {
    CanonTest t;
    Int c = 0;
    auto it = p.find({});
    if (it != p.end()) {
        c = it->second;
        p.erase(it);
    }
    if (p.empty()) {
        t.decided = true;
        t.truth = c >= 0;
        return t;
    }
    Int g = 0;
    for (const auto& [m, k] : p) g = std::gcd(g, k < 0 ? -k : k);
    Int lead = p.begin()->second;
    Int s = lead > 0 ? g : -g;
    for (auto& [m, k] : p) k /= s;
    t.form = std::move(p);
    t.key = poly_key(t.form);
    auto floordiv = [](Int a, Int b) { return euclid_div(a, b); }; // b > 0
    if (s > 0) {
        t.ge = true;
        t.bound = -floordiv(c, g); // form >= ceil(-c/g)
    } else {
        t.ge = false;
        t.bound = floordiv(c, g); // form <= floor(c/g)
    }
    (void)ctx;
    return t;
}

enum class Tri { F = 0, U = 1, T = 2 };
inline Tri tri_not(Tri a) { return Tri(2 - int(a)); }
inline Tri tri_and(Tri a, Tri b) { return std::min(a, b); }
inline Tri tri_or(Tri a, Tri b) { return std::max(a, b); }

using PathCtx = std::map<std::string, Ival>;

inline Ival current_bounds(const PolyCtx& pc, const PathCtx& ctx, const CanonTest& t) {
    auto it = ctx.find(t.key);
    if (it != ctx.end()) return it->second;
    return pc.poly_bounds(t.form);
}

inline Tri decide(const PolyCtx& pc, const PathCtx& ctx, const CanonTest& t) {
    if (t.decided) return t.truth ? Tri::T : Tri::F;
    Ival b = current_bounds(pc, ctx, t);
    if (t.ge) {
        if (!b.lo_inf && b.lo >= t.bound) return Tri::T;
        if (!b.hi_inf && b.hi < t.bound) return Tri::F;
    } else {
        if (!b.hi_inf && b.hi <= t.bound) return Tri::T;
        if (!b.lo_inf && b.lo > t.bound) return Tri::F;
    }
    return Tri::U;
}

inline PathCtx assume(const PolyCtx& pc, const PathCtx& ctx, const CanonTest& t, bool branch) {
    PathCtx out = ctx;
    Ival b = current_bounds(pc, ctx, t);
    if (t.ge == branch) { // form >= bound  or  !(form <= bound) == form >= bound+1
        Int lo = branch ? t.bound : t.bound + 1;
        if (b.lo_inf || b.lo < lo) {
            b.lo_inf = false;
            b.lo = lo;
        }
    } else { // form <= bound  or  !(form >= bound) == form <= bound-1
        Int hi = branch ? t.bound : t.bound - 1;
        if (b.hi_inf || b.hi > hi) {
            b.hi_inf = false;
            b.hi = hi;
        }
    }
    out[t.key] = b;
    return out;
}

// Base tests of an atom, in evaluation order. Equality and disequality
// decompose into the two one-sided tests over the shared form.
inline std::vector<CanonTest> atom_tests(PolyCtx& pc, const Predicate& atom) {
    Poly p = pc.normalize(*atom.expr);
    auto minus1 = [](Poly q) {
        poly_acc(q, {}, -1);
        return q;
    };
    switch (atom.op) {
    case Cmp::Ge: return {canonicalize(pc, p)};
    case Cmp::Gt: return {canonicalize(pc, minus1(p))};
    case Cmp::Le: return {canonicalize(pc, poly_scale(p, -1))};
    case Cmp::Lt: return {canonicalize(pc, minus1(poly_scale(p, -1)))};
    case Cmp::Eq:
    case Cmp::Ne: return {canonicalize(pc, p), canonicalize(pc, poly_scale(p, -1))};
    }
    throw std::logic_error("unreachable");
}

inline Tri eval_atom(PolyCtx& pc, const PathCtx& ctx, const Predicate& atom) {
    auto tests = atom_tests(pc, atom);
    Tri v;
    if (tests.size() == 1) v = decide(pc, ctx, tests[0]);
    else v = tri_and(decide(pc, ctx, tests[0]), decide(pc, ctx, tests[1]));
    if (atom.op == Cmp::Ne) v = tri_not(v);
    return v;
}

inline Tri eval_pred3(PolyCtx& pc, const PathCtx& ctx, const Predicate& p) {
    switch (p.kind) {
    case Predicate::Kind::True: return Tri::T;
    case Predicate::Kind::False: return Tri::F;
    case Predicate::Kind::Atom: return eval_atom(pc, ctx, p);
    case Predicate::Kind::Not: return tri_not(eval_pred3(pc, ctx, *p.a));
    case Predicate::Kind::And: return tri_and(eval_pred3(pc, ctx, *p.a), eval_pred3(pc, ctx, *p.b));
    case Predicate::Kind::Or: return tri_or(eval_pred3(pc, ctx, *p.a), eval_pred3(pc, ctx, *p.b));
    }
    throw std::logic_error("unreachable");
}

// First undecided base test, scanning in evaluation order.
inline std::optional<CanonTest> find_test(PolyCtx& pc, const PathCtx& ctx, const Predicate& p) {
    switch (p.kind) {
    case Predicate::Kind::True:
    case Predicate::Kind::False: return std::nullopt;
    case Predicate::Kind::Atom:
        for (auto& t : atom_tests(pc, p))
            if (decide(pc, ctx, t) == Tri::U) return t;
        return std::nullopt;
    case Predicate::Kind::Not: return find_test(pc, ctx, *p.a);
    case Predicate::Kind::And:
    case Predicate::Kind::Or: {
        if (eval_pred3(pc, ctx, *p.a) == Tri::U) return find_test(pc, ctx, *p.a);
        return find_test(pc, ctx, *p.b);
    }
    }
    throw std::logic_error("unreachable");
}

inline PredPtr test_display(const PolyCtx& pc, const CanonTest& t) {
    Poly shifted = t.form;
    poly_acc(shifted, {}, -t.bound);
    return Predicate::atom(pc.poly_expr(shifted), t.ge ? Cmp::Ge : Cmp::Le);
}

struct TemplateBuilder {
    const TransitionSystem& m;
    int extra_depth;
    BdtTemplate t;
    PolyCtx pc;
    std::map<std::vector<std::string>, int> cell_by_labels;

    TemplateBuilder(const TransitionSystem& m_, int depth) : m(m_), extra_depth(depth) {
        t.dim = m.dim();
        t.var_names = m.vars;
    }

    int subtree(BdtTemplate::Exit& e, int depth, int slot_base, const std::vector<ClassId>& classes) {
        int idx = (int)e.nodes.size();
        e.nodes.emplace_back();
        if (depth == 0) {
            e.nodes[idx].leaf = classes[slot_base];
            return idx;
        }
        auto& n = e.nodes[idx];
        int k = t.next_theta++;
        for (int i = 0; i < t.dim; ++i)
            n.w.push_back("th" + std::to_string(k) + "_w" + std::to_string(i));
        n.b = "th" + std::to_string(k) + "_b";
        int yes = subtree(e, depth - 1, slot_base, classes);
        int no = subtree(e, depth - 1, slot_base + (1 << (depth - 1)), classes);
        e.nodes[idx].yes = yes;
        e.nodes[idx].no = no;
        return idx;
    }

    int make_exit(const std::vector<std::string>& labels,
                  std::vector<std::pair<PredPtr, bool>> path) {
        int cell;
        auto it = cell_by_labels.find(labels);
        if (it != cell_by_labels.end()) {
            cell = it->second;
        } else {
            cell = (int)t.cells.size();
            cell_by_labels[labels] = cell;
            BdtTemplate::Cell c;
            c.labels = labels;
            for (int i = 0; i < (1 << extra_depth); ++i) {
                c.classes.push_back(t.num_classes++);
                t.class_cell.push_back(cell);
            }
            t.cells.push_back(std::move(c));
        }
        int ei = (int)t.exits.size();
        t.exits.emplace_back();
        t.exits[ei].cell = cell;
        t.exits[ei].fixed_path = std::move(path);
        subtree(t.exits[ei], extra_depth, 0, t.cells[cell].classes);
        t.cells[cell].exits.push_back(ei);
        return ei;
    }

    int build(const PathCtx& ctx, std::vector<std::pair<PredPtr, bool>> path) {
        for (const auto& [name, pred] : m.labels) {
            if (eval_pred3(pc, ctx, *pred) != Tri::U) continue;
            auto test = find_test(pc, ctx, *pred);
            if (!test) throw std::logic_error("undecided label without an undecidable test");
            PredPtr np = test_display(pc, *test);
            int idx = (int)t.fixed.size();
            t.fixed.push_back({np, 0, 0});
            auto yes_path = path;
            yes_path.emplace_back(np, true);
            int yes = build(assume(pc, ctx, *test, true), std::move(yes_path));
            auto no_path = std::move(path);
            no_path.emplace_back(np, false);
            int no = build(assume(pc, ctx, *test, false), std::move(no_path));
            t.fixed[idx].yes = yes;
            t.fixed[idx].no = no;
            return idx;
        }
        std::vector<std::string> labels;
        for (const auto& [name, pred] : m.labels)
            if (eval_pred3(pc, ctx, *pred) == Tri::T) labels.push_back(name);
        return ~make_exit(labels, std::move(path));
    }

    BdtTemplate run() {
        t.root = build({}, {});
        return std::move(t);
    }
};

} // namespace detail

// Builds the fixed layer from the label predicates: along every path all
// labels are decided, redundant comparisons are pruned via interval
// reasoning over canonical forms, and each exit gets a fresh parametric
// subtree of the requested depth.
inline BdtTemplate build_label_preserving_template(const TransitionSystem& m, int extra_depth = 0) {
    if (extra_depth < 0 || extra_depth > 20) throw std::invalid_argument("bad extra_depth");
    detail::TemplateBuilder b(m, extra_depth);
    return b.run();
}

inline ClassId classify(const BdtTemplate& t, const ParameterAssignment& p, const StateVector& s) {
    int node = t.root;
    while (node >= 0) {
        const auto& f = t.fixed[node];
        node = evaluate_pred(*f.test, s) ? f.yes : f.no;
    }
    const auto& e = t.exits.at(~node);
    int pn = 0;
    while (!e.nodes[pn].is_leaf()) {
        const auto& n = e.nodes[pn];
        Int v = -p.theta.at(n.b);
        for (int i = 0; i < t.dim; ++i) v += p.theta.at(n.w[i]) * s[i];
        pn = v >= 0 ? n.yes : n.no;
    }
    return e.nodes[pn].leaf;
}

inline Int rank(const ParameterAssignment& p, ClassId c, const StateVector& s) {
    const auto& [w, b] = p.eta.at(c);
    Int v = b;
    for (size_t i = 0; i < s.size(); ++i) v += w[i] * s[i];
    return v;
}

// Membership condition for class c over the given state symbols, with the
// decision coefficients left free. Grounding the symbols (learner) or the
// coefficients (verifier) collapses the respectively decided branches.
inline Term path_condition(const BdtTemplate& t, ClassId c, const std::vector<Term>& syms) {
    std::vector<Term> alts;
    int cell = t.class_cell.at(c);
    for (int ei : t.cells[cell].exits) {
        const auto& e = t.exits[ei];
        std::vector<Term> lits;
        for (const auto& [pred, pol] : e.fixed_path) {
            Term pt = pred_to_term(*pred, syms);
            lits.push_back(pol ? pt : t_not(pt));
        }
        // locate the leaf for c and collect the decisions along the way
        std::function<bool(int, std::vector<Term>&)> walk = [&](int ni,
                                                                std::vector<Term>& acc) -> bool {
            const auto& n = e.nodes[ni];
            if (n.is_leaf()) return n.leaf == c;
            Term dec = t_var(n.b);
            Term v = t_neg(dec);
            for (int i = 0; i < t.dim; ++i) v = t_add(v, t_mul(t_var(n.w[i]), syms[i]));
            Term test = t_ge(v, t_int(0));
            acc.push_back(test);
            if (walk(n.yes, acc)) return true;
            acc.back() = t_not(test);
            if (walk(n.no, acc)) return true;
            acc.pop_back();
            return false;
        };
        std::vector<Term> acc;
        if (!walk(0, acc)) continue;
        for (auto& a : acc) lits.push_back(std::move(a));
        alts.push_back(t_and(std::move(lits)));
    }
    if (alts.empty()) throw std::logic_error("class not reachable from its cell");
    return t_or(std::move(alts));
}

namespace detail {

inline void enlarge_one_cell(BdtTemplate& t, int cell) {
    auto& c = t.cells[cell];
    std::vector<ClassId> fresh;
    for (size_t i = 0; i < c.classes.size(); ++i) {
        fresh.push_back(t.num_classes++);
        t.class_cell.push_back(cell);
    }
    std::map<ClassId, ClassId> twin;
    std::vector<ClassId> interleaved;
    for (size_t i = 0; i < c.classes.size(); ++i) {
        twin[c.classes[i]] = fresh[i];
        interleaved.push_back(c.classes[i]);
        interleaved.push_back(fresh[i]);
    }
    for (int ei : c.exits) {
        auto& e = t.exits[ei];
        int old_count = (int)e.nodes.size();
        for (int ni = 0; ni < old_count; ++ni) {
            if (!e.nodes[ni].is_leaf()) continue;
            ClassId oldc = e.nodes[ni].leaf;
            int k = t.next_theta++;
            BdtTemplate::ParamNode inner;
            for (int i = 0; i < t.dim; ++i)
                inner.w.push_back("th" + std::to_string(k) + "_w" + std::to_string(i));
            inner.b = "th" + std::to_string(k) + "_b";
            BdtTemplate::ParamNode l1, l2;
            l1.leaf = oldc;
            l2.leaf = twin.at(oldc);
            inner.yes = (int)e.nodes.size();
            e.nodes.push_back(l1);
            inner.no = (int)e.nodes.size();
            e.nodes.push_back(l2);
            e.nodes[ni] = std::move(inner);
        }
    }
    c.classes = std::move(interleaved);
}

} // namespace detail

// Doubles the classes of one cell: every leaf becomes a fresh decision over
// the old class and a new twin. Existing class ids are stable.
inline BdtTemplate enlarge_cell(const BdtTemplate& t, int cell) {
    BdtTemplate out = t;
    detail::enlarge_one_cell(out, cell);
    return out;
}

inline BdtTemplate enlarge(const BdtTemplate& t) {
    BdtTemplate out = t;
    for (int cell = 0; cell < (int)out.cells.size(); ++cell) detail::enlarge_one_cell(out, cell);
    return out;
}

namespace detail {

inline std::string join_labels(const std::vector<std::string>& labels) {
    std::string out = "{";
    for (size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ", ";
        out += labels[i];
    }
    return out + "}";
}

inline void dump_subtree(std::ostream& os, const BdtTemplate& t, const BdtTemplate::Exit& e,
                         int ni, int indent, const ParameterAssignment* p) {
    std::string pad(indent, ' ');
    const auto& n = e.nodes[ni];
    if (n.is_leaf()) {
        os << pad << "class " << n.leaf << "\n";
        return;
    }
    os << pad << "if ";
    for (int i = 0; i < t.dim; ++i) {
        if (i) os << " + ";
        if (p) os << p->theta.at(n.w[i]);
        else os << n.w[i];
        os << "*" << t.var_names[i];
    }
    os << " >= " << (p ? std::to_string(p->theta.at(n.b)) : n.b) << ":\n";
    dump_subtree(os, t, e, n.yes, indent + 2, p);
    os << pad << "else:\n";
    dump_subtree(os, t, e, n.no, indent + 2, p);
}

inline void dump_fixed(std::ostream& os, const BdtTemplate& t, int node, int indent,
                       const ParameterAssignment* p) {
    std::string pad(indent, ' ');
    if (node < 0) {
        const auto& e = t.exits[~node];
        os << pad << "exit " << ~node << " -> cell " << e.cell << " "
           << join_labels(t.cells[e.cell].labels) << "\n";
        dump_subtree(os, t, e, 0, indent + 2, p);
        return;
    }
    const auto& f = t.fixed[node];
    os << pad << "if " << pred_to_string(*f.test, t.var_names) << ":\n";
    dump_fixed(os, t, f.yes, indent + 2, p);
    os << pad << "else:\n";
    dump_fixed(os, t, f.no, indent + 2, p);
}

} // namespace detail

inline std::string dump_template(const BdtTemplate& t, const ParameterAssignment* p = nullptr) {
    std::ostringstream os;
    os << "classifier: " << t.dim << " vars, " << t.cells.size() << " cells, " << t.exits.size()
       << " exits, " << t.num_classes << " classes\n";
    for (size_t i = 0; i < t.cells.size(); ++i) {
        os << "cell " << i << " " << detail::join_labels(t.cells[i].labels) << ": classes [";
        for (size_t k = 0; k < t.cells[i].classes.size(); ++k) {
            if (k) os << ' ';
            os << t.cells[i].classes[k];
        }
        os << "]\n";
    }
    detail::dump_fixed(os, t, t.root, 0, p);
    if (p) {
        for (ClassId c = 0; c < t.num_classes; ++c) {
            os << "rank " << c << ": ";
            const auto& [w, b] = p->eta.at(c);
            for (int i = 0; i < t.dim; ++i) os << w[i] << "*" << t.var_names[i] << " + ";
            os << b << "\n";
        }
        os << "successor:";
        for (ClassId c = 0; c < t.num_classes; ++c) os << " " << c << "->" << p->gamma.at(c);
        os << "\n";
    }
    return os.str();
}

} // namespace bisim

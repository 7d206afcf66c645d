#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bisim/cegis.hpp"
#include "bisim/ltl.hpp"

namespace bisim {

// Finite quotient induced by a learned partition. Deterministic by
// construction: every class has exactly one successor, and a self-loop means
// the class's states stutter forever.
struct AbstractSystem {
    std::vector<ClassId> classes; // ascending, only nonempty classes
    std::map<ClassId, ClassId> successor;
    std::map<ClassId, std::vector<std::string>> labels;
    std::set<ClassId> initial;
    std::vector<std::string> ap; // every proposition of the concrete system

    bool has(ClassId c) const { return successor.count(c) > 0; }
};

// Keeps exactly the classes whose concretization is nonempty; emptiness and
// initiality are certified by the solver, so Unknown aborts the build.
inline AbstractSystem build_quotient(const TransitionSystem& m, const BdtTemplate& t,
                                     const ParameterAssignment& p, SmtSolver& solver) {
    AbstractSystem a;
    for (const auto& [name, pred] : m.labels) a.ap.push_back(name);
    auto ss = state_symbols(t.dim, "s");
    Valuation env = param_valuation(t, p);
    for (ClassId c = 0; c < t.num_classes; ++c) {
        Term member = substitute(path_condition(t, c, ss), env);
        auto r = solver.check_sat(member);
        if (r.kind == SolverResult::Kind::Unknown)
            throw SolverError("class emptiness undecided: " + r.reason);
        if (r.kind == SolverResult::Kind::Unsat) continue;
        a.classes.push_back(c);
        a.labels[c] = t.cells[t.class_cell[c]].labels;
        auto ri = solver.check_sat(t_and(pred_to_term(*m.init, ss), member));
        if (ri.kind == SolverResult::Kind::Unknown)
            throw SolverError("class initiality undecided: " + ri.reason);
        if (ri.kind == SolverResult::Kind::Sat) a.initial.insert(c);
    }
    for (ClassId c : a.classes) {
        ClassId d = p.gamma.at((size_t)c);
        if (!std::binary_search(a.classes.begin(), a.classes.end(), d))
            throw std::logic_error("nonempty class maps to an empty successor");
        a.successor[c] = d;
    }
    return a;
}

inline AbstractSystem build_quotient(const TransitionSystem& m, const LearnResult& res,
                                     SmtSolver& solver) {
    if (res.status != LearnStatus::Learned)
        throw std::invalid_argument("no learned partition to quotient");
    return build_quotient(m, res.templ, res.params, solver);
}

struct LassoTrace {
    std::vector<ClassId> prefix;
    std::vector<ClassId> loop; // nonempty
};

inline LassoTrace lasso_from(const AbstractSystem& a, ClassId start) {
    std::vector<ClassId> seq;
    std::map<ClassId, size_t> seen;
    ClassId c = start;
    while (!seen.count(c)) {
        seen[c] = seq.size();
        seq.push_back(c);
        c = a.successor.at(c);
    }
    size_t cut = seen[c];
    return {std::vector<ClassId>(seq.begin(), seq.begin() + (long)cut),
            std::vector<ClassId>(seq.begin() + (long)cut, seq.end())};
}

struct CheckResult {
    bool holds = true;
    LassoTrace witness; // a violating lasso when !holds
};

// Every initial class yields one ultimately periodic word; the formula must
// hold on all of them. Ascending class order makes the witness deterministic.
inline CheckResult check_ltl(const AbstractSystem& a, const LtlPtr& f) {
    for (const auto& prop : collect_props(f))
        if (std::find(a.ap.begin(), a.ap.end(), prop) == a.ap.end())
            throw std::invalid_argument("unknown proposition: " + prop);
    for (ClassId c : a.classes) {
        if (!a.initial.count(c)) continue;
        LassoTrace lasso = lasso_from(a, c);
        std::vector<std::set<std::string>> word;
        for (ClassId q : lasso.prefix)
            word.emplace_back(a.labels.at(q).begin(), a.labels.at(q).end());
        for (ClassId q : lasso.loop)
            word.emplace_back(a.labels.at(q).begin(), a.labels.at(q).end());
        auto sat = evaluate_lasso(f, word, lasso.prefix.size());
        if (!sat[0]) return {false, lasso};
    }
    return {true, {}};
}

inline std::string join_labels(const std::vector<std::string>& ls, const char* sep) {
    std::string out;
    for (const auto& l : ls) {
        if (!out.empty()) out += sep;
        out += l;
    }
    return out;
}

inline std::string export_dot(const AbstractSystem& a) {
    std::ostringstream os;
    os << "digraph quotient {\n  rankdir=LR;\n  node [shape=circle];\n";
    for (ClassId c : a.classes) {
        os << "  c" << c << " [label=\"" << c;
        const auto& ls = a.labels.at(c);
        if (!ls.empty()) os << "\\n{" << join_labels(ls, ", ") << "}";
        os << "\"];\n";
    }
    for (ClassId c : a.classes) {
        if (!a.initial.count(c)) continue;
        os << "  i" << c << " [shape=point, width=0.08];\n";
        os << "  i" << c << " -> c" << c << ";\n";
    }
    for (ClassId c : a.classes) os << "  c" << c << " -> c" << a.successor.at(c) << ";\n";
    os << "}\n";
    return os.str();
}

// One line per class: id, successor id, comma-joined labels ('-' if none),
// initial flag. Lines are ordered by class id.
inline std::string export_explicit(const AbstractSystem& a) {
    std::ostringstream os;
    os << "# class successor labels initial\n";
    for (ClassId c : a.classes) {
        const auto& ls = a.labels.at(c);
        os << c << " " << a.successor.at(c) << " " << (ls.empty() ? "-" : join_labels(ls, ","))
           << " " << (a.initial.count(c) ? 1 : 0) << "\n";
    }
    return os.str();
}

} // namespace bisim

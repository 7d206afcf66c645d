#pragma once

#include <iostream>
#include <memory>
#include <set>

#include "bisim/bdt.hpp"
#include "bisim/solver.hpp"

namespace bisim {

struct Sample {
    StateVector state;
    StateVector succ;
};

// Ordered, duplicate-free by state.
struct Dataset {
    std::vector<Sample> samples;

    bool add(const TransitionSystem& m, const StateVector& s) {
        if (!seen_.insert(s).second) return false;
        samples.push_back({s, step(m, s)});
        return true;
    }
    bool contains(const StateVector& s) const { return seen_.count(s) > 0; }
    size_t size() const { return samples.size(); }

  private:
    std::set<StateVector> seen_;
};

struct CegisConfig {
    int radius = 10;  // initial sample grid
    int stride = 5;
    int max_iters = 60; // learner/verifier rounds per template
    int max_enlargements = 8;
    Int param_bound = 65536;
    Int bound_widen_factor = 4;
    int extra_depth = 0;
    bool constant_ranks = false; // forbid state-dependent ranks (strong bisimulation)
    bool verbose = false;
    SolverConfig solver;
};

inline std::string gamma_name(ClassId c) { return "g" + std::to_string(c); }
inline std::string rank_w_name(ClassId c, int i) {
    return "h" + std::to_string(c) + "_w" + std::to_string(i);
}
inline std::string rank_b_name(ClassId c) { return "h" + std::to_string(c) + "_b"; }

inline Dataset initial_samples(const TransitionSystem& m, const CegisConfig& cfg) {
    if (cfg.radius < 0 || cfg.stride < 1) throw std::invalid_argument("bad sample grid");
    std::vector<Int> coords;
    for (Int v = -cfg.radius; v <= cfg.radius; v += cfg.stride) coords.push_back(v);
    int dim = m.dim();
    Dataset d;
    std::vector<size_t> idx(dim, 0);
    while (true) {
        StateVector s(dim);
        for (int i = 0; i < dim; ++i) s[i] = coords[idx[i]];
        d.add(m, s);
        int j = 0;
        while (j < dim && ++idx[j] == coords.size()) idx[j++] = 0;
        if (j == dim) break;
    }
    return d;
}

inline Term rank_term(const BdtTemplate& t, ClassId c, const std::vector<Term>& syms) {
    Term v = t_var(rank_b_name(c));
    for (int i = 0; i < t.dim; ++i) v = t_add(v, t_mul(t_var(rank_w_name(c, i)), syms[i]));
    return v;
}

// Transitions that leave class c must go to its designated successor class;
// staying inside c costs one unit of the class rank, which is bounded below.
inline Term encode_phi1(const BdtTemplate& t, const std::vector<Term>& state_syms,
                        const std::vector<Term>& succ_syms) {
    std::vector<Term> conj;
    for (ClassId c = 0; c < t.num_classes; ++c) {
        Term in_c = path_condition(t, c, state_syms);
        Term stays = path_condition(t, c, succ_syms);
        Term rs = rank_term(t, c, state_syms);
        Term rt = rank_term(t, c, succ_syms);
        Term descent = t_and(stays, t_gt(rs, rt), t_ge(rs, t_int(0)));
        for (ClassId d = 0; d < t.num_classes; ++d) {
            if (d == c) continue;
            Term prem = t_and(in_c, t_eq(t_var(gamma_name(c)), t_int(d)));
            Term concl = t_or(path_condition(t, d, succ_syms), descent);
            conj.push_back(t_implies(prem, concl));
        }
    }
    return t_and(std::move(conj));
}

// A step observed to leave c for d pins the successor map at c.
inline Term encode_phi2(const BdtTemplate& t, const std::vector<Term>& state_syms,
                        const std::vector<Term>& succ_syms) {
    std::vector<Term> conj;
    for (ClassId c = 0; c < t.num_classes; ++c) {
        Term in_c = path_condition(t, c, state_syms);
        for (ClassId d = 0; d < t.num_classes; ++d) {
            if (d == c) continue;
            Term prem = t_and(in_c, path_condition(t, d, succ_syms));
            conj.push_back(t_implies(prem, t_eq(t_var(gamma_name(c)), t_int(d))));
        }
    }
    return t_and(std::move(conj));
}

inline Term encode_condition(const BdtTemplate& t, const std::vector<Term>& state_syms,
                             const std::vector<Term>& succ_syms) {
    return t_and(encode_phi1(t, state_syms, succ_syms), encode_phi2(t, state_syms, succ_syms));
}

// Per-dimension successor of the symbolic state as a guard ite-chain.
inline std::vector<Term> successor_terms(const TransitionSystem& m, const std::vector<Term>& syms) {
    int dim = m.dim();
    std::vector<Term> out(dim);
    for (int i = 0; i < dim; ++i) {
        Term acc;
        for (auto it = m.commands.rbegin(); it != m.commands.rend(); ++it) {
            Term upd = expr_to_term(*it->update[i], syms);
            if (it->is_else || !acc) acc = upd;
            else acc = t_ite(pred_to_term(*it->guard, syms), upd, acc);
        }
        out[i] = acc;
    }
    return out;
}

inline Valuation sample_valuation(const Sample& smp) {
    Valuation env;
    for (size_t i = 0; i < smp.state.size(); ++i) {
        env["s" + std::to_string(i)] = smp.state[i];
        env["t" + std::to_string(i)] = smp.succ[i];
    }
    return env;
}

inline Valuation param_valuation(const BdtTemplate& t, const ParameterAssignment& p) {
    Valuation env;
    for (const auto& [name, v] : p.theta) env[name] = v;
    for (ClassId c = 0; c < t.num_classes; ++c) {
        env[gamma_name(c)] = (Int)p.gamma.at(c);
        const auto& [w, b] = p.eta.at(c);
        env[rank_b_name(c)] = b;
        for (int i = 0; i < t.dim; ++i) env[rank_w_name(c, i)] = w.at(i);
    }
    return env;
}

enum class LearnOutcome { Candidate, Infeasible, Unknown };
struct LearnAnswer {
    LearnOutcome kind = LearnOutcome::Unknown;
    ParameterAssignment params;
    std::string reason;
};

enum class VerifyOutcome { Valid, Counterexample, Unknown };
struct VerifyAnswer {
    VerifyOutcome kind = VerifyOutcome::Unknown;
    StateVector cex;
    std::string reason;
};

namespace detail {

inline void append_domain(const BdtTemplate& t, Int bound, bool constant_ranks,
                          std::vector<Term>& parts) {
    auto box = [&](const std::string& name) {
        Term v = t_var(name);
        parts.push_back(t_ge(v, t_int(-bound)));
        parts.push_back(t_le(v, t_int(bound)));
    };
    for (const auto& name : t.theta_names()) box(name);
    for (ClassId c = 0; c < t.num_classes; ++c) {
        Term g = t_var(gamma_name(c));
        parts.push_back(t_ge(g, t_int(0)));
        parts.push_back(t_lt(g, t_int(t.num_classes)));
        box(rank_b_name(c));
        for (int i = 0; i < t.dim; ++i) {
            if (constant_ranks) parts.push_back(t_eq(t_var(rank_w_name(c, i)), t_int(0)));
            else box(rank_w_name(c, i));
        }
    }
}

inline ParameterAssignment extract_params(const BdtTemplate& t, const Valuation& model) {
    ParameterAssignment p;
    for (const auto& name : t.theta_names()) p.theta[name] = std::get<Int>(model.at(name));
    p.gamma.resize(t.num_classes);
    p.eta.resize(t.num_classes);
    for (ClassId c = 0; c < t.num_classes; ++c) {
        p.gamma[c] = (ClassId)std::get<Int>(model.at(gamma_name(c)));
        std::vector<Int> w(t.dim);
        for (int i = 0; i < t.dim; ++i) w[i] = std::get<Int>(model.at(rank_w_name(c, i)));
        p.eta[c] = {std::move(w), std::get<Int>(model.at(rank_b_name(c)))};
    }
    return p;
}

} // namespace detail

inline LearnAnswer learn(const BdtTemplate& t, const Dataset& d, const CegisConfig& cfg,
                         Int param_bound, SmtSolver& solver, bool exit_aligned = false) {
    if (d.samples.empty()) throw std::invalid_argument("learn needs a nonempty dataset");
    auto ss = state_symbols(t.dim, "s");
    auto ts = state_symbols(t.dim, "t");
    Term cond = encode_condition(t, ss, ts);
    std::vector<Term> parts;
    for (const auto& smp : d.samples) parts.push_back(substitute(cond, sample_valuation(smp)));
    detail::append_domain(t, param_bound, cfg.constant_ranks, parts);
    if (exit_aligned)
        for (const auto& e : t.exits)
            for (const auto& n : e.nodes)
                for (const auto& w : n.w) parts.push_back(t_eq(t_var(w), t_int(0)));
    auto r = solver.check_sat(t_and(std::move(parts)));
    LearnAnswer out;
    switch (r.kind) {
    case SolverResult::Kind::Sat:
        out.kind = LearnOutcome::Candidate;
        out.params = detail::extract_params(t, r.model);
        break;
    case SolverResult::Kind::Unsat: out.kind = LearnOutcome::Infeasible; break;
    case SolverResult::Kind::Unknown:
        out.kind = LearnOutcome::Unknown;
        out.reason = r.reason;
        break;
    }
    return out;
}

inline LearnAnswer learn(const BdtTemplate& t, const Dataset& d, const CegisConfig& cfg) {
    SmtSolver solver(cfg.solver);
    return learn(t, d, cfg, cfg.param_bound, solver);
}

namespace detail {

// Learner state kept across CEGIS rounds: one solver session per classifier
// phase. Sample conjuncts are asserted once and stay with the process, so a
// round pays for its new counterexample instead of re-solving the whole
// dataset; the parameter box lives in a push/pop scope because it changes per
// rung. Sample conjuncts are linear in the parameters (states are concrete
// and no parameter multiplies a parameter), hence the session's QF_LIA
// default. Reset whenever the template or the seed changes.
struct LearnerSession {
    bool exit_aligned = false;
    std::unique_ptr<IncrementalSolver> inc;
    size_t asserted = 0;
    Term cond;
    std::map<std::string, Sort> param_sorts;
    int done_queries = 0;
    double done_seconds = 0;

    void reset() {
        if (inc) {
            done_queries += inc->queries();
            done_seconds += inc->solver_seconds();
        }
        inc.reset();
        asserted = 0;
        cond = Term{};
        param_sorts.clear();
    }

    int queries() const { return done_queries + (inc ? inc->queries() : 0); }
    double seconds() const { return done_seconds + (inc ? inc->solver_seconds() : 0); }

    LearnAnswer query(const BdtTemplate& t, const Dataset& d, const CegisConfig& cfg,
                      Int param_bound, unsigned seed) {
        if (!inc || inc->poisoned()) build(t, cfg, seed);
        while (asserted < d.samples.size()) {
            inc->assert_term(substitute(cond, sample_valuation(d.samples[asserted])));
            ++asserted;
        }
        inc->push();
        std::vector<Term> box;
        append_domain(t, param_bound, cfg.constant_ranks, box);
        inc->assert_term(t_and(std::move(box)));
        auto r = inc->check(param_sorts);
        LearnAnswer out;
        switch (r.kind) {
        case SolverResult::Kind::Sat:
            out.kind = LearnOutcome::Candidate;
            out.params = extract_params(t, r.model);
            inc->pop();
            break;
        case SolverResult::Kind::Unsat:
            out.kind = LearnOutcome::Infeasible;
            inc->pop();
            break;
        case SolverResult::Kind::Unknown:
            out.kind = LearnOutcome::Unknown;
            out.reason = r.reason;
            reset();
            break;
        }
        return out;
    }

  private:
    void build(const BdtTemplate& t, const CegisConfig& cfg, unsigned seed) {
        reset();
        SolverConfig sc = cfg.solver;
        sc.seed = seed;
        inc = std::make_unique<IncrementalSolver>(sc);
        for (const auto& name : t.theta_names()) param_sorts[name] = Sort::Int;
        for (ClassId c = 0; c < t.num_classes; ++c) {
            param_sorts[gamma_name(c)] = Sort::Int;
            param_sorts[rank_b_name(c)] = Sort::Int;
            for (int i = 0; i < t.dim; ++i) param_sorts[rank_w_name(c, i)] = Sort::Int;
        }
        inc->declare(param_sorts);
        if (exit_aligned) {
            std::vector<Term> eqs;
            for (const auto& e : t.exits)
                for (const auto& n : e.nodes)
                    for (const auto& w : n.w) eqs.push_back(t_eq(t_var(w), t_int(0)));
            inc->assert_term(t_and(std::move(eqs)));
        }
        auto ss = state_symbols(t.dim, "s");
        auto ts = state_symbols(t.dim, "t");
        cond = encode_condition(t, ss, ts);
    }
};

} // namespace detail

// Iterative deepening on the parameter bound, and exit-aligned classifiers
// before free split planes. Small coefficients first: otherwise the solver is
// free to return ranks tied to absolute coordinates, which fit any finite
// dataset and make the verifier chase counterexamples to ever larger states.
// Exit-aligned first: the fixed layer's atoms usually separate the behaviors
// already, and freezing the split planes prunes most of the junk space.
// `floor_rung` memoizes infeasible rungs; the dataset only grows, so an
// infeasible query stays infeasible and is never worth repeating.
inline LearnAnswer learn_rung_ladder(const BdtTemplate& t, const Dataset& d,
                                     const CegisConfig& cfg, Int cap, SmtSolver& solver,
                                     bool exit_aligned, Int& floor_rung) {
    LearnAnswer dead;
    dead.kind = LearnOutcome::Infeasible;
    if (floor_rung > cap) return dead;
    Int b = std::min(std::max<Int>(floor_rung, 8), cap);
    while (true) {
        auto a = learn(t, d, cfg, b, solver, exit_aligned);
        if (a.kind != LearnOutcome::Infeasible) return a;
        if (b >= cap) {
            floor_rung = cap + 1;
            return a;
        }
        floor_rung = b * 2;
        b = std::min(b * 2, cap);
    }
}

// Session-backed variant used by the main loop.
inline LearnAnswer learn_rung_ladder(const BdtTemplate& t, const Dataset& d,
                                     const CegisConfig& cfg, Int cap,
                                     detail::LearnerSession& ses, unsigned seed, Int& floor_rung) {
    LearnAnswer dead;
    dead.kind = LearnOutcome::Infeasible;
    if (floor_rung > cap) return dead;
    Int b = std::min(std::max<Int>(floor_rung, 8), cap);
    while (true) {
        auto a = ses.query(t, d, cfg, b, seed);
        if (a.kind != LearnOutcome::Infeasible) return a;
        if (b >= cap) {
            floor_rung = cap + 1;
            return a;
        }
        floor_rung = b * 2;
        b = std::min(b * 2, cap);
    }
}

inline VerifyAnswer verify(const TransitionSystem& m, const BdtTemplate& t,
                           const ParameterAssignment& p, SmtSolver& solver) {
    auto ss = state_symbols(t.dim, "s");
    auto ts = state_symbols(t.dim, "t");
    Term grounded = substitute(encode_condition(t, ss, ts), param_valuation(t, p));
    std::vector<Term> parts;
    auto succ = successor_terms(m, ss);
    for (int i = 0; i < t.dim; ++i) parts.push_back(t_eq(ts[i], succ[i]));
    parts.push_back(t_not(grounded));
    auto r = solver.check_sat(t_and(std::move(parts)));
    VerifyAnswer out;
    switch (r.kind) {
    case SolverResult::Kind::Sat: {
        out.kind = VerifyOutcome::Counterexample;
        out.cex.resize(t.dim);
        for (int i = 0; i < t.dim; ++i)
            out.cex[i] = std::get<Int>(r.model.at("s" + std::to_string(i)));
        break;
    }
    case SolverResult::Kind::Unsat: out.kind = VerifyOutcome::Valid; break;
    case SolverResult::Kind::Unknown:
        out.kind = VerifyOutcome::Unknown;
        out.reason = r.reason;
        break;
    }
    return out;
}

inline VerifyAnswer verify(const TransitionSystem& m, const BdtTemplate& t,
                           const ParameterAssignment& p, const CegisConfig& cfg) {
    SmtSolver solver(cfg.solver);
    return verify(m, t, p, solver);
}

enum class LearnStatus { Learned, Inconclusive };

struct LearnResult {
    LearnStatus status = LearnStatus::Inconclusive;
    BdtTemplate templ;
    ParameterAssignment params; // valid when Learned
    Dataset data;               // final dataset
    int iterations = 0;         // learner/verifier rounds, all templates
    int enlargements = 0;
    int reseeds = 0;
    std::vector<int> enlargement_log; // split cell index, -1 for every cell
    std::string note;
    int solver_queries = 0;
    double solver_seconds = 0;
};

// CEGIS driver: fit parameters on the dataset, verify over the full state
// space, feed counterexamples back. Infeasibility first widens the parameter
// bound (once), then grows the template; single-cell growth is probed before
// doubling every cell so class counts stay small.
inline LearnResult bisimulation_learning(const TransitionSystem& m, const CegisConfig& cfg) {
    if (cfg.max_iters < 1 || cfg.max_enlargements < 0 || cfg.param_bound < 1 ||
        cfg.bound_widen_factor < 1)
        throw std::invalid_argument("bad engine configuration");
    LearnResult res;
    res.templ = build_label_preserving_template(m, cfg.extra_depth);
    res.data = initial_samples(m, cfg);
    SmtSolver solver(cfg.solver);
    detail::LearnerSession aligned_ses, free_ses;
    aligned_ses.exit_aligned = true;
    Int bound = cfg.param_bound;
    bool widened = false, reseeded = false;
    unsigned seed = cfg.solver.seed;
    int round = 0;                      // rounds on the current template
    Int aligned_floor = 8, free_floor = 8; // proven-infeasible rungs, per template

    auto say = [&](const std::string& msg) {
        if (cfg.verbose) std::cerr << "[cegis] " << msg << "\n";
    };

    while (true) {
        if (round >= cfg.max_iters) {
            res.note = "iteration budget exhausted";
            break;
        }
        ++round;
        ++res.iterations;
        // With no split planes the aligned phase is the free phase; run it once.
        bool has_theta = !res.templ.theta_names().empty();
        LearnAnswer la;
        la.kind = LearnOutcome::Infeasible;
        if (has_theta)
            la = learn_rung_ladder(res.templ, res.data, cfg, bound, aligned_ses, seed,
                                   aligned_floor);
        if (la.kind == LearnOutcome::Infeasible)
            la = learn_rung_ladder(res.templ, res.data, cfg, bound, free_ses, seed, free_floor);
        if (la.kind == LearnOutcome::Unknown) {
            res.note = "learner returned unknown: " + la.reason;
            break;
        }
        if (la.kind == LearnOutcome::Infeasible) {
            if (!widened) {
                widened = true;
                bound *= cfg.bound_widen_factor;
                say("infeasible, widening parameter bound to " + std::to_string(bound));
                continue;
            }
            aligned_floor = free_floor = 8;
            aligned_ses.reset();
            free_ses.reset();
            if (res.enlargements >= cfg.max_enlargements) {
                res.note = "enlargement budget exhausted";
                break;
            }
            // The grown template gets a fresh widen allowance; keeping the
            // widened bound would let position-dependent ranks chase verifier
            // counterexamples to ever larger coordinates.
            bound = cfg.param_bound;
            widened = false;
            bool adopted = false;
            for (int cell = 0; cell < (int)res.templ.cells.size() && !adopted; ++cell) {
                // A probe only picks the cell to split, so a single feasibility
                // query at the full bound does; the actual parameters come from
                // the rung ladder on the adopted template.
                BdtTemplate probe = enlarge_cell(res.templ, cell);
                if (learn(probe, res.data, cfg, bound, solver).kind ==
                    LearnOutcome::Candidate) {
                    say("splitting cell " + std::to_string(cell));
                    res.templ = std::move(probe);
                    res.enlargement_log.push_back(cell);
                    adopted = true;
                }
            }
            if (!adopted) {
                say("splitting every cell");
                res.templ = enlarge(res.templ);
                res.enlargement_log.push_back(-1);
            }
            ++res.enlargements;
            round = 0;
            continue;
        }
        auto va = verify(m, res.templ, la.params, solver);
        if (va.kind == VerifyOutcome::Unknown) {
            res.note = "verifier returned unknown: " + va.reason;
            break;
        }
        if (va.kind == VerifyOutcome::Valid) {
            res.status = LearnStatus::Learned;
            res.params = la.params;
            res.note = "verified";
            say("verified with " + std::to_string(res.templ.num_classes) + " classes");
            break;
        }
        if (cfg.verbose) {
            std::string s = "counterexample (";
            for (size_t i = 0; i < va.cex.size(); ++i) s += (i ? ", " : "") + std::to_string(va.cex[i]);
            say(s + ")");
        }
        if (!res.data.add(m, va.cex)) {
            if (!reseeded) {
                reseeded = true;
                ++res.reseeds;
                solver.reseed(++seed);
                aligned_ses.reset();
                free_ses.reset();
                say("counterexample repeated, reseeding solver");
                continue;
            }
            res.note = "counterexample recurred after reseed";
            break;
        }
    }
    res.solver_queries = solver.queries() + aligned_ses.queries() + free_ses.queries();
    res.solver_seconds = solver.solver_seconds() + aligned_ses.seconds() + free_ses.seconds();
    return res;
}

} // namespace bisim

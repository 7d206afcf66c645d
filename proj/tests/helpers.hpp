#pragma once

#include <cstdlib>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bisim/bdt.hpp"
#include "bisim/ltl.hpp"
#include "bisim/parse.hpp"
#include "bisim/system.hpp"

namespace testing {

// Euclid's subtraction algorithm, two counters.
inline bisim::TransitionSystem make_euclid() {
    return bisim::parse_system_text(R"(
vars x y
init true
transitions
  x != y && x > y -> x - y, y
  x != y -> x, y - x
  else -> x, y
labels
  terminated: !(x != y)
)");
}

// Counting down to zero, one counter, parity labels.
inline bisim::TransitionSystem make_countdown() {
    return bisim::parse_system_text(R"(
vars n
init true
transitions
  n >= 1 -> n - 1
  else -> n
labels
  zero: n <= 0
  even: n >= 1 && n % 2 = 0
  odd: n >= 1 && n % 2 != 0
)");
}

// Two-state flip-flop.
inline bisim::TransitionSystem make_toggle() {
    return bisim::parse_system_text(R"(
vars b
init b >= 0 && b <= 1
transitions
  else -> 1 - b
labels
  hi: b >= 1
  lo: b <= 0
)");
}

// Hand-built solution for the gcd system after one split of the busy cell:
// class 0 = terminated (x = y), class 1 = running (both coordinates >= 1),
// class 2 = stuck (x != y, some coordinate < 1).
struct HandSolution {
    bisim::BdtTemplate t;
    bisim::ParameterAssignment p;
};

inline HandSolution euclid_solution(const bisim::TransitionSystem& m) {
    HandSolution hs;
    hs.t = bisim::enlarge_cell(bisim::build_label_preserving_template(m), 1);
    bool first = true;
    for (int ei : hs.t.cells[1].exits) {
        const auto& n = hs.t.exits[ei].nodes[0];
        // x > y side tests y >= 1, x < y side tests x >= 1
        hs.p.theta[n.w[0]] = first ? 0 : 1;
        hs.p.theta[n.w[1]] = first ? 1 : 0;
        hs.p.theta[n.b] = 1;
        first = false;
    }
    hs.p.gamma = {0, 0, 2};
    hs.p.eta = {{{0, 0}, 0}, {{1, 1}, 0}, {{0, 0}, 0}};
    return hs;
}

inline std::string solver_exe() {
    if (const char* env = std::getenv("BISIM_SMT_SOLVER")) return env;
#ifdef BISIM_BUNDLED_SOLVER
    return BISIM_BUNDLED_SOLVER;
#else
    return "z3";
#endif
}

// Reference LTL evaluation on a lasso word by direct unrolling: scan forward
// for an until-witness instead of solving a fixpoint, so it shares no code
// with the library's evaluator. Any position's future repeats with the loop
// period, so a horizon of one full pass plus two loop rounds is exhaustive.
inline bool brute_ltl_at(const bisim::LtlPtr& f,
                         const std::vector<std::set<std::string>>& word, size_t loop_start,
                         size_t i) {
    using K = bisim::LtlFormula::Kind;
    size_t n = word.size(), period = n - loop_start;
    auto at = [&](size_t k) { return k < n ? k : loop_start + (k - loop_start) % period; };
    switch (f->kind) {
    case K::True: return true;
    case K::Prop: return word[at(i)].count(f->prop) > 0;
    case K::Not: return !brute_ltl_at(f->a, word, loop_start, i);
    case K::And:
        return brute_ltl_at(f->a, word, loop_start, i) &&
               brute_ltl_at(f->b, word, loop_start, i);
    case K::Until: {
        size_t horizon = n + 2 * period;
        for (size_t k = i; k < i + horizon; ++k) {
            if (brute_ltl_at(f->b, word, loop_start, at(k))) return true;
            if (!brute_ltl_at(f->a, word, loop_start, at(k))) return false;
        }
        return false;
    }
    }
    return false;
}

} // namespace testing

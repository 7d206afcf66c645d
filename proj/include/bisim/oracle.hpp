#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "bisim/cegis.hpp"
#include "bisim/system.hpp"

namespace bisim {

// Explicit finite restriction of a system: a box of states, closed under step
// for a bounded number of rounds. A state whose successor still falls outside
// the list is marked escaped (succ = -1) and excluded from the validation
// universe rather than clamped, which avoids fake divergences at box edges.
struct FiniteRestriction {
    std::vector<StateVector> states; // ascending lexicographic
    std::vector<int> succ;           // index into states, -1 when escaped
    std::vector<std::vector<std::string>> labels;
    std::map<StateVector, int> index;

    bool in_universe(int i) const { return succ[i] >= 0; }
    int universe_count() const {
        int n = 0;
        for (int s : succ) n += s >= 0;
        return n;
    }
};

inline FiniteRestriction build_restriction(const TransitionSystem& m, const StateVector& lo,
                                           const StateVector& hi, int budget) {
    int dim = m.dim();
    if ((int)lo.size() != dim || (int)hi.size() != dim)
        throw std::invalid_argument("box bounds must match the system dimension");
    for (int i = 0; i < dim; ++i)
        if (lo[i] > hi[i]) throw std::invalid_argument("empty box");

    std::set<StateVector> all;
    StateVector cur = lo;
    while (true) {
        all.insert(cur);
        int i = 0;
        for (; i < dim; ++i) {
            if (cur[i] < hi[i]) {
                ++cur[i];
                break;
            }
            cur[i] = lo[i];
        }
        if (i == dim) break;
    }

    std::vector<StateVector> frontier(all.begin(), all.end());
    for (int round = 0; round < budget && !frontier.empty(); ++round) {
        std::vector<StateVector> next;
        for (const auto& s : frontier) {
            StateVector t = step(m, s);
            if (all.insert(t).second) next.push_back(t);
        }
        frontier = std::move(next);
    }

    FiniteRestriction fr;
    fr.states.assign(all.begin(), all.end());
    for (int i = 0; i < (int)fr.states.size(); ++i) fr.index[fr.states[i]] = i;
    fr.succ.reserve(fr.states.size());
    fr.labels.reserve(fr.states.size());
    for (const auto& s : fr.states) {
        auto it = fr.index.find(step(m, s));
        fr.succ.push_back(it == fr.index.end() ? -1 : it->second);
        fr.labels.push_back(labels_of(m, s));
    }
    return fr;
}

inline FiniteRestriction build_restriction(const TransitionSystem& m, Int radius, int budget) {
    return build_restriction(m, StateVector(m.dim(), -radius), StateVector(m.dim(), radius),
                             budget);
}

namespace detail {

// First class a state's run reaches after stuttering inside its own class.
// kSigDiverges marks an in-class cycle, kSigEscapes a run that hits an
// escaped state before leaving the class.
constexpr int kSigUnknown = -4;
constexpr int kSigDiverges = -3;
constexpr int kSigEscapes = -2;

inline std::vector<int> exit_signatures(const FiniteRestriction& fr,
                                        const std::vector<int>& cls) {
    int n = (int)fr.states.size();
    std::vector<int> sig(n, kSigUnknown);
    std::vector<int> onpath(n, -1);
    std::vector<int> path;
    for (int start = 0; start < n; ++start) {
        if (sig[start] != kSigUnknown || !fr.in_universe(start)) continue;
        path.clear();
        int cur = start;
        int result;
        while (true) {
            if (sig[cur] != kSigUnknown) {
                result = sig[cur];
                break;
            }
            onpath[cur] = (int)path.size();
            path.push_back(cur);
            int j = fr.succ[cur];
            if (j < 0) {
                result = kSigEscapes;
                break;
            }
            if (cls[j] != cls[cur]) {
                result = cls[j];
                break;
            }
            if (onpath[j] >= 0) {
                result = kSigDiverges;
                break;
            }
            cur = j;
        }
        for (int i : path) {
            sig[i] = result;
            onpath[i] = -1;
        }
    }
    return sig;
}

} // namespace detail

struct Violation {
    StateVector s, t, succ_s;
};

// Direct check of the stutter condition on an explicit restriction: whenever
// some s leaves its class for class d, every same-class t must reach d by a
// run that stays inside the class. Label preservation is checked first; a
// mismatching pair is reported through the same triple.
inline std::optional<Violation>
validate_partition(const FiniteRestriction& fr,
                   const std::function<int(const StateVector&)>& class_of) {
    int n = (int)fr.states.size();
    std::vector<int> cls(n);
    for (int i = 0; i < n; ++i) cls[i] = class_of(fr.states[i]);

    std::map<int, int> first_of_class;
    for (int i = 0; i < n; ++i) {
        if (!fr.in_universe(i)) continue;
        auto [it, fresh] = first_of_class.emplace(cls[i], i);
        if (!fresh && fr.labels[it->second] != fr.labels[i])
            return Violation{fr.states[it->second], fr.states[i],
                             fr.states[fr.succ[it->second]]};
    }

    auto sig = detail::exit_signatures(fr, cls);
    std::map<int, std::vector<int>> members;
    for (int i = 0; i < n; ++i)
        if (fr.in_universe(i)) members[cls[i]].push_back(i);

    std::set<std::pair<int, int>> checked;
    for (int i = 0; i < n; ++i) {
        if (!fr.in_universe(i)) continue;
        int j = fr.succ[i];
        int c = cls[i], d = cls[j];
        if (c == d || !checked.emplace(c, d).second) continue;
        for (int t : members[c])
            if (sig[t] != d) return Violation{fr.states[i], fr.states[t], fr.states[j]};
    }
    return std::nullopt;
}

struct Partition {
    std::vector<int> class_of; // aligned with fr.states, -1 for escaped states
    int num_classes = 0;
};

// Coarsest label-preserving stutter partition of the universe, by signature
// refinement: split until each class agrees on the class it eventually exits
// to (or on in-class divergence).
inline Partition coarsest_stutter_partition(const FiniteRestriction& fr) {
    int n = (int)fr.states.size();
    Partition p;
    p.class_of.assign(n, -1);

    std::map<std::vector<std::string>, int> by_labels;
    for (int i = 0; i < n; ++i) {
        if (!fr.in_universe(i)) continue;
        auto [it, fresh] = by_labels.emplace(fr.labels[i], p.num_classes);
        if (fresh) ++p.num_classes;
        p.class_of[i] = it->second;
    }

    while (true) {
        auto sig = detail::exit_signatures(fr, p.class_of);
        std::map<std::pair<int, int>, int> key;
        std::vector<int> next(n, -1);
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (!fr.in_universe(i)) continue;
            auto [it, fresh] = key.emplace(std::make_pair(p.class_of[i], sig[i]), count);
            if (fresh) ++count;
            next[i] = it->second;
        }
        if (count == p.num_classes) break;
        p.class_of = std::move(next);
        p.num_classes = count;
    }
    return p;
}

// Ground-truth re-check of a learned solution: evaluate the verified
// condition at every box state directly, no solver involved.
inline std::optional<StateVector>
exhaustive_condition_check(const TransitionSystem& m, const BdtTemplate& t,
                           const ParameterAssignment& p, const StateVector& lo,
                           const StateVector& hi) {
    int dim = m.dim();
    if (t.dim != dim) throw std::invalid_argument("template dimension mismatch");
    auto ss = state_symbols(dim, "s");
    auto ts = state_symbols(dim, "t");
    Term cond = t_and(encode_phi1(t, ss, ts), encode_phi2(t, ss, ts));
    Valuation env = param_valuation(t, p);

    StateVector cur = lo;
    while (true) {
        StateVector nxt = step(m, cur);
        for (int i = 0; i < dim; ++i) {
            env["s" + std::to_string(i)] = cur[i];
            env["t" + std::to_string(i)] = nxt[i];
        }
        if (!std::get<bool>(evaluate_term(cond, env))) return cur;
        int i = 0;
        for (; i < dim; ++i) {
            if (cur[i] < hi[i]) {
                ++cur[i];
                break;
            }
            cur[i] = lo[i];
        }
        if (i == dim) break;
    }
    return std::nullopt;
}

inline std::optional<StateVector>
exhaustive_condition_check(const TransitionSystem& m, const BdtTemplate& t,
                           const ParameterAssignment& p, Int radius) {
    return exhaustive_condition_check(m, t, p, StateVector(m.dim(), -radius),
                                      StateVector(m.dim(), radius));
}

} // namespace bisim

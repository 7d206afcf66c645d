#pragma once

#include <string>
#include <vector>

#include "bisim/expr.hpp"

namespace bisim {

// One row of a guarded command program: when the guard holds, the update
// expressions give the next value of every state variable simultaneously.
// The final row must be a catch-all (`else`), which makes the transition
// function total; rows are tried in order and the first match fires, so the
// dynamics are deterministic by construction.
struct GuardedCommand {
    PredPtr guard;
    bool is_else = false;
    std::vector<ExprPtr> update;
};

struct TransitionSystem {
    std::vector<std::string> vars;
    PredPtr init;
    std::vector<GuardedCommand> commands;
    std::vector<std::pair<std::string, PredPtr>> labels;

    int dim() const { return (int)vars.size(); }
};

inline StateVector step(const TransitionSystem& m, const StateVector& s) {
    for (const auto& cmd : m.commands) {
        if (cmd.is_else || evaluate_pred(*cmd.guard, s)) {
            StateVector out(m.vars.size());
            for (size_t i = 0; i < out.size(); ++i)
                out[i] = evaluate_expr(*cmd.update[i], s);
            return out;
        }
    }
    throw std::logic_error("no command fired; catch-all missing");
}

// Names of the atomic propositions that hold at s, in declaration order.
inline std::vector<std::string> labels_of(const TransitionSystem& m, const StateVector& s) {
    std::vector<std::string> out;
    for (const auto& [name, pred] : m.labels)
        if (evaluate_pred(*pred, s)) out.push_back(name);
    return out;
}

// Trajectory s, T(s), ..., T^k(s).
inline std::vector<StateVector> simulate(const TransitionSystem& m, StateVector s, int k) {
    std::vector<StateVector> out;
    out.reserve(k + 1);
    out.push_back(s);
    for (int i = 0; i < k; ++i) {
        s = step(m, s);
        out.push_back(s);
    }
    return out;
}

} // namespace bisim

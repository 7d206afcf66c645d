#include <catch2/catch_amalgamated.hpp>

#include "bisim/parse.hpp"
#include "bisim/term.hpp"
#include "helpers.hpp"

using namespace bisim;

TEST_CASE("builders fold constants") {
    CHECK(t_add(t_int(2), t_int(3))->ival == 5);
    CHECK(t_sub(t_int(2), t_int(3))->ival == -1);
    CHECK(t_mul(t_int(4), t_int(-3))->ival == -12);
    CHECK(t_neg(t_int(7))->ival == -7);
    CHECK(t_mod(t_int(-7), 3)->ival == 2);
    CHECK(t_div(t_int(-7), 3)->ival == -3);

    auto x = t_var("x");
    CHECK(t_add(x, t_int(0)).n == x.n);
    CHECK(t_add(t_int(0), x).n == x.n);
    CHECK(t_sub(x, t_int(0)).n == x.n);
    CHECK(t_mul(t_int(1), x).n == x.n);
    CHECK(is_int_const(t_mul(x, t_int(0))));
    CHECK(t_mul(x, t_int(0))->ival == 0);
    CHECK(t_neg(t_neg(x)).n == x.n);
    CHECK(t_div(x, 1).n == x.n);
    CHECK(t_mod(x, 1)->ival == 0);

    CHECK(is_true(t_cmp(Cmp::Ge, t_int(3), t_int(3))));
    CHECK(is_false(t_cmp(Cmp::Gt, t_int(3), t_int(3))));
    CHECK(is_true(t_ne(t_int(1), t_int(2))));

    auto p = t_gt(x, t_int(0));
    CHECK(t_and(p, t_bool(true)).n == p.n);
    CHECK(is_false(t_and(p, t_bool(false))));
    CHECK(t_or(p, t_bool(false)).n == p.n);
    CHECK(is_true(t_or(p, t_bool(true))));
    CHECK(is_true(t_and(std::vector<Term>{})));
    CHECK(is_false(t_or(std::vector<Term>{})));
    CHECK(t_not(t_not(p)).n == p.n);
    CHECK(is_false(t_not(t_bool(true))));
    CHECK(t_implies(t_bool(true), p).n == p.n);
    CHECK(is_true(t_implies(t_bool(false), p)));
    CHECK(is_true(t_implies(p, t_bool(true))));
    CHECK(t_implies(p, t_bool(false))->op == TermNode::Op::Not);
    CHECK(t_ite(t_bool(true), x, t_int(0)).n == x.n);
    CHECK(t_ite(t_bool(false), x, t_int(0))->ival == 0);
}

TEST_CASE("n-ary and/or flatten") {
    auto a = t_gt(t_var("a"), t_int(0));
    auto b = t_gt(t_var("b"), t_int(0));
    auto c = t_gt(t_var("c"), t_int(0));
    auto conj = t_and(t_and(a, b), c);
    REQUIRE(conj->op == TermNode::Op::And);
    CHECK(conj->kids.size() == 3);
    auto disj = t_or(a, t_or(b, c));
    REQUIRE(disj->op == TermNode::Op::Or);
    CHECK(disj->kids.size() == 3);
}

TEST_CASE("sort checking") {
    auto x = t_var("x");
    auto p = t_var("p", Sort::Bool);
    CHECK_THROWS_AS(t_add(x, p), std::invalid_argument);
    CHECK_THROWS_AS(t_and(p, x), std::invalid_argument);
    CHECK_THROWS_AS(t_not(x), std::invalid_argument);
    CHECK_THROWS_AS(t_cmp(Cmp::Le, p, p), std::invalid_argument);
    CHECK_THROWS_AS(t_ite(p, x, p), std::invalid_argument);
    CHECK_THROWS_AS(t_ite(x, x, x), std::invalid_argument);
}

TEST_CASE("term evaluation") {
    auto x = t_var("x"), y = t_var("y");
    Valuation env{{"x", Int(5)}, {"y", Int(3)}};

    CHECK(std::get<Int>(evaluate_term(t_mul(t_sub(x, y), x), env)) == 10);
    CHECK(std::get<bool>(evaluate_term(t_gt(x, y), env)));
    CHECK(std::get<Int>(evaluate_term(t_ite(t_le(x, y), x, y), env)) == 3);
    CHECK(std::get<Int>(evaluate_term(t_mod(t_neg(x), 3), env)) == 1);
    CHECK(std::get<bool>(evaluate_term(
        t_implies(t_gt(x, t_int(0)), t_ge(t_add(x, y), t_int(8))), env)));

    CHECK_THROWS_AS(evaluate_term(t_var("z"), env), std::out_of_range);
    Valuation bad{{"x", true}};
    CHECK_THROWS_AS(evaluate_term(x, bad), std::invalid_argument);
}

TEST_CASE("substitution grounds and folds") {
    auto x = t_var("x"), y = t_var("y"), w = t_var("w");
    // w*x + y with x := 0 collapses to y regardless of w
    auto t = t_add(t_mul(w, x), y);
    auto g = substitute(t, Valuation{{"x", Int(0)}});
    CHECK(g.n == y.n);

    // implication with a false premise vanishes
    auto imp = t_implies(t_gt(x, t_int(0)), t_gt(w, y));
    CHECK(is_true(substitute(imp, Valuation{{"x", Int(-1)}})));

    // ite selects a branch once the condition is decided
    auto sel = t_ite(t_ge(x, t_int(0)), t_add(y, t_int(1)), t_sub(y, t_int(1)));
    auto picked = substitute(sel, Valuation{{"x", Int(4)}});
    CHECK(to_smtlib(picked) == "(+ y 1)");

    // term-for-term substitution
    auto chained = substitute_terms(t_gt(x, t_int(0)), {{"x", t_add(y, t_int(2))}});
    CHECK(to_smtlib(chained) == "(> (+ y 2) 0)");

    // substituting then evaluating agrees with evaluating directly
    std::mt19937 rng(99);
    std::uniform_int_distribution<Int> dist(-50, 50);
    auto formula = t_and(t_ge(t_add(t_mul(t_int(3), x), y), w),
                         t_or(t_lt(t_mod(x, 5), t_int(3)), t_gt(t_div(y, 2), w)));
    for (int i = 0; i < 300; ++i) {
        Valuation env{{"x", dist(rng)}, {"y", dist(rng)}, {"w", dist(rng)}};
        auto grounded = substitute(formula, env);
        REQUIRE(is_bool_const(grounded));
        CHECK(grounded->bval == std::get<bool>(evaluate_term(formula, env)));
    }
}

TEST_CASE("free variables") {
    auto t = t_and(t_gt(t_var("x"), t_int(0)),
                   t_or(t_var("p", Sort::Bool), t_le(t_var("y"), t_var("x"))));
    auto fv = free_vars(t);
    REQUIRE(fv.size() == 3);
    CHECK(fv.at("x") == Sort::Int);
    CHECK(fv.at("y") == Sort::Int);
    CHECK(fv.at("p") == Sort::Bool);

    auto clash = t_and(t_var("q", Sort::Bool), t_gt(t_var("q"), t_int(0)));
    CHECK_THROWS_AS(free_vars(clash), std::invalid_argument);
}

TEST_CASE("nonlinearity detection") {
    auto x = t_var("x"), y = t_var("y");
    CHECK_FALSE(is_nonlinear(t_add(t_mul(t_int(3), x), y)));
    CHECK_FALSE(is_nonlinear(t_mod(x, 7)));
    CHECK(is_nonlinear(t_mul(x, x)));
    CHECK(is_nonlinear(t_gt(t_mul(x, y), t_int(0))));
    CHECK(is_nonlinear(t_ite(t_gt(x, t_int(0)), t_mul(x, y), t_int(0))));
    CHECK_FALSE(is_nonlinear(t_mul(t_int(2), t_mul(t_int(3), x))));
}

TEST_CASE("smtlib rendering") {
    auto x = t_var("x"), y = t_var("y");
    CHECK(to_smtlib(t_int(-4)) == "(- 4)");
    CHECK(to_smtlib(t_sub(x, y)) == "(- x y)");
    CHECK(to_smtlib(t_neg(x)) == "(- x)");
    CHECK(to_smtlib(t_mod(x, 4)) == "(mod x 4)");
    CHECK(to_smtlib(t_div(x, 4)) == "(div x 4)");
    CHECK(to_smtlib(t_ne(x, y)) == "(distinct x y)");
    CHECK(to_smtlib(t_and(t_ge(x, t_int(0)), t_lt(y, t_int(2)))) ==
          "(and (>= x 0) (< y 2))");
    CHECK(to_smtlib(t_implies(t_var("p", Sort::Bool), t_var("q", Sort::Bool))) == "(=> p q)");
    CHECK(to_smtlib(t_ite(t_gt(x, t_int(0)), x, t_neg(x))) == "(ite (> x 0) x (- x))");
}

TEST_CASE("expr and pred convert to terms") {
    auto m = testing::make_euclid();
    auto syms = state_symbols(2, "s");

    // guard of the first command: x != y && x > y
    auto guard = pred_to_term(*m.commands[0].guard, syms);
    CHECK(std::get<bool>(evaluate_term(guard, Valuation{{"s0", Int(7)}, {"s1", Int(5)}})));
    CHECK_FALSE(std::get<bool>(evaluate_term(guard, Valuation{{"s0", Int(2)}, {"s1", Int(3)}})));

    // update of the first command: x - y, y
    auto u0 = expr_to_term(*m.commands[0].update[0], syms);
    CHECK(std::get<Int>(evaluate_term(u0, Valuation{{"s0", Int(7)}, {"s1", Int(5)}})) == 2);

    // conversion agrees with direct evaluation on random states
    std::mt19937 rng(5);
    std::uniform_int_distribution<Int> dist(-30, 30);
    for (int i = 0; i < 200; ++i) {
        StateVector s{dist(rng), dist(rng)};
        Valuation env{{"s0", s[0]}, {"s1", s[1]}};
        for (const auto& cmd : m.commands) {
            CHECK(std::get<bool>(evaluate_term(pred_to_term(*cmd.guard, syms), env)) ==
                  evaluate_pred(*cmd.guard, s));
            for (size_t v = 0; v < cmd.update.size(); ++v)
                CHECK(std::get<Int>(evaluate_term(expr_to_term(*cmd.update[v], syms), env)) ==
                      evaluate_expr(*cmd.update[v], s));
        }
    }
}

TEST_CASE("a rank decrease instance evaluates as expected") {
    // h(x, y) = x + y decreases along the stuttering move (2,3) -> (2,1)
    auto syms = state_symbols(2, "s");
    auto succ = state_symbols(2, "t");
    auto h_s = t_add(syms[0], syms[1]);
    auto h_t = t_add(succ[0], succ[1]);
    auto cond = t_and(t_gt(h_s, h_t), t_ge(h_s, t_int(0)));
    Valuation env{{"s0", Int(2)}, {"s1", Int(3)}, {"t0", Int(2)}, {"t1", Int(1)}};
    CHECK(std::get<Int>(evaluate_term(h_s, env)) == 5);
    CHECK(std::get<Int>(evaluate_term(h_t, env)) == 3);
    CHECK(std::get<bool>(evaluate_term(cond, env)));
}

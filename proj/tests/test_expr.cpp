#include <catch2/catch_amalgamated.hpp>

#include "bisim/expr.hpp"
#include "bisim/system.hpp"
#include "helpers.hpp"

using namespace bisim;

TEST_CASE("euclidean division and remainder") {
    CHECK(euclid_mod(7, 3) == 1);
    CHECK(euclid_mod(-7, 3) == 2);
    CHECK(euclid_mod(-6, 3) == 0);
    CHECK(euclid_mod(0, 5) == 0);
    CHECK(euclid_div(7, 3) == 2);
    CHECK(euclid_div(-7, 3) == -3);
    CHECK(euclid_div(-6, 3) == -2);
    CHECK(euclid_div(6, 3) == 2);

    // k * (a div k) + (a mod k) == a, 0 <= a mod k < k
    std::mt19937 rng(7);
    std::uniform_int_distribution<Int> av(-1000, 1000), kv(1, 17);
    for (int i = 0; i < 2000; ++i) {
        Int a = av(rng), k = kv(rng);
        Int q = euclid_div(a, k), r = euclid_mod(a, k);
        CHECK(k * q + r == a);
        CHECK(r >= 0);
        CHECK(r < k);
    }
}

TEST_CASE("expression evaluation") {
    auto x = IntExpr::variable(0), y = IntExpr::variable(1);
    StateVector s{5, 3};

    CHECK(evaluate_expr(*IntExpr::constant(42), s) == 42);
    CHECK(evaluate_expr(*x, s) == 5);
    CHECK(evaluate_expr(*IntExpr::sub(x, y), s) == 2);
    CHECK(evaluate_expr(*IntExpr::mul(IntExpr::sub(x, y), x), s) == 10);
    CHECK(evaluate_expr(*IntExpr::neg(IntExpr::add(x, y)), s) == -8);
    CHECK(evaluate_expr(*IntExpr::mod(y, 2), s) == 1);
    CHECK(evaluate_expr(*IntExpr::mod(IntExpr::neg(x), 3), s) == 1);
    CHECK(evaluate_expr(*IntExpr::div(x, 2), s) == 2);
    CHECK(evaluate_expr(*IntExpr::div(IntExpr::neg(x), 2), s) == -3);

    CHECK_THROWS_AS(IntExpr::mod(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(IntExpr::div(x, -2), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_expr(*IntExpr::variable(5), s), std::out_of_range);
}

TEST_CASE("predicate evaluation") {
    auto x = IntExpr::variable(0), y = IntExpr::variable(1);
    auto diff = IntExpr::sub(x, y);

    auto ne = Predicate::atom(diff, Cmp::Ne);
    CHECK(evaluate_pred(*ne, {5, 3}));
    CHECK_FALSE(evaluate_pred(*ne, {4, 4}));

    auto both_pos = Predicate::conj(Predicate::atom(IntExpr::sub(x, IntExpr::constant(1)), Cmp::Ge),
                                    Predicate::atom(IntExpr::sub(y, IntExpr::constant(1)), Cmp::Ge));
    CHECK(evaluate_pred(*both_pos, {1, 1}));
    CHECK_FALSE(evaluate_pred(*both_pos, {1, 0}));

    CHECK(evaluate_pred(*Predicate::top(), {0, 0}));
    CHECK_FALSE(evaluate_pred(*Predicate::bot(), {0, 0}));
    CHECK(evaluate_pred(*Predicate::neg(Predicate::bot()), {0, 0}));
    CHECK(evaluate_pred(*Predicate::disj(Predicate::bot(), Predicate::atom(x, Cmp::Ge)), {0, 9}));

    auto lt = Predicate::atom(diff, Cmp::Lt);
    CHECK(evaluate_pred(*lt, {2, 3}));
    CHECK_FALSE(evaluate_pred(*lt, {3, 3}));
    auto le = Predicate::atom(diff, Cmp::Le);
    CHECK(evaluate_pred(*le, {3, 3}));
    auto eq = Predicate::atom(diff, Cmp::Eq);
    CHECK(evaluate_pred(*eq, {3, 3}));
    CHECK_FALSE(evaluate_pred(*eq, {3, 4}));
}

TEST_CASE("step follows the first matching command") {
    auto m = testing::make_euclid();
    CHECK(step(m, {6, 4}) == StateVector{2, 4});
    CHECK(step(m, {1, 3}) == StateVector{1, 2});
    CHECK(step(m, {2, 1}) == StateVector{1, 1});
    CHECK(step(m, {4, 4}) == StateVector{4, 4});
    CHECK(step(m, {3, 3}) == StateVector{3, 3});

    auto c = testing::make_countdown();
    CHECK(step(c, {5}) == StateVector{4});
    CHECK(step(c, {1}) == StateVector{0});
    CHECK(step(c, {0}) == StateVector{0});
    CHECK(step(c, {-3}) == StateVector{-3});
}

TEST_CASE("labels_of lists true propositions in declaration order") {
    auto m = testing::make_euclid();
    CHECK(labels_of(m, {4, 4}) == std::vector<std::string>{"terminated"});
    CHECK(labels_of(m, {6, 4}).empty());

    auto c = testing::make_countdown();
    CHECK(labels_of(c, {4}) == std::vector<std::string>{"even"});
    CHECK(labels_of(c, {5}) == std::vector<std::string>{"odd"});
    CHECK(labels_of(c, {0}) == std::vector<std::string>{"zero"});
    CHECK(labels_of(c, {-2}) == std::vector<std::string>{"zero"});
}

TEST_CASE("simulate returns the k+1 prefix of the trajectory") {
    auto m = testing::make_euclid();
    auto tr = simulate(m, {4, 2}, 3);
    REQUIRE(tr.size() == 4);
    CHECK(tr[0] == StateVector{4, 2});
    CHECK(tr[1] == StateVector{2, 2});
    CHECK(tr[2] == StateVector{2, 2});
    CHECK(tr[3] == StateVector{2, 2});

    auto gcd_run = simulate(m, {21, 9}, 20);
    CHECK(gcd_run.back() == StateVector{3, 3});

    CHECK(simulate(m, {7, 7}, 0) == std::vector<StateVector>{{7, 7}});
}

TEST_CASE("printing uses minimal parentheses") {
    std::vector<std::string> vars{"x", "y"};
    auto x = IntExpr::variable(0), y = IntExpr::variable(1);

    CHECK(expr_to_string(*IntExpr::sub(IntExpr::sub(x, y), x), vars) == "x - y - x");
    CHECK(expr_to_string(*IntExpr::sub(x, IntExpr::sub(y, x)), vars) == "x - (y - x)");
    CHECK(expr_to_string(*IntExpr::mul(IntExpr::add(x, y), x), vars) == "(x + y) * x");
    CHECK(expr_to_string(*IntExpr::mod(IntExpr::add(x, y), 2), vars) == "(x + y) % 2");
    CHECK(expr_to_string(*IntExpr::neg(IntExpr::neg(x)), vars) == "-(-x)");

    auto ge = Predicate::atom(x, Cmp::Ge);
    auto gt = Predicate::atom(y, Cmp::Gt);
    CHECK(pred_to_string(*Predicate::conj(ge, gt), vars) == "x >= 0 && y > 0");
    CHECK(pred_to_string(*Predicate::disj(Predicate::conj(ge, gt), Predicate::top()), vars) ==
          "x >= 0 && y > 0 || true");
    CHECK(pred_to_string(*Predicate::conj(Predicate::disj(ge, gt), gt), vars) ==
          "(x >= 0 || y > 0) && y > 0");
    CHECK(pred_to_string(*Predicate::neg(ge), vars) == "!(x >= 0)");
}

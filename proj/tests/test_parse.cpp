#include <catch2/catch_amalgamated.hpp>

#include "bisim/parse.hpp"
#include "helpers.hpp"

using namespace bisim;

static void check_same_behaviour(const TransitionSystem& a, const TransitionSystem& b,
                                 unsigned seed, Int radius) {
    REQUIRE(a.vars == b.vars);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<Int> dist(-radius, radius);
    for (int trial = 0; trial < 500; ++trial) {
        StateVector s(a.vars.size());
        for (auto& v : s) v = dist(rng);
        CHECK(step(a, s) == step(b, s));
        CHECK(labels_of(a, s) == labels_of(b, s));
        CHECK(evaluate_pred(*a.init, s) == evaluate_pred(*b.init, s));
    }
}

TEST_CASE("parses the text format") {
    auto m = testing::make_euclid();
    REQUIRE(m.vars == std::vector<std::string>{"x", "y"});
    REQUIRE(m.commands.size() == 3);
    CHECK_FALSE(m.commands[0].is_else);
    CHECK(m.commands[2].is_else);
    REQUIRE(m.labels.size() == 1);
    CHECK(m.labels[0].first == "terminated");
    CHECK(evaluate_pred(*m.init, {1, 1}));
    CHECK_FALSE(evaluate_pred(*m.init, {0, 1}));
}

TEST_CASE("operator precedence and associativity") {
    std::vector<std::string> vars{"x", "y", "z"};
    auto e = parse_expression("x - y - z", vars);
    CHECK(evaluate_expr(*e, {10, 3, 2}) == 5);
    e = parse_expression("x + y * z", vars);
    CHECK(evaluate_expr(*e, {1, 2, 3}) == 7);
    e = parse_expression("(x + y) * z", vars);
    CHECK(evaluate_expr(*e, {1, 2, 3}) == 9);
    e = parse_expression("-x * y", vars);
    CHECK(evaluate_expr(*e, {2, 3, 0}) == -6);
    e = parse_expression("x % 4 + y / 2", vars);
    CHECK(evaluate_expr(*e, {-3, 9, 0}) == 1 + 4);
    e = parse_expression("x * y % 5", vars);
    CHECK(evaluate_expr(*e, {3, 4, 0}) == 2);

    auto p = parse_predicate("x > 0 && y > 0 || z > 0", vars);
    CHECK(evaluate_pred(*p, {0, 0, 1}));
    CHECK(evaluate_pred(*p, {1, 1, 0}));
    CHECK_FALSE(evaluate_pred(*p, {1, 0, 0}));
    p = parse_predicate("x > 0 && (y > 0 || z > 0)", vars);
    CHECK_FALSE(evaluate_pred(*p, {0, 0, 1}));
    p = parse_predicate("!(x = y) && x <= z", vars);
    CHECK(evaluate_pred(*p, {1, 2, 3}));
    CHECK_FALSE(evaluate_pred(*p, {2, 2, 3}));
    p = parse_predicate("x == y", vars);
    CHECK(evaluate_pred(*p, {4, 4, 0}));
    p = parse_predicate("((x + y) > (z - 1))", vars);
    CHECK(evaluate_pred(*p, {1, 1, 2}));
}

TEST_CASE("parse errors carry line and column") {
    auto expect_error = [](const std::string& src, int line, const std::string& needle) {
        try {
            parse_system_text(src);
            FAIL("expected ParseError for: " << needle);
        } catch (const ParseError& e) {
            INFO(e.what());
            CHECK(e.line == line);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    expect_error("vars x\ninit true\ntransitions\n  x > 0 -> x - 1\n",
                 5, "catch-all");
    expect_error("vars x x\ninit true\ntransitions\n  else -> x\n",
                 1, "duplicate variable");
    expect_error("vars x\ninit true\ntransitions\n  else -> x, x\n",
                 4, "arity");
    expect_error("vars x\ninit y > 0\ntransitions\n  else -> x\n",
                 2, "unknown variable 'y'");
    expect_error("vars x\ninit true\ntransitions\n  else -> x\n  x > 0 -> x\n",
                 5, "after 'else'");
    expect_error("vars x\ninit true\ntransitions\n  x % 0 > 0 -> x\n  else -> x\n",
                 4, "divisor");
    expect_error("vars x\ninit true\ntransitions\n  x / y -> x\n  else -> x\n",
                 4, "divisor must be a positive integer literal");
    expect_error("vars x\ninit true\ntransitions\n  else -> x\nlabels\n  p: x >\n",
                 6, "expected expression");
    expect_error("vars else\ninit true\ntransitions\n  else -> 0\n",
                 1, "reserved");
    expect_error("vars x\ninit true\ntransitions\n  x @ 1 -> x\n  else -> x\n",
                 4, "unexpected character '@'");

    try {
        parse_system_text("vars x\ninit x >< 0\ntransitions\n  else -> x\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
        CHECK(e.col == 9);
    }
}

TEST_CASE("parses the JSON format") {
    std::string src = R"json({
      "vars": ["x", "y"],
      "init": "x >= 1 && y >= 1",
      "transitions": [
        {"guard": "x != y && x > y", "update": ["x - y", "y"]},
        {"guard": "x != y", "update": ["x", "y - x"]},
        {"guard": "else", "update": ["x", "y"]}
      ],
      "labels": {"terminated": "!(x != y)"}
    })json";
    auto m = parse_system_json(src);
    check_same_behaviour(m, testing::make_euclid(), 11, 40);

    // parse_system sniffs the format
    auto m2 = parse_system(src);
    CHECK(m2.vars == m.vars);

    CHECK_THROWS_AS(parse_system_json("{"), ParseError);
    CHECK_THROWS_AS(parse_system_json(R"({"vars": [], "transitions": []})"), ParseError);
    CHECK_THROWS_AS(parse_system_json(
                        R"({"vars": ["x"], "transitions": [{"guard": "x > 0", "update": ["x"]}]})"),
                    ParseError);
    try {
        parse_system_json(
            R"({"vars": ["x"], "transitions": [{"guard": "q > 0", "update": ["x"]},
                {"guard": "else", "update": ["x"]}]})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("transitions[0].guard") != std::string::npos);
    }
}

TEST_CASE("print then reparse preserves behaviour") {
    for (auto make : {testing::make_euclid, testing::make_countdown, testing::make_toggle}) {
        auto m = make();
        auto m2 = parse_system_text(print_system(m));
        check_same_behaviour(m, m2, 23, 60);
        // printing is a fixed point after one round
        CHECK(print_system(m2) == print_system(m));
    }
}

TEST_CASE("comments and blank lines are ignored") {
    auto m = parse_system_text(R"(
# a comment
vars n   # trailing comment

init true
transitions
  # inside a section
  n >= 1 -> n - 1
  else -> n
)");
    CHECK(step(m, {3}) == StateVector{2});
}

#include <catch2/catch_amalgamated.hpp>

#include "bisim/solver.hpp"
#include "helpers.hpp"

using namespace bisim;

static SolverConfig test_config(bool fresh = false) {
    SolverConfig cfg;
    cfg.exe = testing::solver_exe();
    cfg.timeout_ms = 20000;
    cfg.fresh_process = fresh;
    return cfg;
}

TEST_CASE("script rendering") {
    auto x = t_var("x"), y = t_var("y");
    auto f = t_and(t_gt(x, t_int(3)), t_lt(y, t_int(0)));
    auto script = SmtSolver::script_for(f, 7, 1234);
    CHECK(script.find("(set-option :smt.random_seed 7)") != std::string::npos);
    CHECK(script.find("(set-option :sat.random_seed 7)") != std::string::npos);
    CHECK(script.find("(set-option :timeout 1234)") != std::string::npos);
    CHECK(script.find("(set-logic QF_LIA)") != std::string::npos);
    CHECK(script.find("(declare-const x Int)") != std::string::npos);
    CHECK(script.find("(declare-const y Int)") != std::string::npos);
    CHECK(script.find("(assert (and (> x 3) (< y 0)))") != std::string::npos);

    auto nia = SmtSolver::script_for(t_eq(t_mul(x, x), t_int(49)), 1, 0);
    CHECK(nia.find("(set-logic QF_NIA)") != std::string::npos);
    CHECK(nia.find(":timeout") == std::string::npos);

    auto boolscript = to_smtlib({{"p", Sort::Bool}}, t_var("p", Sort::Bool), "QF_LIA");
    CHECK(boolscript.find("(declare-const p Bool)") != std::string::npos);
}

TEST_CASE("model parsing") {
    auto m = SmtSolver::parse_model("((x 4) (y (- 7)) (p true) (q false))");
    CHECK(std::get<Int>(m.at("x")) == 4);
    CHECK(std::get<Int>(m.at("y")) == -7);
    CHECK(std::get<bool>(m.at("p")));
    CHECK_FALSE(std::get<bool>(m.at("q")));

    auto dm = SmtSolver::parse_model(R"((model
      (define-fun x () Int 5)
      (define-fun y () Int (- 12))
      (define-fun p () Bool true)))");
    CHECK(std::get<Int>(dm.at("x")) == 5);
    CHECK(std::get<Int>(dm.at("y")) == -12);
    CHECK(std::get<bool>(dm.at("p")));

    // model block without the leading keyword
    auto nm = SmtSolver::parse_model("((define-fun z () Int 3))");
    CHECK(std::get<Int>(nm.at("z")) == 3);

    CHECK(SmtSolver::parse_model("garbage").empty());
}

TEST_CASE("sat queries return validated models") {
    SmtSolver solver(test_config());
    auto x = t_var("x"), y = t_var("y");

    auto r = solver.check_sat(t_and(t_gt(x, t_int(3)), t_lt(x, t_int(5))));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<Int>(r.model.at("x")) == 4);

    r = solver.check_sat(t_eq(t_add(x, t_int(10)), t_int(3)));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<Int>(r.model.at("x")) == -7);

    r = solver.check_sat(t_and(t_var("p", Sort::Bool), t_not(t_var("q", Sort::Bool))));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<bool>(r.model.at("p")));
    CHECK_FALSE(std::get<bool>(r.model.at("q")));

    // euclidean semantics of mod/div match the evaluator
    r = solver.check_sat(t_and(t_eq(t_mod(x, 3), t_int(2)), t_lt(x, t_int(0)),
                               t_gt(x, t_int(-5))));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    Int xv = std::get<Int>(r.model.at("x"));
    CHECK(euclid_mod(xv, 3) == 2);

    r = solver.check_sat(t_and(t_eq(t_div(y, 2), t_int(-4)), t_lt(y, t_int(-7))));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(euclid_div(std::get<Int>(r.model.at("y")), 2) == -4);
}

TEST_CASE("unsat and ground queries") {
    SmtSolver solver(test_config());
    auto x = t_var("x");

    CHECK(solver.check_sat(t_and(t_gt(x, t_int(0)), t_lt(x, t_int(0)))).kind ==
          SolverResult::Kind::Unsat);
    CHECK(solver.check_sat(t_bool(true)).kind == SolverResult::Kind::Sat);
    CHECK(solver.check_sat(t_bool(false)).kind == SolverResult::Kind::Unsat);

    // mixing unsat and sat queries in one process must not leak state
    CHECK(solver.check_sat(t_eq(x, t_int(1))).kind == SolverResult::Kind::Sat);
    CHECK(solver.check_sat(t_and(t_ge(x, t_int(2)), t_le(x, t_int(1)))).kind ==
          SolverResult::Kind::Unsat);
    auto r = solver.check_sat(t_eq(x, t_int(9)));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<Int>(r.model.at("x")) == 9);
    CHECK(solver.queries() == 6);
    CHECK(solver.solver_seconds() > 0);
}

TEST_CASE("fresh process mode") {
    SmtSolver solver(test_config(true));
    auto x = t_var("x");
    auto r = solver.check_sat(t_and(t_ge(x, t_int(41)), t_le(x, t_int(41))));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<Int>(r.model.at("x")) == 41);
    CHECK(solver.check_sat(t_lt(x, x)).kind == SolverResult::Kind::Unsat);
    r = solver.check_sat(t_eq(t_neg(x), t_int(6)));
    REQUIRE(r.kind == SolverResult::Kind::Sat);
    CHECK(std::get<Int>(r.model.at("x")) == -6);
}

TEST_CASE("same seed, same model") {
    auto x = t_var("x"), y = t_var("y");
    auto f = t_eq(t_add(x, y), t_int(10));

    SmtSolver a(test_config());
    auto r1 = a.check_sat(f);
    auto r2 = a.check_sat(f);
    REQUIRE(r1.kind == SolverResult::Kind::Sat);
    REQUIRE(r2.kind == SolverResult::Kind::Sat);
    CHECK(r1.model == r2.model);

    SmtSolver b(test_config());
    auto r3 = b.check_sat(f);
    REQUIRE(r3.kind == SolverResult::Kind::Sat);
    CHECK(r1.model == r3.model);
}

TEST_CASE("hard queries hit the solver timeout") {
    auto cfg = test_config();
    cfg.timeout_ms = 1500;
    SmtSolver solver(cfg);
    auto p = t_var("p"), q = t_var("q");
    // factoring a large semiprime; far beyond the budget
    auto hard = t_and(t_ge(p, t_int(2)),
                      t_and(t_ge(q, t_int(2)),
                            t_eq(t_mul(p, q), t_int(1000000016000000063LL))));
    auto t0 = std::chrono::steady_clock::now();
    auto r = solver.check_sat(hard);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.kind == SolverResult::Kind::Unknown);
    CHECK(secs < 25.0);

    // the process stays usable for the next query
    auto ok = solver.check_sat(t_eq(p, t_int(3)));
    CHECK(ok.kind == SolverResult::Kind::Sat);
}

TEST_CASE("configuration errors surface as SolverError") {
    SolverConfig none;
    CHECK_THROWS_AS(SmtSolver(none), SolverError);

    SolverConfig bad;
    bad.exe = "/nonexistent/solver-binary";
    SmtSolver solver(bad);
    CHECK_THROWS_AS(solver.check_sat(t_bool(true)), SolverError);
}

TEST_CASE("solver discovery") {
    CHECK(find_on_path("definitely-not-a-real-binary-name").empty());
    CHECK(!find_on_path("sh").empty());

    // env override wins and may carry arguments
    setenv("BISIM_SMT_SOLVER", "/opt/custom/smt --flag", 1);
    auto cfg = default_solver_config("/fallback");
    CHECK(cfg.exe == "/opt/custom/smt");
    REQUIRE(cfg.args.size() == 1);
    CHECK(cfg.args[0] == "--flag");
    unsetenv("BISIM_SMT_SOLVER");
}

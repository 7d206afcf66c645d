#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "bisim/cegis.hpp"
#include "bisim/oracle.hpp"
#include "bisim/parse.hpp"
#include "bisim/quotient.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;   // parse/usage problems
constexpr int kInconclusive = 2; // budget exhausted without a verified solution
constexpr int kSolverError = 3;  // solver missing or misbehaving
constexpr int kFails = 4;        // a property verdict is Fails, or a bench mismatch

std::string bundled_solver() {
#ifdef BISIM_BUNDLED_SOLVER
    return BISIM_BUNDLED_SOLVER;
#else
    return "";
#endif
}

std::string bench_dir() {
#ifdef BISIM_BENCH_DIR
    return BISIM_BENCH_DIR;
#else
    return "benchmarks";
#endif
}

struct Options {
    bisim::CegisConfig cfg;
    std::string solver_spec; // --solver, may carry arguments
    std::string out_dir = ".";
    bool oracle = false;
    bool no_cache = false;
};

void add_engine_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--solver", o.solver_spec, "SMT solver command (default: $BISIM_SMT_SOLVER, z3, bundled)");
    cmd->add_option("--seed", o.cfg.solver.seed, "solver random seed");
    cmd->add_option("--radius", o.cfg.radius, "initial sample grid radius");
    cmd->add_option("--stride", o.cfg.stride, "initial sample grid stride");
    cmd->add_option("--max-iters", o.cfg.max_iters, "learner/verifier rounds per template");
    cmd->add_option("--max-enlarge", o.cfg.max_enlargements, "template enlargement budget");
    cmd->add_option("--param-bound", o.cfg.param_bound, "box bound on learned parameters");
    cmd->add_option("--timeout-ms", o.cfg.solver.timeout_ms, "per-query solver timeout");
    cmd->add_option("--extra-depth", o.cfg.extra_depth, "extra parametric levels in the initial template");
    cmd->add_flag("--constant-ranks", o.cfg.constant_ranks, "restrict ranks to constants (strong bisimulation)");
    cmd->add_flag("--fresh-solver", o.cfg.solver.fresh_process, "one solver process per query");
    cmd->add_flag("--verbose", o.cfg.verbose, "log engine progress to stderr");
    cmd->add_option("--out", o.out_dir, "artifact output directory");
    cmd->add_flag("--oracle", o.oracle, "cross-check the result exhaustively on a box");
    cmd->add_flag("--no-cache", o.no_cache, "ignore and overwrite cached learned artifacts");
}

int resolve_solver(Options& o) {
    if (!o.solver_spec.empty()) {
        std::istringstream ss(o.solver_spec);
        std::string word;
        o.cfg.solver.exe.clear();
        o.cfg.solver.args.clear();
        while (ss >> word) {
            if (o.cfg.solver.exe.empty()) o.cfg.solver.exe = word;
            else o.cfg.solver.args.push_back(word);
        }
    } else {
        auto def = bisim::default_solver_config(bundled_solver());
        o.cfg.solver.exe = def.exe;
        o.cfg.solver.args = def.args;
    }
    if (o.cfg.solver.exe.empty() || access(o.cfg.solver.exe.c_str(), X_OK) != 0) {
        std::cerr << "error: no usable SMT solver"
                  << (o.cfg.solver.exe.empty() ? "" : " at " + o.cfg.solver.exe)
                  << "; pass --solver, set BISIM_SMT_SOLVER, or install z3\n";
        return kSolverError;
    }
    return kOk;
}

uint64_t fnv64(const std::string& data, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// The cache key covers everything the learned artifact depends on: the system
// text and the engine knobs that shape the search. Solver identity and
// timeouts are excluded; any verified artifact is equally valid.
std::string cache_key(const std::string& system_text, const bisim::CegisConfig& cfg) {
    std::ostringstream ss;
    ss << "r" << cfg.radius << ";s" << cfg.stride << ";i" << cfg.max_iters << ";e"
       << cfg.max_enlargements << ";b" << cfg.param_bound << ";w" << cfg.bound_widen_factor
       << ";d" << cfg.extra_depth << ";c" << cfg.constant_ranks << ";x" << cfg.solver.seed;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)fnv64(ss.str(), fnv64(system_text)));
    return buf;
}

json params_to_json(const bisim::ParameterAssignment& p) {
    json j;
    j["theta"] = json::object();
    for (const auto& [name, v] : p.theta) j["theta"][name] = v;
    j["gamma"] = p.gamma;
    j["eta"] = json::array();
    for (const auto& [w, b] : p.eta) j["eta"].push_back({{"w", w}, {"b", b}});
    return j;
}

bisim::ParameterAssignment params_from_json(const json& j) {
    bisim::ParameterAssignment p;
    for (auto it = j.at("theta").begin(); it != j.at("theta").end(); ++it)
        p.theta[it.key()] = it.value().get<bisim::Int>();
    p.gamma = j.at("gamma").get<std::vector<bisim::ClassId>>();
    for (const auto& e : j.at("eta"))
        p.eta.push_back({e.at("w").get<std::vector<bisim::Int>>(), e.at("b").get<bisim::Int>()});
    return p;
}

bisim::BdtTemplate rebuild_template(const bisim::TransitionSystem& m,
                                    const bisim::CegisConfig& cfg,
                                    const std::vector<int>& log) {
    auto t = bisim::build_label_preserving_template(m, cfg.extra_depth);
    for (int cell : log) t = cell < 0 ? bisim::enlarge(t) : bisim::enlarge_cell(t, cell);
    return t;
}

struct Pipeline {
    bisim::TransitionSystem system;
    bisim::LearnResult result;
    bool cache_hit = false;
    double wall_seconds = 0;
    fs::path cache_path;
};

// Learns, or revalidates a cached artifact against the current system + config.
Pipeline run_pipeline(const std::string& system_file, Options& o) {
    Pipeline pl;
    std::string text = read_file(system_file);
    pl.system = bisim::parse_system(text);
    std::string key = cache_key(text, o.cfg);
    fs::create_directories(o.out_dir);
    pl.cache_path = fs::path(o.out_dir) / (fs::path(system_file).stem().string() + ".learned.json");

    auto started = std::chrono::steady_clock::now();
    if (!o.no_cache && fs::exists(pl.cache_path)) {
        try {
            json j = json::parse(read_file(pl.cache_path.string()));
            if (j.at("key") == key) {
                auto t = rebuild_template(pl.system, o.cfg,
                                          j.at("enlargement_log").get<std::vector<int>>());
                auto p = params_from_json(j.at("params"));
                bisim::SmtSolver solver(o.cfg.solver);
                if (bisim::verify(pl.system, t, p, solver).kind ==
                    bisim::VerifyOutcome::Valid) {
                    pl.result.status = bisim::LearnStatus::Learned;
                    pl.result.templ = std::move(t);
                    pl.result.params = std::move(p);
                    pl.result.note = "verified (cached)";
                    pl.result.enlargement_log = j.at("enlargement_log").get<std::vector<int>>();
                    pl.result.enlargements = (int)pl.result.enlargement_log.size();
                    pl.cache_hit = true;
                }
            }
        } catch (const std::exception&) {
            // stale or corrupt cache entries are simply relearned
        }
    }
    if (!pl.cache_hit) {
        pl.result = bisim::bisimulation_learning(pl.system, o.cfg);
        if (pl.result.status == bisim::LearnStatus::Learned) {
            json j;
            j["key"] = key;
            j["enlargement_log"] = pl.result.enlargement_log;
            j["params"] = params_to_json(pl.result.params);
            write_file(pl.cache_path, j.dump(2) + "\n");
        }
    }
    pl.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return pl;
}

int run_oracle_checks(const Pipeline& pl) {
    const auto& t = pl.result.templ;
    const auto& p = pl.result.params;
    if (auto v = bisim::exhaustive_condition_check(pl.system, t, p, 50)) {
        std::cerr << "oracle: condition violated at (";
        for (size_t i = 0; i < v->size(); ++i) std::cerr << (i ? ", " : "") << (*v)[i];
        std::cerr << ")\n";
        return kFails;
    }
    auto fr = bisim::build_restriction(pl.system, 25, 0);
    auto viol = bisim::validate_partition(
        fr, [&](const bisim::StateVector& s) { return bisim::classify(t, p, s); });
    if (viol) {
        std::cerr << "oracle: partition violation, a state cannot follow its class exit\n";
        return kFails;
    }
    std::cout << "oracle: exhaustive box and restriction checks passed\n";
    return kOk;
}

std::string lasso_to_string(const bisim::LassoTrace& lasso) {
    std::ostringstream ss;
    ss << "prefix [";
    for (size_t i = 0; i < lasso.prefix.size(); ++i) ss << (i ? " " : "") << lasso.prefix[i];
    ss << "] loop [";
    for (size_t i = 0; i < lasso.loop.size(); ++i) ss << (i ? " " : "") << lasso.loop[i];
    ss << "]";
    return ss.str();
}

json report_base(const Pipeline& pl) {
    const auto& r = pl.result;
    json j;
    j["outcome"] = r.status == bisim::LearnStatus::Learned ? "learned" : "inconclusive";
    j["note"] = r.note;
    j["classes"] = r.status == bisim::LearnStatus::Learned ? r.templ.num_classes : 0;
    j["iterations"] = r.iterations;
    j["enlargements"] = r.enlargements;
    j["reseeds"] = r.reseeds;
    j["solver_queries"] = r.solver_queries;
    j["solver_seconds"] = r.solver_seconds;
    j["wall_seconds"] = pl.wall_seconds;
    j["cache_hit"] = pl.cache_hit;
    return j;
}

int cmd_learn(const std::string& system_file, Options& o) {
    Pipeline pl = run_pipeline(system_file, o);
    json report = report_base(pl);
    std::string stem = fs::path(system_file).stem().string();
    fs::path base = fs::path(o.out_dir) / stem;

    int rc = kOk;
    if (pl.result.status == bisim::LearnStatus::Learned) {
        bisim::SmtSolver solver(o.cfg.solver);
        auto a = bisim::build_quotient(pl.system, pl.result, solver);
        write_file(base.string() + ".bdt.txt",
                   bisim::dump_template(pl.result.templ, &pl.result.params));
        write_file(base.string() + ".quotient.dot", bisim::export_dot(a));
        write_file(base.string() + ".quotient.tbl", bisim::export_explicit(a));
        report["classes"] = a.classes.size();
        report["initial_classes"] = a.initial.size();
        std::cout << "learned " << a.classes.size() << " classes in " << pl.result.iterations
                  << " iterations (" << pl.result.enlargements << " enlargements, "
                  << (pl.cache_hit ? "cached" : "fresh") << ")\n";
        if (o.oracle) rc = run_oracle_checks(pl);
    } else {
        std::cout << "inconclusive: " << pl.result.note << "\n";
        rc = kInconclusive;
    }
    write_file(base.string() + ".report.json", report.dump(2) + "\n");
    return rc;
}

int cmd_check(const std::string& system_file, const std::string& formula, Options& o) {
    bisim::LtlPtr phi;
    try {
        phi = bisim::parse_ltl(formula);
    } catch (const bisim::ParseError& e) {
        std::cerr << "error: formula: " << e.what() << "\n";
        return kInputError;
    }
    Pipeline pl = run_pipeline(system_file, o);
    if (pl.result.status != bisim::LearnStatus::Learned) {
        std::cout << "inconclusive: " << pl.result.note << "\n";
        return kInconclusive;
    }
    bisim::SmtSolver solver(o.cfg.solver);
    auto a = bisim::build_quotient(pl.system, pl.result, solver);
    auto res = bisim::check_ltl(a, phi);
    if (res.holds) {
        std::cout << formula << ": Holds\n";
        return kOk;
    }
    std::cout << formula << ": Fails, " << lasso_to_string(res.witness) << "\n";
    return kFails;
}

int cmd_simulate(const std::string& system_file, const std::string& state_spec, int steps) {
    auto m = bisim::load_system(system_file);
    bisim::StateVector s;
    std::istringstream ss(state_spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) s.push_back(std::stoll(tok));
    if ((int)s.size() != m.dim()) {
        std::cerr << "error: state has " << s.size() << " coordinates, system needs " << m.dim()
                  << "\n";
        return kInputError;
    }
    for (int i = 0; i <= steps; ++i) {
        std::cout << i << ": (";
        for (size_t k = 0; k < s.size(); ++k) std::cout << (k ? ", " : "") << s[k];
        std::cout << ")";
        auto ls = bisim::labels_of(m, s);
        if (!ls.empty()) {
            std::cout << " {";
            for (size_t k = 0; k < ls.size(); ++k) std::cout << (k ? ", " : "") << ls[k];
            std::cout << "}";
        }
        std::cout << "\n";
        bisim::StateVector nxt = bisim::step(m, s);
        if (nxt == s) {
            if (i < steps) std::cout << "fixpoint\n";
            break;
        }
        s = nxt;
    }
    return kOk;
}

struct BenchCase {
    std::string name;
    std::string file;
    std::string expect_outcome = "learned";
    int classes_min = -1, classes_max = -1;
    std::vector<std::pair<std::string, std::string>> formulas; // formula, holds|fails
    std::vector<std::string> tags;
    json config;
};

struct BenchRow {
    std::string name;
    std::string outcome;
    int classes = 0;
    double mean_s = 0, std_s = 0;
    std::vector<std::string> verdicts;
    std::vector<std::string> mismatches;
    bool skipped = false;
};

void apply_case_config(bisim::CegisConfig& cfg, const json& j) {
    if (j.contains("radius")) cfg.radius = j["radius"];
    if (j.contains("stride")) cfg.stride = j["stride"];
    if (j.contains("max_iters")) cfg.max_iters = j["max_iters"];
    if (j.contains("max_enlargements")) cfg.max_enlargements = j["max_enlargements"];
    if (j.contains("param_bound")) cfg.param_bound = j["param_bound"];
    if (j.contains("extra_depth")) cfg.extra_depth = j["extra_depth"];
    if (j.contains("constant_ranks")) cfg.constant_ranks = j["constant_ranks"];
    if (j.contains("timeout_ms")) cfg.solver.timeout_ms = j["timeout_ms"];
}

BenchRow run_case(const BenchCase& bc, const fs::path& root, const Options& base, int reps) {
    BenchRow row;
    row.name = bc.name;
    Options o = base;
    o.no_cache = true;
    apply_case_config(o.cfg, bc.config);
    std::string file = (root / bc.file).string();

    std::vector<double> times;
    bisim::LearnResult kept;
    bisim::TransitionSystem system;
    for (int rep = 0; rep < reps; ++rep) {
        auto started = std::chrono::steady_clock::now();
        system = bisim::load_system(file);
        auto res = bisim::bisimulation_learning(system, o.cfg);
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
        if (rep == 0) kept = std::move(res);
    }
    double mean = 0;
    for (double t : times) mean += t;
    mean /= times.size();
    double var = 0;
    for (double t : times) var += (t - mean) * (t - mean);
    row.mean_s = mean;
    row.std_s = times.size() > 1 ? std::sqrt(var / (times.size() - 1)) : 0.0;

    row.outcome = kept.status == bisim::LearnStatus::Learned ? "learned" : "inconclusive";
    if (row.outcome != bc.expect_outcome)
        row.mismatches.push_back("outcome " + row.outcome + ", expected " + bc.expect_outcome);

    if (kept.status == bisim::LearnStatus::Learned) {
        bisim::SmtSolver solver(o.cfg.solver);
        auto a = bisim::build_quotient(system, kept, solver);
        row.classes = (int)a.classes.size();
        if (bc.classes_min >= 0 && row.classes < bc.classes_min)
            row.mismatches.push_back("classes " + std::to_string(row.classes) + " < min " +
                                     std::to_string(bc.classes_min));
        if (bc.classes_max >= 0 && row.classes > bc.classes_max)
            row.mismatches.push_back("classes " + std::to_string(row.classes) + " > max " +
                                     std::to_string(bc.classes_max));
        for (const auto& [f, expect] : bc.formulas) {
            auto res = bisim::check_ltl(a, bisim::parse_ltl(f));
            std::string got = res.holds ? "holds" : "fails";
            row.verdicts.push_back(f + "=" + (res.holds ? "Holds" : "Fails"));
            if (got != expect)
                row.mismatches.push_back("'" + f + "' " + got + ", expected " + expect);
        }
    } else if (!bc.formulas.empty() && bc.expect_outcome == "learned") {
        row.mismatches.push_back("no verdicts, learning was inconclusive");
    }
    return row;
}

int cmd_bench(const std::string& suite_spec, Options& o, int jobs, int reps,
              const std::string& filter, bool include_nonlinear, const std::string& csv_path) {
    fs::path suite_file = suite_spec;
    if (!fs::exists(suite_file)) suite_file = fs::path(bench_dir()) / (suite_spec + ".json");
    if (!fs::exists(suite_file)) {
        std::cerr << "error: unknown suite " << suite_spec << "\n";
        return kInputError;
    }
    json suite = json::parse(read_file(suite_file.string()));
    fs::path root = suite_file.parent_path();

    std::vector<BenchCase> cases;
    for (const auto& j : suite.at("cases")) {
        BenchCase bc;
        bc.name = j.at("name");
        bc.file = j.at("file");
        if (j.contains("expect")) bc.expect_outcome = j["expect"];
        if (j.contains("classes_min")) bc.classes_min = j["classes_min"];
        if (j.contains("classes_max")) bc.classes_max = j["classes_max"];
        if (j.contains("tags")) bc.tags = j["tags"].get<std::vector<std::string>>();
        if (j.contains("config")) bc.config = j["config"];
        if (j.contains("formulas"))
            for (const auto& f : j["formulas"])
                bc.formulas.push_back({f.at("f"), f.at("expect")});
        if (!filter.empty() && bc.name.find(filter) == std::string::npos) continue;
        cases.push_back(std::move(bc));
    }

    std::vector<BenchRow> rows(cases.size());
    std::mutex mtx;
    size_t next = 0;
    auto worker = [&]() {
        while (true) {
            size_t i;
            {
                std::lock_guard<std::mutex> lk(mtx);
                if (next >= cases.size()) return;
                i = next++;
            }
            const auto& bc = cases[i];
            bool nonlinear =
                std::find(bc.tags.begin(), bc.tags.end(), "nonlinear") != bc.tags.end();
            if (nonlinear && !include_nonlinear) {
                rows[i].name = bc.name;
                rows[i].skipped = true;
                continue;
            }
            try {
                rows[i] = run_case(bc, root, o, reps);
            } catch (const std::exception& e) {
                rows[i].name = bc.name;
                rows[i].outcome = "error";
                rows[i].mismatches.push_back(e.what());
            }
            std::lock_guard<std::mutex> lk(mtx);
            std::cerr << rows[i].name << ": " << rows[i].outcome << " (" << std::fixed
                      << std::setprecision(2) << rows[i].mean_s << " s)\n";
        }
    };
    jobs = std::max(1, std::min<int>(jobs, (int)cases.size()));
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::ostringstream csv;
    csv << "name,outcome,classes,mean_s,std_s,verdicts\n";
    bool bad = false;
    for (const auto& row : rows) {
        if (row.skipped) continue;
        csv << row.name << "," << row.outcome << "," << row.classes << "," << std::fixed
            << std::setprecision(3) << row.mean_s << "," << row.std_s << ",";
        for (size_t i = 0; i < row.verdicts.size(); ++i) csv << (i ? ";" : "") << row.verdicts[i];
        csv << "\n";
        for (const auto& m : row.mismatches) {
            std::cerr << "mismatch: " << row.name << ": " << m << "\n";
            bad = true;
        }
    }
    if (csv_path.empty() || csv_path == "-") std::cout << csv.str();
    else write_file(csv_path, csv.str());
    return bad ? kFails : kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stutter-insensitive bisimulation learning for integer transition systems"};
    app.require_subcommand(1);

    Options learn_opts, check_opts, bench_opts;
    std::string learn_file, check_file, check_formula, sim_file, sim_state;
    std::string suite = "suite", bench_filter, bench_csv;
    int sim_steps = 20, bench_jobs = (int)std::thread::hardware_concurrency(), bench_reps = 1;
    bool bench_nonlinear = false;

    auto* learn = app.add_subcommand("learn", "learn a bisimulation and emit the quotient");
    learn->add_option("system", learn_file, "system file")->required();
    add_engine_flags(learn, learn_opts);

    auto* check = app.add_subcommand("check", "model-check an LTL formula (no next operator)");
    check->add_option("system", check_file, "system file")->required();
    check->add_option("formula", check_formula, "LTL formula, e.g. 'G safe'")->required();
    add_engine_flags(check, check_opts);

    auto* sim = app.add_subcommand("simulate", "print a concrete trajectory");
    sim->add_option("system", sim_file, "system file")->required();
    sim->add_option("--state", sim_state, "comma-separated start state")->required();
    sim->add_option("--steps", sim_steps, "number of steps");

    auto* bench = app.add_subcommand("bench", "run a benchmark suite");
    bench->add_option("suite", suite, "suite name or JSON file");
    bench->add_option("--jobs", bench_jobs, "parallel workers");
    bench->add_option("--reps", bench_reps, "repetitions per case");
    bench->add_option("--filter", bench_filter, "only cases whose name contains this");
    bench->add_flag("--include-nonlinear", bench_nonlinear, "also run QF_NIA cases");
    bench->add_option("--csv", bench_csv, "write the CSV here instead of stdout");
    add_engine_flags(bench, bench_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (learn->parsed()) {
            if (int rc = resolve_solver(learn_opts)) return rc;
            return cmd_learn(learn_file, learn_opts);
        }
        if (check->parsed()) {
            if (int rc = resolve_solver(check_opts)) return rc;
            return cmd_check(check_file, check_formula, check_opts);
        }
        if (sim->parsed()) return cmd_simulate(sim_file, sim_state, sim_steps);
        if (bench->parsed()) {
            if (int rc = resolve_solver(bench_opts)) return rc;
            return cmd_bench(suite, bench_opts, bench_jobs, bench_reps, bench_filter,
                             bench_nonlinear, bench_csv);
        }
    } catch (const bisim::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const bisim::SolverError& e) {
        std::cerr << "error: solver: " << e.what() << "\n";
        return kSolverError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverError;
    }
    return kOk;
}

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bisim/term.hpp"

namespace bisim {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverConfig {
    std::string exe;
    std::vector<std::string> args;
    int timeout_ms = 20000;   // per query, enforced by the solver itself
    unsigned seed = 1;
    bool fresh_process = false; // one process per query instead of (reset) reuse
    bool validate_models = true;
};

struct SolverResult {
    enum class Kind { Sat, Unsat, Unknown };
    Kind kind = Kind::Unknown;
    Valuation model;    // populated for Sat
    std::string reason; // populated for Unknown
};

// Locates a solver executable. Order: $BISIM_SMT_SOLVER (may include
// arguments), a z3 binary on PATH, then the supplied fallback (normally the
// bundled wrapper). An empty exe means nothing was found.
inline std::string find_on_path(const std::string& name) {
    if (name.find('/') != std::string::npos)
        return access(name.c_str(), X_OK) == 0 ? name : "";
    const char* path = std::getenv("PATH");
    if (!path) return "";
    std::istringstream ss(path);
    std::string dir;
    while (std::getline(ss, dir, ':')) {
        if (dir.empty()) continue;
        std::string full = dir + "/" + name;
        if (access(full.c_str(), X_OK) == 0) return full;
    }
    return "";
}

inline SolverConfig default_solver_config(const std::string& bundled_fallback = "") {
    SolverConfig cfg;
    if (const char* env = std::getenv("BISIM_SMT_SOLVER")) {
        std::istringstream ss(env);
        std::string word;
        while (ss >> word) {
            if (cfg.exe.empty()) cfg.exe = word;
            else cfg.args.push_back(word);
        }
        if (!cfg.exe.empty()) return cfg;
    }
    std::string z3 = find_on_path("z3");
    if (!z3.empty()) {
        cfg.exe = z3;
        cfg.args = {"-in"};
        return cfg;
    }
    if (!bundled_fallback.empty() && access(bundled_fallback.c_str(), X_OK) == 0)
        cfg.exe = bundled_fallback;
    return cfg;
}

inline std::string to_smtlib(const std::map<std::string, Sort>& decls, const Term& assertion,
                             const std::string& logic) {
    std::ostringstream os;
    os << "(set-logic " << logic << ")\n";
    for (const auto& [name, sort] : decls)
        os << "(declare-const " << name << (sort == Sort::Int ? " Int)\n" : " Bool)\n");
    os << "(assert " << bisim::to_smtlib(assertion) << ")\n";
    return os.str();
}

namespace detail {

inline void ignore_sigpipe() {
    static bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

struct Subprocess {
    pid_t pid = -1;
    int in_fd = -1, out_fd = -1, err_fd = -1;
    std::string out_buf, err_buf;

    bool alive() const { return pid > 0; }

    void spawn(const std::string& exe, const std::vector<std::string>& args) {
        ignore_sigpipe();
        int inp[2], outp[2], errp[2];
        if (pipe(inp) || pipe(outp) || pipe(errp))
            throw SolverError("pipe() failed");
        pid_t p = fork();
        if (p < 0) throw SolverError("fork() failed");
        if (p == 0) {
            dup2(inp[0], 0);
            dup2(outp[1], 1);
            dup2(errp[1], 2);
            for (int fd : {inp[0], inp[1], outp[0], outp[1], errp[0], errp[1]}) close(fd);
            std::vector<char*> argv;
            argv.push_back(const_cast<char*>(exe.c_str()));
            for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
            argv.push_back(nullptr);
            execvp(exe.c_str(), argv.data());
            const char* msg = "exec failed\n";
            ssize_t ignored = write(2, msg, strlen(msg));
            (void)ignored;
            _exit(127);
        }
        close(inp[0]);
        close(outp[1]);
        close(errp[1]);
        pid = p;
        in_fd = inp[1];
        out_fd = outp[0];
        err_fd = errp[0];
        fcntl(out_fd, F_SETFL, O_NONBLOCK);
        fcntl(err_fd, F_SETFL, O_NONBLOCK);
        out_buf.clear();
        err_buf.clear();
    }

    bool write_all(const std::string& data) {
        size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::write(in_fd, data.data() + off, data.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            off += (size_t)n;
        }
        return true;
    }

    // Reads stdout until a line equal to `marker` appears, collecting lines
    // before it. Returns false on timeout or EOF without the marker.
    bool read_until(const std::string& marker, std::chrono::steady_clock::time_point deadline,
                    std::vector<std::string>& lines) {
        auto flush_lines = [&]() {
            size_t start = 0;
            while (true) {
                size_t nl = out_buf.find('\n', start);
                if (nl == std::string::npos) break;
                std::string line = out_buf.substr(start, nl - start);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                start = nl + 1;
                if (line == marker) {
                    out_buf.erase(0, start);
                    return true;
                }
                lines.push_back(std::move(line));
            }
            out_buf.erase(0, start);
            return false;
        };
        if (flush_lines()) return true;
        char chunk[4096];
        while (true) {
            auto now = std::chrono::steady_clock::now();
            if (now >= deadline) return false;
            int wait_ms = (int)std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
                              .count();
            struct pollfd fds[2] = {{out_fd, POLLIN, 0}, {err_fd, POLLIN, 0}};
            int rc = poll(fds, 2, std::min(wait_ms, 200));
            if (rc < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            if (fds[1].revents & (POLLIN | POLLHUP)) {
                ssize_t n;
                while ((n = read(err_fd, chunk, sizeof chunk)) > 0) {
                    err_buf.append(chunk, n);
                    if (err_buf.size() > 8192) err_buf.erase(0, err_buf.size() - 8192);
                }
            }
            if (fds[0].revents & (POLLIN | POLLHUP)) {
                ssize_t n;
                bool got_eof = false;
                while ((n = read(out_fd, chunk, sizeof chunk)) > 0) out_buf.append(chunk, n);
                if (n == 0) got_eof = true;
                if (flush_lines()) return true;
                if (got_eof) return false;
            }
        }
    }

    void terminate() {
        if (!alive()) return;
        if (in_fd >= 0) close(in_fd);
        kill(pid, SIGKILL);
        waitpid(pid, nullptr, 0);
        close(out_fd);
        close(err_fd);
        pid = -1;
        in_fd = out_fd = err_fd = -1;
    }
};

// Minimal s-expression reader for solver replies.
struct Sexp {
    std::string atom;
    std::vector<Sexp> kids;
    bool is_atom() const { return kids.empty() && !atom.empty(); }
};

inline bool parse_sexp(const std::string& s, size_t& i, Sexp& out) {
    auto skip = [&]() {
        while (i < s.size() && (std::isspace((unsigned char)s[i]) || s[i] == ';')) {
            if (s[i] == ';')
                while (i < s.size() && s[i] != '\n') ++i;
            else
                ++i;
        }
    };
    skip();
    if (i >= s.size()) return false;
    if (s[i] == '(') {
        ++i;
        out = Sexp{};
        while (true) {
            skip();
            if (i >= s.size()) return false;
            if (s[i] == ')') {
                ++i;
                return true;
            }
            Sexp kid;
            if (!parse_sexp(s, i, kid)) return false;
            out.kids.push_back(std::move(kid));
        }
    }
    if (s[i] == '"') {
        size_t j = i + 1;
        while (j < s.size() && s[j] != '"') ++j;
        if (j >= s.size()) return false;
        out = Sexp{s.substr(i, j - i + 1), {}};
        i = j + 1;
        return true;
    }
    size_t j = i;
    while (j < s.size() && !std::isspace((unsigned char)s[j]) && s[j] != '(' && s[j] != ')') ++j;
    out = Sexp{s.substr(i, j - i), {}};
    i = j;
    return true;
}

inline bool sexp_value(const Sexp& v, Value& out) {
    if (v.is_atom()) {
        if (v.atom == "true") {
            out = true;
            return true;
        }
        if (v.atom == "false") {
            out = false;
            return true;
        }
        try {
            size_t used = 0;
            Int x = std::stoll(v.atom, &used);
            if (used == v.atom.size()) {
                out = x;
                return true;
            }
        } catch (...) {
        }
        return false;
    }
    // (- n)
    if (v.kids.size() == 2 && v.kids[0].atom == "-") {
        Value inner;
        if (sexp_value(v.kids[1], inner) && std::holds_alternative<Int>(inner)) {
            out = -std::get<Int>(inner);
            return true;
        }
    }
    return false;
}

} // namespace detail

class SmtSolver {
public:
    explicit SmtSolver(SolverConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.exe.empty())
            throw SolverError("no SMT solver configured; set BISIM_SMT_SOLVER or install z3");
    }

    SmtSolver(const SmtSolver&) = delete;
    SmtSolver& operator=(const SmtSolver&) = delete;

    ~SmtSolver() {
        if (proc_.alive()) {
            proc_.write_all("(exit)\n");
            proc_.terminate();
        }
    }

    const SolverConfig& config() const { return cfg_; }
    void reseed(unsigned seed) { cfg_.seed = seed; }
    int queries() const { return queries_; }
    double solver_seconds() const { return seconds_; }

    // Parses either a plain (get-value ...) reply, ((x 1) (y (- 2))), or a
    // (model (define-fun x () Int 1) ...) block.
    static Valuation parse_model(const std::string& text) {
        Valuation env;
        detail::Sexp root;
        size_t i = 0;
        if (!detail::parse_sexp(text, i, root)) return env;
        for (const auto& kid : root.kids) {
            if (kid.kids.size() >= 5 && kid.kids[0].atom == "define-fun") {
                if (kid.kids[2].kids.empty() && kid.kids[2].atom.empty()) {
                    Value v;
                    if (detail::sexp_value(kid.kids[4], v)) env[kid.kids[1].atom] = v;
                }
            } else if (kid.kids.size() == 2 && kid.kids[0].is_atom()) {
                Value v;
                if (detail::sexp_value(kid.kids[1], v)) env[kid.kids[0].atom] = v;
            }
        }
        return env;
    }

    static std::string script_for(const Term& assertion, unsigned seed, int timeout_ms) {
        auto decls = free_vars(assertion);
        std::ostringstream os;
        os << "(set-option :smt.random_seed " << seed << ")\n"
           << "(set-option :sat.random_seed " << seed << ")\n";
        if (timeout_ms > 0) os << "(set-option :timeout " << timeout_ms << ")\n";
        os << to_smtlib(decls, assertion, is_nonlinear(assertion) ? "QF_NIA" : "QF_LIA");
        return os.str();
    }

    SolverResult check_sat(const Term& assertion) {
        if (!assertion || assertion->sort != Sort::Bool)
            throw SolverError("check_sat needs a boolean term");
        auto t0 = std::chrono::steady_clock::now();
        SolverResult r = run_query(assertion);
        seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++queries_;
        if (r.kind == SolverResult::Kind::Sat && cfg_.validate_models) {
            Term grounded = substitute(assertion, r.model);
            if (!is_true(grounded))
                throw SolverError("solver model failed validation");
        }
        return r;
    }

private:
    SolverConfig cfg_;
    detail::Subprocess proc_;
    int queries_ = 0;
    double seconds_ = 0;

    [[noreturn]] void die(const std::string& msg) {
        std::string detail = proc_.err_buf;
        proc_.terminate();
        std::string full = msg + " (solver: " + cfg_.exe + ")";
        if (!detail.empty()) full += "\n" + detail;
        if (detail.find("Cannot find module") != std::string::npos)
            full += "\nhint: run `npm install` in tools/solver";
        throw SolverError(full);
    }

    SolverResult run_query(const Term& assertion) {
        auto decls = free_vars(assertion);
        bool respawned = !proc_.alive();
        if (!proc_.alive()) proc_.spawn(cfg_.exe, cfg_.args);

        // Watchdog wall-clock budget: the solver's own :timeout should fire
        // first; the slack covers process startup and I/O.
        auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(cfg_.timeout_ms + 30000);

        std::ostringstream phase1;
        if (!cfg_.fresh_process && !respawned) phase1 << "(reset)\n";
        phase1 << script_for(assertion, cfg_.seed, cfg_.timeout_ms) << "(check-sat)\n"
               << "(echo \"" << kMark1 << "\")\n";
        if (!proc_.write_all(phase1.str())) die("failed to write to solver");

        std::vector<std::string> lines;
        if (!proc_.read_until(kMark1, deadline, lines)) {
            if (std::chrono::steady_clock::now() >= deadline) {
                proc_.terminate();
                return {SolverResult::Kind::Unknown, {}, "watchdog timeout"};
            }
            die("solver exited unexpectedly");
        }

        std::string status;
        std::string first_error;
        for (const auto& line : lines) {
            if (line == "sat" || line == "unsat" || line == "unknown") {
                status = line;
                break;
            }
            if (first_error.empty() && line.rfind("(error", 0) == 0) first_error = line;
        }
        if (status.empty()) die("no solver verdict; output started with: " +
                                (lines.empty() ? std::string("<nothing>") : lines[0]) +
                                (first_error.empty() ? "" : "\n" + first_error));
        if (!first_error.empty()) die("solver reported " + first_error);

        SolverResult result;
        if (status == "unsat") {
            result.kind = SolverResult::Kind::Unsat;
        } else if (status == "unknown") {
            result.kind = SolverResult::Kind::Unknown;
            result.reason = "solver returned unknown";
            // A cancelled query can leave the process poisoned (the WASM
            // build keeps its interrupt flag across (reset)), so start over.
            if (!cfg_.fresh_process) {
                proc_.write_all("(exit)\n");
                proc_.terminate();
            }
        } else {
            result.kind = SolverResult::Kind::Sat;
            if (!decls.empty()) {
                std::ostringstream phase2;
                phase2 << "(get-value (";
                bool first = true;
                for (const auto& [name, sort] : decls) {
                    if (!first) phase2 << ' ';
                    phase2 << name;
                    first = false;
                }
                phase2 << "))\n(echo \"" << kMark2 << "\")\n";
                if (!proc_.write_all(phase2.str())) die("failed to write to solver");
                std::vector<std::string> mlines;
                if (!proc_.read_until(kMark2, deadline, mlines)) {
                    if (std::chrono::steady_clock::now() >= deadline) {
                        proc_.terminate();
                        return {SolverResult::Kind::Unknown, {}, "watchdog timeout"};
                    }
                    die("solver exited while reporting a model");
                }
                std::string blob;
                for (const auto& l : mlines) blob += l + "\n";
                result.model = parse_model(blob);
                for (const auto& [name, sort] : decls) {
                    auto it = result.model.find(name);
                    if (it == result.model.end())
                        die("model is missing '" + name + "'; got: " + blob);
                    bool is_int = std::holds_alternative<Int>(it->second);
                    if (is_int != (sort == Sort::Int)) die("model sort mismatch for '" + name + "'");
                }
            }
        }
        if (cfg_.fresh_process) {
            proc_.write_all("(exit)\n");
            proc_.terminate();
        }
        return result;
    }

    static constexpr const char* kMark1 = "##bisim-check##";
    static constexpr const char* kMark2 = "##bisim-model##";
};

// Persistent solver session with an assertion stack. Asserted terms stay with
// the process across queries, so a caller that accumulates constraints pays
// for each one once instead of re-sending (and re-solving) the whole set per
// query. Commands are buffered and flushed on check(), one round trip per
// query. A query that returns unknown closes the session: the process may
// carry a stale interrupt flag after a timeout, so it cannot be trusted again.
class IncrementalSolver {
  public:
    explicit IncrementalSolver(SolverConfig cfg, const std::string& logic = "QF_LIA")
        : cfg_(std::move(cfg)) {
        if (cfg_.exe.empty())
            throw SolverError("no SMT solver configured; set BISIM_SMT_SOLVER or install z3");
        proc_.spawn(cfg_.exe, cfg_.args);
        std::ostringstream os;
        os << "(set-option :smt.random_seed " << cfg_.seed << ")\n"
           << "(set-option :sat.random_seed " << cfg_.seed << ")\n";
        if (cfg_.timeout_ms > 0) os << "(set-option :timeout " << cfg_.timeout_ms << ")\n";
        os << "(set-logic " << logic << ")\n";
        pending_ = os.str();
        levels_.emplace_back();
    }

    IncrementalSolver(const IncrementalSolver&) = delete;
    IncrementalSolver& operator=(const IncrementalSolver&) = delete;

    ~IncrementalSolver() { close(); }

    bool poisoned() const { return poisoned_; }
    int queries() const { return queries_; }
    double solver_seconds() const { return seconds_; }

    void declare(const std::map<std::string, Sort>& vars) {
        for (const auto& [name, sort] : vars)
            if (declared_.insert(name).second)
                pending_ += "(declare-const " + name + (sort == Sort::Int ? " Int)\n" : " Bool)\n");
    }

    void assert_term(const Term& t) {
        if (!t || t->sort != Sort::Bool) throw SolverError("assert needs a boolean term");
        if (is_true(t)) return;
        auto fv = free_vars(t);
        std::map<std::string, Sort> missing;
        for (const auto& [name, sort] : fv)
            if (!declared_.count(name)) missing[name] = sort;
        if (!missing.empty()) {
            // Declarations made inside a push scope vanish at pop; requiring
            // them at the base level keeps the declared set truthful.
            if (levels_.size() > 1) throw SolverError("new symbol inside a push scope");
            declare(missing);
        }
        pending_ += "(assert " + bisim::to_smtlib(t) + ")\n";
        levels_.back().push_back(t);
    }

    void push() {
        pending_ += "(push 1)\n";
        levels_.emplace_back();
    }

    void pop() {
        if (poisoned_) return;
        if (levels_.size() <= 1) throw SolverError("pop without push");
        pending_ += "(pop 1)\n";
        levels_.pop_back();
    }

    SolverResult check(const std::map<std::string, Sort>& model_vars) {
        if (poisoned_) return {SolverResult::Kind::Unknown, {}, "solver session closed"};
        auto t0 = std::chrono::steady_clock::now();
        ++queries_;
        auto deadline = t0 + std::chrono::milliseconds(cfg_.timeout_ms + 30000);

        std::string script = pending_ + "(check-sat)\n(echo \"" + kMark + "\")\n";
        pending_.clear();
        if (!proc_.write_all(script)) die("failed to write to solver");

        std::vector<std::string> lines;
        if (!proc_.read_until(kMark, deadline, lines)) {
            close();
            seconds_ += elapsed(t0);
            if (std::chrono::steady_clock::now() >= deadline)
                return {SolverResult::Kind::Unknown, {}, "watchdog timeout"};
            die("solver exited unexpectedly");
        }
        std::string status, first_error;
        for (const auto& line : lines) {
            if (line == "sat" || line == "unsat" || line == "unknown") {
                status = line;
                break;
            }
            if (first_error.empty() && line.rfind("(error", 0) == 0) first_error = line;
        }
        if (!first_error.empty()) die("solver reported " + first_error);
        if (status.empty()) die("no solver verdict; output started with: " +
                                (lines.empty() ? std::string("<nothing>") : lines[0]));

        SolverResult result;
        if (status == "unsat") {
            result.kind = SolverResult::Kind::Unsat;
        } else if (status == "unknown") {
            result.kind = SolverResult::Kind::Unknown;
            result.reason = "solver returned unknown";
            close();
        } else {
            result.kind = SolverResult::Kind::Sat;
            if (!model_vars.empty()) {
                std::ostringstream q;
                q << "(get-value (";
                bool first = true;
                for (const auto& [name, sort] : model_vars) {
                    if (!first) q << ' ';
                    q << name;
                    first = false;
                }
                q << "))\n(echo \"" << kMark << "\")\n";
                if (!proc_.write_all(q.str())) die("failed to write to solver");
                std::vector<std::string> mlines;
                if (!proc_.read_until(kMark, deadline, mlines)) {
                    close();
                    seconds_ += elapsed(t0);
                    if (std::chrono::steady_clock::now() >= deadline)
                        return {SolverResult::Kind::Unknown, {}, "watchdog timeout"};
                    die("solver exited while reporting a model");
                }
                std::string blob;
                for (const auto& l : mlines) blob += l + "\n";
                result.model = SmtSolver::parse_model(blob);
                for (const auto& [name, sort] : model_vars) {
                    auto it = result.model.find(name);
                    if (it == result.model.end()) die("model is missing '" + name + "'");
                    bool is_int = std::holds_alternative<Int>(it->second);
                    if (is_int != (sort == Sort::Int)) die("model sort mismatch for '" + name + "'");
                }
            }
            if (cfg_.validate_models) {
                for (const auto& level : levels_)
                    for (const auto& t : level)
                        if (!is_true(substitute(t, result.model)))
                            die("solver model failed validation");
            }
        }
        seconds_ += elapsed(t0);
        return result;
    }

    void close() {
        if (proc_.alive()) {
            proc_.write_all("(exit)\n");
            proc_.terminate();
        }
        poisoned_ = true;
    }

  private:
    static double elapsed(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    [[noreturn]] void die(const std::string& msg) {
        std::string detail = proc_.err_buf;
        close();
        std::string full = msg + " (solver: " + cfg_.exe + ")";
        if (!detail.empty()) full += "\n" + detail;
        if (detail.find("Cannot find module") != std::string::npos)
            full += "\nhint: run `npm install` in tools/solver";
        throw SolverError(full);
    }

    SolverConfig cfg_;
    detail::Subprocess proc_;
    std::string pending_;
    std::set<std::string> declared_;
    std::vector<std::vector<Term>> levels_;
    bool poisoned_ = false;
    int queries_ = 0;
    double seconds_ = 0;

    static constexpr const char* kMark = "##bisim-step##";
};

} // namespace bisim

// popc: command-line front end. Each subcommand parses arguments, calls the
// library and prints the result; JSON goes to stdout, diagnostics to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "popc/convert.hpp"
#include "popc/core.hpp"
#include "popc/qfpa.hpp"
#include "popc/sim.hpp"
#include "popc/synth.hpp"
#include "popc/verify.hpp"

using namespace popc;
using nlohmann::json;

namespace {

enum Exit { ok = 0, failed = 1, usage = 2, internal = 3 };

// User-facing input problems (bad files, names, values).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t to_count(const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        throw UsageError("not a count: '" + s + "'");
    }
    if (used != s.size()) throw UsageError("not a count: '" + s + "'");
    return v;
}

// A computer file plus the optional annotations written by compile/convert.
struct Document {
    PopulationComputer computer;
    std::optional<Predicate> predicate;
    std::optional<SynthesisPlan> plan;
    std::optional<json> pipeline;
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
}

Document load(const std::string& path) {
    json j = read_json(path);
    Document d;
    try {
        d.computer = computer_from_json(j);
        if (j.contains("predicate")) d.predicate = predicate_from_json(j.at("predicate"));
        if (j.contains("plan")) d.plan = plan_from_json(j.at("plan"));
        if (j.contains("pipeline")) d.pipeline = j.at("pipeline");
    } catch (const json::exception& e) {
        throw UsageError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(path + ": " + e.what());
    }
    return d;
}

json document_json(const Document& d) {
    json j = to_json(d.computer);
    if (d.predicate) j["predicate"] = to_json(*d.predicate);
    if (d.plan) j["plan"] = to_json(*d.plan);
    if (d.pipeline) j["pipeline"] = *d.pipeline;
    return j;
}

void emit(const json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write '" + path + "'");
    return out;
}

Predicate parse_formula(const std::string& text) {
    try {
        return parse_predicate(text);
    } catch (const ParseError& e) {
        throw UsageError("cannot parse formula at position " + std::to_string(e.position()) + ": " + e.what());
    }
}

// "x=3,y=1" by name (needs a predicate) or "3,1" by position.
std::vector<Count> parse_input(const std::string& text, const std::optional<Predicate>& pred, std::size_t arity) {
    std::map<std::string, std::uint64_t> named;
    std::vector<Count> positional;
    for (const auto& item : split(text, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
            positional.push_back(to_count(item));
        } else {
            named[item.substr(0, eq)] = to_count(item.substr(eq + 1));
        }
    }
    if (!named.empty() && !positional.empty()) throw UsageError("mix of named and positional inputs");
    if (!named.empty()) {
        if (!pred) throw UsageError("named inputs need a predicate");
        try {
            auto x = make_input(*pred, named);
            return {x.begin(), x.end()};
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    positional.resize(std::max(positional.size(), arity), 0);
    if (positional.size() != arity) {
        throw UsageError("expected " + std::to_string(arity) + " inputs, got " + std::to_string(positional.size()));
    }
    return positional;
}

// Items "d" apply to threshold atoms in order; "j:d" names the 1-based atom.
DegreeOverrides parse_degrees(const std::string& text, const Predicate& p) {
    DegreeOverrides out;
    std::vector<std::size_t> thresholds;
    for (std::size_t j = 0; j < p.atoms.size(); ++j) {
        if (std::holds_alternative<ThresholdAtom>(p.atoms[j])) thresholds.push_back(j);
    }
    std::size_t next = 0;
    for (const auto& item : split(text, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) {
            if (next >= thresholds.size()) throw UsageError("more degrees than threshold atoms");
            out[thresholds[next++]] = unsigned(to_count(item));
        } else {
            const auto j = to_count(item.substr(0, colon));
            if (j == 0 || j > p.atoms.size() || !std::holds_alternative<ThresholdAtom>(p.atoms[j - 1])) {
                throw UsageError("atom " + item.substr(0, colon) + " is not a threshold atom");
            }
            out[j - 1] = unsigned(to_count(item.substr(colon + 1)));
        }
    }
    return out;
}

const char* kind_name(AtomPlan::Kind k) {
    switch (k) {
        case AtomPlan::Kind::remainder: return "remainder";
        case AtomPlan::Kind::threshold: return "threshold";
        default: return "constant";
    }
}

json stats_json(const RunStats& s) {
    return {{"trials", s.trials},
            {"mean", s.mean},
            {"stddev", s.stddev},
            {"min", s.min},
            {"max", s.max},
            {"outputs", {{"0", s.histogram[0]}, {"1", s.histogram[1]}, {"undefined", s.histogram[2]}}},
            {"capped", s.capped}};
}

// Converted documents run as the distributed pairwise protocol; plain binary
// helper-free computers run directly; anything else needs the fair scheduler.
struct Runner {
    std::unique_ptr<DistributedProtocol> distributed;
    std::unique_ptr<ExplicitPairProtocol> direct;
    const PairProtocol* pair() const {
        if (distributed) return distributed.get();
        return direct.get();
    }
};

Runner runner_for(const Document& d) {
    Runner r;
    if (d.pipeline) {
        r.distributed = std::make_unique<DistributedProtocol>(d.computer);
    } else if (d.computer.is_binary() && d.computer.helpers.empty()) {
        r.direct = std::make_unique<ExplicitPairProtocol>(d.computer);
    }
    return r;
}

struct Options {
    std::string formula, file, out = "-", csv, pipeline = "fast", predicate, input, degrees, sizes;
    std::uint64_t seed = 1, trials = 10, max_interactions = 1000000000, max_configs = 1000000;
    std::uint64_t inputs_up_to = 0, helper_slack = 0, max_entries = 4000000, vars = 0;
    unsigned jobs = 1;
    bool doubled = false, synthesize = false, as_json = false;
};

int cmd_eval(const Options& o) {
    Predicate p = parse_formula(o.formula);
    auto x = parse_input(o.input, p, p.variable_count());
    std::cout << (eval(p, InputVector(x.begin(), x.end())) ? 1 : 0) << "\n";
    return ok;
}

int cmd_compile(const Options& o) {
    Predicate p = parse_formula(o.formula);
    if (o.doubled) p = double_predicate(p);
    DegreeOverrides deg = parse_degrees(o.degrees, p);
    Compiled c;
    try {
        c = compile_with_plan(p, deg);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    Document d{std::move(c.computer), p, std::move(c.plan), std::nullopt};
    emit(document_json(d), o.out);
    return ok;
}

int cmd_info(const Options& o) {
    Document d = load(o.file);
    const PopulationComputer& p = d.computer;
    json j = {{"states", p.state_count()},
              {"helpers", p.helpers.size()},
              {"transitions", p.transitions().size()},
              {"inputs", p.inputs.size()},
              {"max_arity", p.max_arity()},
              {"binary", p.is_binary()},
              {"size", p.total_size()},
              {"problems", validate(p)}};
    if (d.predicate) {
        j["predicate"] = to_string(*d.predicate);
        j["size_bits"] = size_bits(*d.predicate);
    }
    if (d.plan) {
        json subs = json::array();
        for (const auto& s : subcomputer_stats(p, *d.plan)) {
            subs.push_back({{"prefix", s.prefix},
                            {"kind", kind_name(s.kind)},
                            {"degree", s.degree},
                            {"states", s.states},
                            {"transitions", s.transitions},
                            {"helpers", s.helpers}});
        }
        j["subcomputers"] = subs;
    }
    if (d.pipeline) j["pipeline"] = *d.pipeline;
    if (o.as_json) {
        std::cout << j.dump(2) << "\n";
        return ok;
    }
    std::cout << "states: " << p.state_count() << "\nhelpers: " << p.helpers.size()
              << "\ntransitions: " << p.transitions().size() << "\nsize: " << p.total_size() << "\n";
    if (d.predicate) std::cout << "predicate: " << to_string(*d.predicate) << "\n";
    if (d.plan) {
        for (const auto& s : j["subcomputers"]) {
            std::cout << "subcomputer " << s["prefix"].get<std::string>() << " " << s["kind"].get<std::string>();
            if (s["kind"] != "constant") {
                std::cout << " degree " << s["degree"] << ": " << s["states"] << " states, " << s["helpers"]
                          << " helpers, " << s["transitions"] << " transitions";
            }
            std::cout << "\n";
        }
    }
    for (const auto& problem : validate(p)) std::cout << "problem: " << problem << "\n";
    return ok;
}

int cmd_convert(const Options& o) {
    Document d = load(o.file);
    PipelineResult r;
    try {
        r = run_pipeline(d.computer, o.pipeline == "fast" ? PipelineMode::fast : PipelineMode::full);
    } catch (const std::invalid_argument& e) {
        std::cerr << "convert: " << e.what() << "\n";
        return failed;
    }
    Document out{r.stages.back().computer, d.predicate, std::nullopt, to_json(r.report)};
    emit(document_json(out), o.out);
    std::cerr << "stages ok; protocol states " << r.report.protocol_states << ", minimum population "
              << r.report.min_input << "\n";
    return ok;
}

int cmd_simulate(const Options& o) {
    Document d = load(o.file);
    Runner run = runner_for(d);
    auto counts = parse_input(o.input, d.predicate,
                              d.predicate ? d.predicate->variable_count() : d.computer.inputs.size());
    const std::vector<Count> full = counts;
    // Conversion folds primed inputs of a doubled predicate into the originals.
    for (std::size_t i = d.computer.inputs.size(); i < counts.size(); ++i) {
        if (counts[i]) throw UsageError("input " + std::to_string(i + 1) + " has no agents in this computer");
    }
    counts.resize(d.computer.inputs.size());
    RunStats s = run.pair() ? estimate(*run.pair(), initial(*run.pair(), counts), o.trials, o.seed,
                                       o.max_interactions, o.jobs)
                            : estimate_fair(d.computer, initial(d.computer, counts), o.trials, o.seed,
                                            o.max_interactions, o.jobs);
    json j = stats_json(s);
    bool agree = true;
    if (d.predicate) {
        const bool expected = eval(*d.predicate, InputVector(full.begin(), full.end()));
        j["expected"] = expected ? 1 : 0;
        agree = s.histogram[expected ? 1 : 0] == s.trials;
        j["agree"] = agree;
    }
    if (!o.csv.empty()) {
        auto out = open_out(o.csv);
        write_trials_csv(out, s.results);
    }
    std::cout << j.dump(2) << "\n";
    return agree ? ok : failed;
}

// Every input vector with entries summing to at most `total`.
void for_inputs(std::size_t vars, std::uint64_t total, const std::function<void(const InputVector&)>& f) {
    InputVector in(vars);
    std::function<void(std::size_t, std::uint64_t)> rec = [&](std::size_t i, std::uint64_t left) {
        if (i == vars) return f(in);
        for (std::uint64_t k = 0; k <= left; ++k) {
            in[i] = k;
            rec(i + 1, left - k);
        }
    };
    rec(0, total);
}

int cmd_verify(const Options& o) {
    Document d = load(o.file);
    std::optional<Predicate> pred = d.predicate;
    if (!o.predicate.empty()) pred = parse_formula(o.predicate);
    if (!pred) throw UsageError("verify needs --predicate or a compiled file");
    if (pred->variable_count() != d.computer.inputs.size()) throw UsageError("predicate arity differs from the computer");
    std::vector<InputVector> inputs;
    if (!o.input.empty()) {
        auto x = parse_input(o.input, pred, d.computer.inputs.size());
        inputs.emplace_back(x.begin(), x.end());
    } else {
        for_inputs(pred->variable_count(), o.inputs_up_to, [&](const InputVector& x) { inputs.push_back(x); });
    }
    json reports = json::array();
    std::size_t passed = 0, indeterminate = 0;
    for (const auto& x : inputs) {
        auto r = check_correct(d.computer, *pred, x, o.helper_slack, o.max_configs);
        passed += r.pass();
        indeterminate += r.indeterminate();
        reports.push_back(to_json(r, d.computer));
    }
    json j = {{"inputs", inputs.size()},
              {"passed", passed},
              {"indeterminate", indeterminate},
              {"pass", passed == inputs.size()},
              {"reports", reports}};
    if (o.synthesize) {
        auto syn = synthesize_potential(d.computer, o.max_entries);
        j["potential"] = syn.weights ? json{{"weights", syn.weights->weight}} : json{{"witness", nullptr}};
        if (syn.witness) {
            json w = json::array();
            for (const auto& y : *syn.witness) w.push_back(y.str());
            j["potential"]["witness"] = w;
        }
    }
    emit(j, o.out);
    std::cerr << passed << "/" << inputs.size() << " inputs pass";
    if (indeterminate) std::cerr << ", " << indeterminate << " hit the exploration cap";
    std::cerr << "\n";
    return passed == inputs.size() ? ok : failed;
}

int cmd_potential(const Options& o) {
    Document d = load(o.file);
    json j;
    bool good = true;
    if (o.synthesize) {
        auto syn = synthesize_potential(d.computer, o.max_entries);
        if (syn.weights) {
            j["weights"] = syn.weights->weight;
            j["max"] = syn.weights->max();
            good = !check_potential(d.computer, *syn.weights).has_value();
        } else {
            json w = json::array();
            for (const auto& y : *syn.witness) w.push_back(y.str());
            j["witness"] = w;
            j["witness_checked"] = is_unbounded_witness(d.computer, *syn.witness);
            good = false;
        }
    } else {
        if (!d.plan) throw UsageError("closed-form weights need a compiled file; use --synthesize");
        auto w = potential(d.computer);
        j["weights"] = w.weight;
        j["max"] = w.max();
        if (auto bad = check_potential(d.computer, w)) {
            j["violated_transition"] = *bad;
            good = false;
        }
    }
    j["pass"] = good;
    emit(j, o.out);
    return good ? ok : failed;
}

int cmd_bench(const Options& o) {
    Document d = load(o.file);
    Runner run = runner_for(d);
    if (!run.pair()) throw UsageError("bench needs a converted or binary helper-free computer");
    std::vector<Count> sizes;
    for (const auto& s : split(o.sizes, ',')) sizes.push_back(to_count(s));
    if (sizes.size() < 2) throw UsageError("bench needs at least two sizes");
    const std::size_t vars = o.vars ? o.vars : run.pair()->input_states().size();
    InputMaker make;
    try {
        make = balanced_inputs(*run.pair(), vars);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    auto rows = scaling_bench(*run.pair(), make, sizes, o.trials, o.seed, o.max_interactions, o.jobs);
    if (!o.csv.empty()) {
        auto out = open_out(o.csv);
        write_bench_csv(out, rows);
    }
    json j = {{"slope", loglog_slope(rows)}};
    for (const auto& r : rows) j["rows"].push_back({{"n", r.n}, {"stats", stats_json(r.stats)}});
    std::cout << j.dump(2) << "\n";
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Population computers: compile, convert, simulate and verify"};
    app.require_subcommand(1, 1);
    Options o;

    auto* ev = app.add_subcommand("eval", "Evaluate a predicate on one input");
    ev->add_option("formula", o.formula, "Predicate, e.g. \"x - y >= 1\"")->required();
    ev->add_option("--input", o.input, "Assignment, e.g. x=3,y=1")->required();

    auto* co = app.add_subcommand("compile", "Compile a predicate to a population computer");
    co->add_option("formula", o.formula, "Predicate")->required();
    co->add_option("-o,--output", o.out, "Output file (default stdout)");
    co->add_option("--threshold-degree", o.degrees, "Degrees for threshold atoms: d,... or atom:d,...");
    co->add_flag("--double", o.doubled, "Compile phi(x + 2x') instead of phi(x)");

    auto* in = app.add_subcommand("info", "Summarise a computer file");
    in->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    in->add_flag("--json", o.as_json, "Machine-readable output");

    auto* cv = app.add_subcommand("convert", "Run the conversion pipeline");
    cv->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    cv->add_option("--pipeline", o.pipeline, "fast or full")->check(CLI::IsMember({"fast", "full"}));
    cv->add_option("-o,--output", o.out, "Output file (default stdout)");

    auto* si = app.add_subcommand("simulate", "Simulate runs from one input");
    si->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    si->add_option("--input", o.input, "Assignment, e.g. x=3,y=1 or 3,1")->required();
    si->add_option("--seed", o.seed);
    si->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
    si->add_option("--max-interactions", o.max_interactions)->check(CLI::PositiveNumber);
    si->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
    si->add_option("--csv", o.csv, "Per-trial CSV");

    auto* ve = app.add_subcommand("verify", "Exhaustively check small inputs");
    ve->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    ve->add_option("--predicate", o.predicate, "Predicate (default: the one compiled into the file)");
    auto* one = ve->add_option("--input", o.input, "A single input");
    auto* upto = ve->add_option("--inputs-up-to", o.inputs_up_to, "All inputs of total size <= N");
    one->excludes(upto);
    ve->add_option("--helper-slack", o.helper_slack, "Extra helpers to try");
    ve->add_option("--max-configs", o.max_configs, "Exploration cap per initial configuration")
        ->check(CLI::PositiveNumber);
    ve->add_flag("--synthesize", o.synthesize, "Also synthesise a potential by linear programming");
    ve->add_option("--max-entries", o.max_entries, "Size limit for the linear program");
    ve->add_option("-o,--output", o.out, "Report file (default stdout)");

    auto* po = app.add_subcommand("potential", "Potential weights for bounded termination");
    po->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    po->add_flag("--synthesize", o.synthesize, "Synthesise by linear programming instead of the closed form");
    po->add_option("--max-entries", o.max_entries, "Size limit for the linear program");
    po->add_option("-o,--output", o.out, "Output file (default stdout)");

    auto* be = app.add_subcommand("bench", "Interactions to termination across population sizes");
    be->add_option("file", o.file)->required()->check(CLI::ExistingFile);
    be->add_option("--sizes", o.sizes, "Population sizes, e.g. 256,512,1024")->required();
    be->add_option("--vars", o.vars, "Spread agents over the first k inputs (default all)");
    be->add_option("--seed", o.seed);
    be->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
    be->add_option("--max-interactions", o.max_interactions)->check(CLI::PositiveNumber);
    be->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
    be->add_option("--csv", o.csv, "Per-size CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*ev) return cmd_eval(o);
        if (*co) return cmd_compile(o);
        if (*in) return cmd_info(o);
        if (*cv) return cmd_convert(o);
        if (*si) return cmd_simulate(o);
        if (*ve) return cmd_verify(o);
        if (*po) return cmd_potential(o);
        if (*be) return cmd_bench(o);
    } catch (const UsageError& e) {
        std::cerr << "popc: " << e.what() << "\n";
        return usage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "popc: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "popc: internal error: " << e.what() << "\n";
        return internal;
    }
    return usage;
}

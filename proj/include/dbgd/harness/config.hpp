#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dbgd/core.hpp"
#include "dbgd/direction.hpp"
#include "dbgd/problems.hpp"
#include "dbgd/solver.hpp"

namespace dbgd::harness {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Schema (see docs/config_schema.md)
// ---------------------------------------------------------------------------

struct ToyProblemConfig {
    bool operator==(const ToyProblemConfig&) const = default;
};

struct MatfacProblemConfig {
    int n = 10;
    int r = 10;
    double alpha = 1.0;
    std::string variant = "smooth-l1";
    double noise_std = 0.1;
    std::uint64_t seed = 0;
    bool operator==(const MatfacProblemConfig&) const = default;
};

struct QuadraticProblemConfig {
    int n = 3;
    double box_radius = 0.5;
    bool operator==(const QuadraticProblemConfig&) const = default;
};

using ProblemConfig = std::variant<ToyProblemConfig, MatfacProblemConfig, QuadraticProblemConfig>;

/// One entry of "methods". Every parameter holds a list of values; the block
/// expands to the cartesian product of its lists.
struct MethodBlock {
    std::string type;  ///< dbgd, penalty, bloop
    std::string rule;  ///< dbgd only: grad_norm_sq, barrier_min, linearization
    std::vector<std::pair<std::string, std::vector<double>>> grid;  ///< fixed key order per method
    bool scale_step = true;  ///< penalty only
    bool operator==(const MethodBlock&) const = default;
};

struct StepConfig {
    std::string mode = "constant";  ///< constant or theorem
    double eta = 1e-2;
    double p = 0.0;
    bool operator==(const StepConfig&) const = default;
};

struct StopConfig {
    double eps_f = 0.0;
    double eps_g = 0.0;
    bool operator==(const StopConfig&) const = default;
};

struct RunConfig {
    std::optional<std::vector<double>> x0;
    std::optional<std::uint64_t> x0_seed;
    double x0_scale = 0.1;
    std::size_t iterations = 1000;
    StepConfig step;
    double guard = kDefaultDegeneracyGuard;
    std::optional<StopConfig> stop;
    std::optional<int> workers;
    bool operator==(const RunConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "out";
    std::size_t trace_stride = 1;
    bool operator==(const OutputConfig&) const = default;
};

struct RatesConfig {
    std::vector<double> p;
    std::vector<std::size_t> K;
    double tolerance = 0.3;
    bool operator==(const RatesConfig&) const = default;
};

struct ClassificationConfig {
    double case1_lambda_max = 0.1;
    double case1_grad_f_sq_max = 1e-2;
    double case2_cos_max = -0.99;
    double case2_lambda_min = 10.0;
    bool operator==(const ClassificationConfig&) const = default;
};

/// KKT report at each run's final row.
struct KktConfig {
    double eps_p = 1e-3;
    double eps_d = 1e-3;
    double ls_tol = 1e-10;
    bool operator==(const KktConfig&) const = default;
};

struct ExperimentConfig {
    std::string name;
    std::string description;
    ProblemConfig problem;
    std::vector<MethodBlock> methods;
    RunConfig run;
    OutputConfig output;
    std::optional<RatesConfig> rates;
    std::vector<std::vector<double>> initializations;  ///< empty when absent
    std::optional<ClassificationConfig> classification;
    std::optional<KktConfig> kkt;
    bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Source positions. nlohmann::json keeps none, so a small scanner over the
// (already validated) text maps each JSON pointer to its line.
// ---------------------------------------------------------------------------

namespace detail {

class LineIndex {
   public:
    explicit LineIndex(const std::string& text) : text_(text) {
        skip_ws();
        if (pos_ < text_.size()) value("");
    }
    int line_of(const std::string& pointer) const {
        std::string p = pointer;
        while (true) {
            if (auto it = lines_.find(p); it != lines_.end()) return it->second;
            const auto cut = p.rfind('/');
            if (cut == std::string::npos || p.empty()) return 0;
            p.erase(cut);
        }
    }

   private:
    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                       text_[pos_] == '\r')) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }
    std::string string_token() {
        std::string out;
        ++pos_;  // opening quote
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
            out += text_[pos_++];
        }
        ++pos_;
        return out;
    }
    static std::string escape(const std::string& key) {
        std::string out;
        for (char c : key) {
            if (c == '~') out += "~0";
            else if (c == '/') out += "~1";
            else out += c;
        }
        return out;
    }
    void value(const std::string& pointer) {
        skip_ws();
        lines_.emplace(pointer, line_);
        if (pos_ >= text_.size()) return;
        const char c = text_[pos_];
        if (c == '{') {
            ++pos_;
            skip_ws();
            if (text_[pos_] == '}') {
                ++pos_;
                return;
            }
            while (pos_ < text_.size()) {
                skip_ws();
                const int key_line = line_;
                const std::string key = string_token();
                const std::string child = pointer + "/" + escape(key);
                skip_ws();
                ++pos_;  // colon
                value(child);
                lines_[child] = key_line;
                skip_ws();
                if (text_[pos_++] == '}') return;
            }
        } else if (c == '[') {
            ++pos_;
            skip_ws();
            if (text_[pos_] == ']') {
                ++pos_;
                return;
            }
            for (std::size_t i = 0; pos_ < text_.size(); ++i) {
                value(pointer + "/" + std::to_string(i));
                skip_ws();
                if (text_[pos_++] == ']') return;
            }
        } else if (c == '"') {
            string_token();
        } else {
            while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos)
                ++pos_;
        }
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::map<std::string, int> lines_;
};

/// Raised during schema checks; carries the JSON pointer of the offending field.
struct FieldError {
    std::string pointer;
    std::string message;
};

class Reader {
   public:
    Reader(const json& node, std::string pointer) : node_(node), pointer_(std::move(pointer)) {}

    const std::string& pointer() const { return pointer_; }
    const json& node() const { return node_; }

    [[noreturn]] void fail(const std::string& message, const std::string& child = "") const {
        throw FieldError{child.empty() ? pointer_ : pointer_ + "/" + child, message};
    }

    void require_object(std::initializer_list<const char*> allowed) const {
        if (!node_.is_object()) fail("expected an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, _] : node_.items())
            if (!ok.count(key)) fail("unknown key '" + key + "'", key);
    }

    bool has(const char* key) const { return node_.contains(key); }
    Reader child(const char* key) const {
        if (!has(key)) fail(std::string("missing required key '") + key + "'");
        return Reader(node_.at(key), pointer_ + "/" + key);
    }
    Reader element(std::size_t i) const { return Reader(node_.at(i), pointer_ + "/" + std::to_string(i)); }

    double number() const {
        if (!node_.is_number()) fail("expected a number");
        const double v = node_.get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }
    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("must be positive");
        return v;
    }
    std::int64_t integer() const {
        if (node_.is_number_integer()) return node_.get<std::int64_t>();
        if (node_.is_number_float()) {
            const double v = node_.get<double>();
            if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
        }
        fail("expected an integer");
    }
    std::uint64_t unsigned_integer() const {
        if (node_.is_number_unsigned()) return node_.get<std::uint64_t>();
        const std::int64_t v = integer();
        if (v < 0) fail("must be non-negative");
        return static_cast<std::uint64_t>(v);
    }
    std::string string() const {
        if (!node_.is_string()) fail("expected a string");
        return node_.get<std::string>();
    }
    bool boolean() const {
        if (!node_.is_boolean()) fail("expected true or false");
        return node_.get<bool>();
    }
    std::size_t array_size() const {
        if (!node_.is_array()) fail("expected an array");
        return node_.size();
    }
    /// A scalar or a non-empty list of numbers.
    std::vector<double> number_grid() const {
        if (node_.is_number()) return {number()};
        if (!node_.is_array()) fail("expected a number or a list of numbers");
        if (node_.empty()) fail("parameter grid is empty");
        std::vector<double> out;
        for (std::size_t i = 0; i < node_.size(); ++i) out.push_back(element(i).number());
        return out;
    }
    std::vector<double> number_list() const {
        const std::size_t n = array_size();
        std::vector<double> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(element(i).number());
        return out;
    }

   private:
    const json& node_;
    std::string pointer_;
};

inline ProblemConfig parse_problem(const Reader& r) {
    if (!r.node().is_object()) r.fail("expected an object");
    const std::string name = r.child("name").string();
    if (name == "toy") {
        r.require_object({"name"});
        return ToyProblemConfig{};
    }
    if (name == "matrix_factorization") {
        r.require_object({"name", "n", "r", "alpha", "variant", "noise_std", "seed"});
        MatfacProblemConfig c;
        if (r.has("n")) c.n = static_cast<int>(r.child("n").integer());
        if (r.has("r")) c.r = static_cast<int>(r.child("r").integer());
        if (c.r < 1 || c.n < c.r) r.fail("requires n >= r >= 1", "r");
        if (c.n > 100000) r.fail("n is too large", "n");
        if (r.has("alpha")) c.alpha = r.child("alpha").positive();
        if (r.has("variant")) {
            c.variant = r.child("variant").string();
            if (c.variant != "smooth-l1" && c.variant != "log-smooth")
                r.fail("expected smooth-l1 or log-smooth", "variant");
        }
        if (r.has("noise_std")) {
            c.noise_std = r.child("noise_std").number();
            if (c.noise_std < 0.0) r.fail("must be non-negative", "noise_std");
        }
        if (r.has("seed")) c.seed = r.child("seed").unsigned_integer();
        return c;
    }
    if (name == "quadratic") {
        r.require_object({"name", "n", "box_radius"});
        QuadraticProblemConfig c;
        if (r.has("n")) c.n = static_cast<int>(r.child("n").integer());
        if (c.n < 1 || c.n > 1000000) r.fail("requires n >= 1", "n");
        if (r.has("box_radius")) c.box_radius = r.child("box_radius").positive();
        return c;
    }
    r.fail("unknown problem '" + name + "' (expected toy, matrix_factorization or quadratic)", "name");
}

inline MethodBlock parse_method(const Reader& r) {
    if (!r.node().is_object()) r.fail("expected an object");
    MethodBlock m;
    m.type = r.child("type").string();
    auto grid_param = [&](const char* key, std::optional<double> fallback, auto check) {
        std::vector<double> values;
        if (r.has(key)) {
            const Reader c = r.child(key);
            values = c.number_grid();
            for (std::size_t i = 0; i < values.size(); ++i)
                if (const char* why = check(values[i]))
                    (c.node().is_array() ? c.element(i) : c).fail(why);
        } else if (fallback) {
            values = {*fallback};
        } else {
            r.fail(std::string("missing required key '") + key + "'");
        }
        m.grid.emplace_back(key, std::move(values));
    };
    auto unit = [](double v) -> const char* { return v >= 0.0 && v <= 1.0 ? nullptr : "must lie in [0, 1]"; };
    auto pos = [](double v) -> const char* { return v > 0.0 ? nullptr : "must be positive"; };
    auto nonneg = [](double v) -> const char* { return v >= 0.0 ? nullptr : "must be non-negative"; };

    if (m.type == "dbgd") {
        m.rule = r.has("rule") ? r.child("rule").string() : "grad_norm_sq";
        if (m.rule == "grad_norm_sq") {
            r.require_object({"type", "rule", "beta"});
            grid_param("beta", 1.0, unit);
        } else if (m.rule == "barrier_min") {
            r.require_object({"type", "rule", "alpha", "beta"});
            grid_param("alpha", 1.0, pos);
            grid_param("beta", 1.0, pos);
        } else if (m.rule == "linearization") {
            r.require_object({"type", "rule", "eta"});
            grid_param("eta", std::nullopt, pos);
        } else {
            r.fail("unknown rule '" + m.rule + "' (expected grad_norm_sq, barrier_min or linearization)", "rule");
        }
    } else if (m.type == "penalty") {
        r.require_object({"type", "lambda", "scale_step"});
        grid_param("lambda", std::nullopt, nonneg);
        if (r.has("scale_step")) m.scale_step = r.child("scale_step").boolean();
    } else if (m.type == "bloop") {
        r.require_object({"type", "beta"});
        grid_param("beta", 1.0, nonneg);
    } else {
        r.fail("unknown method type '" + m.type + "' (expected dbgd, penalty or bloop)", "type");
    }
    return m;
}

inline RunConfig parse_run(const Reader& r) {
    r.require_object({"x0", "x0_seed", "x0_scale", "iterations", "step", "guard", "stop", "workers"});
    RunConfig c;
    if (r.has("x0") && r.has("x0_seed")) r.fail("give either x0 or x0_seed, not both", "x0_seed");
    if (r.has("x0")) {
        c.x0 = r.child("x0").number_list();
        if (c.x0->empty()) r.fail("x0 is empty", "x0");
    }
    if (r.has("x0_seed")) c.x0_seed = r.child("x0_seed").unsigned_integer();
    if (r.has("x0_scale")) {
        if (!c.x0_seed) r.fail("x0_scale is only valid together with x0_seed", "x0_scale");
        c.x0_scale = r.child("x0_scale").number();
        if (c.x0_scale < 0.0) r.fail("must be non-negative", "x0_scale");
    }
    const std::int64_t k = r.child("iterations").integer();
    if (k < 1) r.fail("must be at least 1", "iterations");
    c.iterations = static_cast<std::size_t>(k);
    if (r.has("step")) {
        const Reader s = r.child("step");
        if (!s.node().is_object()) s.fail("expected an object");
        c.step.mode = s.child("mode").string();
        if (c.step.mode == "constant") {
            s.require_object({"mode", "eta"});
            c.step.eta = s.child("eta").positive();
        } else if (c.step.mode == "theorem") {
            s.require_object({"mode", "p"});
            c.step.p = s.child("p").number();
            if (c.step.p < 0.0) s.fail("must be non-negative", "p");
        } else {
            s.fail("unknown step mode '" + c.step.mode + "' (expected constant or theorem)", "mode");
        }
    } else {
        r.fail("missing required key 'step'");
    }
    if (r.has("guard")) c.guard = r.child("guard").positive();
    if (r.has("stop")) {
        const Reader s = r.child("stop");
        s.require_object({"eps_f", "eps_g"});
        StopConfig stop;
        stop.eps_f = s.child("eps_f").number();
        stop.eps_g = s.child("eps_g").number();
        if (stop.eps_f < 0.0) s.fail("must be non-negative", "eps_f");
        if (stop.eps_g < 0.0) s.fail("must be non-negative", "eps_g");
        c.stop = stop;
    }
    if (r.has("workers")) {
        const std::int64_t w = r.child("workers").integer();
        if (w < 1 || w > 4096) r.fail("must be between 1 and 4096", "workers");
        c.workers = static_cast<int>(w);
    }
    return c;
}

inline ExperimentConfig parse_document(const json& doc) {
    const Reader root(doc, "");
    root.require_object({"name", "description", "problem", "methods", "run", "output", "rates", "initializations",
                         "classification", "kkt"});
    ExperimentConfig c;
    if (root.has("name")) c.name = root.child("name").string();
    if (root.has("description")) c.description = root.child("description").string();
    c.problem = parse_problem(root.child("problem"));

    const Reader methods = root.child("methods");
    const std::size_t count = methods.array_size();
    if (count == 0) methods.fail("methods list is empty");
    for (std::size_t i = 0; i < count; ++i) c.methods.push_back(parse_method(methods.element(i)));

    c.run = parse_run(root.child("run"));

    const Reader out = root.child("output");
    out.require_object({"directory", "trace_stride"});
    c.output.directory = out.child("directory").string();
    if (c.output.directory.empty()) out.fail("must not be empty", "directory");
    if (out.has("trace_stride")) {
        const std::int64_t s = out.child("trace_stride").integer();
        if (s < 1) out.fail("must be at least 1", "trace_stride");
        c.output.trace_stride = static_cast<std::size_t>(s);
    }

    if (root.has("rates")) {
        const Reader r = root.child("rates");
        r.require_object({"p", "K", "tolerance"});
        RatesConfig rates;
        rates.p = r.child("p").number_grid();
        for (std::size_t i = 0; i < rates.p.size(); ++i)
            if (rates.p[i] < 0.0) r.fail("must be non-negative", "p");
        const Reader ks = r.child("K");
        const std::size_t nk = ks.array_size();
        if (nk < 3) ks.fail("needs at least 3 values of K");
        for (std::size_t i = 0; i < nk; ++i) {
            const std::int64_t k = ks.element(i).integer();
            if (k < 1) ks.element(i).fail("must be at least 1");
            rates.K.push_back(static_cast<std::size_t>(k));
        }
        if (r.has("tolerance")) rates.tolerance = r.child("tolerance").number();
        c.rates = rates;
    }

    if (root.has("initializations")) {
        const Reader inits = root.child("initializations");
        const std::size_t n = inits.array_size();
        if (n == 0) inits.fail("initializations list is empty");
        for (std::size_t i = 0; i < n; ++i) {
            auto x = inits.element(i).number_list();
            if (x.empty()) inits.element(i).fail("initial point is empty");
            c.initializations.push_back(std::move(x));
        }
    }

    if (root.has("classification")) {
        const Reader r = root.child("classification");
        r.require_object({"case1_lambda_max", "case1_grad_f_sq_max", "case2_cos_max", "case2_lambda_min"});
        ClassificationConfig cl;
        if (r.has("case1_lambda_max")) cl.case1_lambda_max = r.child("case1_lambda_max").number();
        if (r.has("case1_grad_f_sq_max")) cl.case1_grad_f_sq_max = r.child("case1_grad_f_sq_max").number();
        if (r.has("case2_cos_max")) cl.case2_cos_max = r.child("case2_cos_max").number();
        if (r.has("case2_lambda_min")) cl.case2_lambda_min = r.child("case2_lambda_min").number();
        c.classification = cl;
    }

    if (root.has("kkt")) {
        const Reader r = root.child("kkt");
        r.require_object({"eps_p", "eps_d", "ls_tol"});
        KktConfig k;
        k.eps_p = r.child("eps_p").positive();
        k.eps_d = r.child("eps_d").positive();
        if (r.has("ls_tol")) k.ls_tol = r.child("ls_tol").positive();
        c.kkt = k;
    }
    return c;
}

}  // namespace detail

/// Parses and validates a config document. `source` names it in messages,
/// which read "<source>:<line>: <pointer>: <what>".
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": syntax error: " + e.what());
    }
    try {
        return detail::parse_document(doc);
    } catch (const detail::FieldError& e) {
        const int line = detail::LineIndex(text).line_of(e.pointer);
        const std::string field = e.pointer.empty() ? "/" : e.pointer;
        throw ConfigError(source + ":" + std::to_string(line) + ": " + field + ": " + e.message);
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Serialization back to JSON (every default made explicit)
// ---------------------------------------------------------------------------

inline ordered_json to_json(const ExperimentConfig& c) {
    ordered_json j;
    if (!c.name.empty()) j["name"] = c.name;
    if (!c.description.empty()) j["description"] = c.description;

    ordered_json p;
    std::visit(
        [&](const auto& pc) {
            using T = std::decay_t<decltype(pc)>;
            if constexpr (std::is_same_v<T, ToyProblemConfig>) {
                p["name"] = "toy";
            } else if constexpr (std::is_same_v<T, MatfacProblemConfig>) {
                p["name"] = "matrix_factorization";
                p["n"] = pc.n;
                p["r"] = pc.r;
                p["alpha"] = pc.alpha;
                p["variant"] = pc.variant;
                p["noise_std"] = pc.noise_std;
                p["seed"] = pc.seed;
            } else {
                p["name"] = "quadratic";
                p["n"] = pc.n;
                p["box_radius"] = pc.box_radius;
            }
        },
        c.problem);
    j["problem"] = p;

    ordered_json methods = ordered_json::array();
    for (const auto& m : c.methods) {
        ordered_json mj;
        mj["type"] = m.type;
        if (m.type == "dbgd") mj["rule"] = m.rule;
        for (const auto& [key, values] : m.grid) mj[key] = values;
        if (m.type == "penalty") mj["scale_step"] = m.scale_step;
        methods.push_back(mj);
    }
    j["methods"] = methods;

    ordered_json run;
    if (c.run.x0) run["x0"] = *c.run.x0;
    if (c.run.x0_seed) {
        run["x0_seed"] = *c.run.x0_seed;
        run["x0_scale"] = c.run.x0_scale;
    }
    run["iterations"] = c.run.iterations;
    if (c.run.step.mode == "constant")
        run["step"] = {{"mode", "constant"}, {"eta", c.run.step.eta}};
    else
        run["step"] = {{"mode", "theorem"}, {"p", c.run.step.p}};
    run["guard"] = c.run.guard;
    if (c.run.stop) run["stop"] = {{"eps_f", c.run.stop->eps_f}, {"eps_g", c.run.stop->eps_g}};
    if (c.run.workers) run["workers"] = *c.run.workers;
    j["run"] = run;

    j["output"] = {{"directory", c.output.directory}, {"trace_stride", c.output.trace_stride}};
    if (c.rates) j["rates"] = {{"p", c.rates->p}, {"K", c.rates->K}, {"tolerance", c.rates->tolerance}};
    if (!c.initializations.empty()) j["initializations"] = c.initializations;
    if (c.classification)
        j["classification"] = {{"case1_lambda_max", c.classification->case1_lambda_max},
                               {"case1_grad_f_sq_max", c.classification->case1_grad_f_sq_max},
                               {"case2_cos_max", c.classification->case2_cos_max},
                               {"case2_lambda_min", c.classification->case2_lambda_min}};
    if (c.kkt) j["kkt"] = {{"eps_p", c.kkt->eps_p}, {"eps_d", c.kkt->eps_d}, {"ls_tol", c.kkt->ls_tol}};
    return j;
}

// ---------------------------------------------------------------------------
// From config to runnable pieces
// ---------------------------------------------------------------------------

inline ProblemSpec build_problem(const ProblemConfig& config) {
    return std::visit(
        [](const auto& pc) -> ProblemSpec {
            using T = std::decay_t<decltype(pc)>;
            if constexpr (std::is_same_v<T, ToyProblemConfig>) {
                return toy_problem();
            } else if constexpr (std::is_same_v<T, MatfacProblemConfig>) {
                return matrix_factorization_problem(pc.n, pc.r, pc.alpha, sparsity_variant_from_string(pc.variant),
                                                    pc.noise_std, pc.seed);
            } else {
                return quadratic_sanity_problem(pc.n, pc.box_radius);
            }
        },
        config);
}

/// One point of a method grid.
struct Cell {
    std::string label;  ///< unique, filename-safe
    Method method;
    std::vector<std::pair<std::string, double>> params;
};

inline std::string format_param(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Expands every method block into its grid cells, in config order.
inline std::vector<Cell> expand_cells(const ExperimentConfig& config, const ProblemSpec& problem) {
    std::vector<Cell> cells;
    std::set<std::string> seen;
    for (std::size_t b = 0; b < config.methods.size(); ++b) {
        const MethodBlock& m = config.methods[b];
        std::vector<std::size_t> index(m.grid.size(), 0);
        while (true) {
            Cell cell;
            std::map<std::string, double> v;
            for (std::size_t i = 0; i < m.grid.size(); ++i) {
                const double value = m.grid[i].second[index[i]];
                cell.params.emplace_back(m.grid[i].first, value);
                v[m.grid[i].first] = value;
            }
            cell.label = m.type;
            if (m.type == "dbgd" && m.rule != "grad_norm_sq") cell.label += "_" + m.rule;
            for (const auto& [key, value] : cell.params) cell.label += "_" + key + "_" + format_param(value);

            if (m.type == "dbgd") {
                PhiRule rule;
                if (m.rule == "grad_norm_sq") {
                    rule = GradNormSquared{v["beta"]};
                } else {
                    if (!problem.g_star())
                        throw ConfigError("/methods/" + std::to_string(b) + "/rule: rule '" + m.rule +
                                          "' needs a known g*, which problem '" + problem.name() + "' does not declare");
                    if (m.rule == "barrier_min")
                        rule = DynamicBarrierMin{v["alpha"], v["beta"], *problem.g_star()};
                    else
                        rule = LowerLinearization{*problem.g_star(), v["eta"]};
                }
                validate_rule(rule, problem);
                cell.method = DbgdMethod{rule};
            } else if (m.type == "penalty") {
                cell.method = PenaltyMethod{v["lambda"], m.scale_step};
            } else {
                cell.method = BloopMethod{v["beta"]};
            }
            if (!seen.insert(cell.label).second)
                throw ConfigError("/methods/" + std::to_string(b) + ": duplicate grid cell '" + cell.label + "'");
            cells.push_back(std::move(cell));

            std::size_t i = 0;
            for (; i < index.size(); ++i) {
                if (++index[i] < m.grid[i].second.size()) break;
                index[i] = 0;
            }
            if (i == index.size()) break;
        }
    }
    return cells;
}

inline SolverConfig solver_config(const ExperimentConfig& config, const Cell& cell) {
    SolverConfig s;
    s.method = cell.method;
    if (config.run.step.mode == "constant")
        s.step = ConstantStep{config.run.step.eta};
    else
        s.step = TheoremSchedule{config.run.step.p};
    s.iterations = config.run.iterations;
    s.guard = config.run.guard;
    s.record = IterateRecording::final;
    if (config.run.stop) s.stop = StopTolerances{config.run.stop->eps_f, config.run.stop->eps_g};
    return s;
}

/// The run block's starting point: explicit x0, or x0_scale * N(0, I) drawn
/// from Rng(x0_seed).
inline Vector initial_point(const RunConfig& run, const ProblemSpec& problem) {
    if (run.x0) {
        if (static_cast<Eigen::Index>(run.x0->size()) != problem.dimension())
            throw ConfigError("/run/x0: has " + std::to_string(run.x0->size()) + " entries, problem '" +
                              problem.name() + "' has dimension " + std::to_string(problem.dimension()));
        return Eigen::Map<const Vector>(run.x0->data(), static_cast<Eigen::Index>(run.x0->size()));
    }
    if (run.x0_seed) {
        Rng rng(*run.x0_seed);
        return rng.normal_vector(problem.dimension(), run.x0_scale);
    }
    throw ConfigError("/run: needs x0 or x0_seed");
}

inline Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace dbgd::harness

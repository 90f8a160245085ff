#include "qflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "qflow/error.hpp"
#include "qflow/fields.hpp"
#include "qflow/io.hpp"

namespace qflow {

namespace {

enum class Type { integer, real, boolean, text, real_list, mode, datum, initial };

struct KeySpec {
    const char* key;
    Type type;
    const char* fallback;  // nullptr: no default
};

// Schema order is also manifest order.
const KeySpec schema[] = {
    {"mode", Type::mode, nullptr},
    {"problem", Type::datum, nullptr},
    {"initial", Type::initial, "zero"},
    {"output", Type::text, "qflow_out"},
    {"seed", Type::integer, "1"},
    {"grid.n", Type::integer, "32"},
    {"grid.period", Type::real, "1.0"},
    {"flow.t_end", Type::real, "1.0"},
    {"flow.dt_init", Type::real, "1e-5"},
    {"flow.dt_min", Type::real, "1e-12"},
    {"flow.dt_max", Type::real, "1e-2"},
    {"flow.energy_tolerance", Type::real, "1e-12"},
    {"flow.volume_renormalize", Type::boolean, "true"},
    {"flow.inner_tol", Type::real, "1e-10"},
    {"flow.diagnostics_stride", Type::integer, "1"},
    {"flow.defect_target", Type::real, "0.02"},
    {"flow.defect_relax_window", Type::real, "100"},
    {"flow.steady_tol", Type::real, "1e-9"},
    {"flow.steady_window", Type::integer, "10"},
    {"solve.tol", Type::real, "1e-9"},
    {"solve.max_iter", Type::integer, "50"},
    {"continuation.k_list", Type::real_list, "10,50,100"},
    {"continuation.tol", Type::real, "1e-9"},
    {"continuation.max_iter", Type::integer, "50"},
    {"continuation.max_bisections", Type::integer, "6"},
    {"analyze.field", Type::text, nullptr},
    {"analyze.k", Type::real, "0"},
    {"analyze.rho", Type::real, "0"},
    {"bubble.lambda", Type::real, "40"},
    {"bubble.k", Type::real, "0"},
    {"bubble.count", Type::integer, "1"},
    {"bubble.fit_points", Type::integer, "33"},
    {"bubble.rho", Type::real, "0"},
    {"green.r_min", Type::real, "0"},
    {"green.r_max", Type::real, "0"},
};

const char* mode_names[] = {"flow", "solve", "continuation", "analyze", "bubble", "green"};

std::optional<Mode> mode_from(const std::string& s) {
    for (int i = 0; i < 6; ++i)
        if (s == mode_names[i]) return static_cast<Mode>(i);
    return std::nullopt;
}

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : schema)
        if (key == k.key) return &k;
    return nullptr;
}

std::string section_of(const std::string& key) {
    const auto dot = key.find('.');
    return dot == std::string::npos ? std::string() : key.substr(0, dot);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    std::string where;
};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw InvalidArgument(where + ": " + what);
}

bool to_double(const std::string& s, double& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool to_long(const std::string& s, long long& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) {
        double v;
        if (!to_double(part, v)) throw InvalidArgument(what + ": '" + part + "' is not a number");
        out.push_back(v);
    }
    return out;
}

}  // namespace

std::string to_string(Mode m) { return mode_names[static_cast<int>(m)]; }

FieldSpec parse_field_spec(const std::string& text, bool allow_initial_forms) {
    FieldSpec f;
    f.text = text;
    const auto colon = text.find(':');
    const std::string kind = trim(text.substr(0, colon));
    const std::string args = colon == std::string::npos ? "" : trim(text.substr(colon + 1));
    const std::string ctx = "field spec '" + text + "'";
    auto numbers = [&](std::size_t lo, std::size_t hi) {
        const auto v = parse_numbers(args, ctx);
        if (v.size() < lo || v.size() > hi)
            throw InvalidArgument(ctx + ": wrong number of parameters");
        return v;
    };
    if (kind == "zero" && allow_initial_forms && args.empty()) {
        f.kind = FieldSpec::Kind::zero;
    } else if (kind == "constant") {
        f.kind = FieldSpec::Kind::constant;
        f.c = numbers(1, 1)[0];
    } else if (kind == "cosine") {
        f.kind = FieldSpec::Kind::cosine;
        // data: c,a,m1..m4; initial fields: a,m1..m4 (pure oscillation)
        const auto v = allow_initial_forms ? numbers(5, 5) : numbers(6, 6);
        const std::size_t o = allow_initial_forms ? 0 : 1;
        f.c = allow_initial_forms ? 0.0 : v[0];
        f.a = v[o];
        for (int i = 0; i < 4; ++i) {
            const double mi = v[o + 1 + static_cast<std::size_t>(i)];
            if (mi != std::floor(mi)) throw InvalidArgument(ctx + ": wavevector must be integer");
            f.m[static_cast<std::size_t>(i)] = static_cast<int>(mi);
        }
    } else if (kind == "bump" && !allow_initial_forms) {
        f.kind = FieldSpec::Kind::bump;
        const auto v = numbers(2, 2);
        f.c = v[0];
        f.a = v[1];
    } else if (kind == "random" && allow_initial_forms) {
        f.kind = FieldSpec::Kind::random;
        const auto v = numbers(1, 2);
        f.a = v[0];
        if (v.size() == 2) f.max_mode = static_cast<int>(v[1]);
    } else if (kind == "file") {
        f.kind = FieldSpec::Kind::file;
        if (args.empty()) throw InvalidArgument(ctx + ": missing file path");
        f.path = args;
    } else {
        throw InvalidArgument(ctx + ": unknown form '" + kind + "'");
    }
    return f;
}

ScalarField build_field(const FieldSpec& spec, const TorusGrid& grid, std::uint64_t seed) {
    switch (spec.kind) {
        case FieldSpec::Kind::zero: return ScalarField(grid);
        case FieldSpec::Kind::constant: return ScalarField(grid, spec.c);
        case FieldSpec::Kind::cosine: {
            if (spec.c == 0.0) {
                ScalarField u = cosine_field(grid, 1.0, 1.0, spec.m);
                u += -1.0;
                u *= spec.a;
                return u;
            }
            return cosine_field(grid, spec.c, spec.a, spec.m);
        }
        case FieldSpec::Kind::bump: return bump_field(grid, spec.c, spec.a);
        case FieldSpec::Kind::random: return random_smooth_field(grid, spec.a, seed, spec.max_mode);
        case FieldSpec::Kind::file: {
            ScalarField u = load_field(spec.path);
            if (!(u.grid() == grid))
                throw InvalidArgument("field file " + spec.path.string() +
                                      " does not match the configured grid");
            return u;
        }
    }
    throw InvalidArgument("unreachable field kind");
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                       const std::string& origin, std::optional<Mode> mode_hint) {
    std::map<std::string, Entry> entries;
    auto put = [&](const std::string& key, const std::string& value, const std::string& where,
                   bool replace) {
        if (!find_key(key)) fail(where, "unknown key '" + key + "'");
        if (!replace && entries.count(key)) fail(where, "duplicate key '" + key + "'");
        entries[key] = {value, where};
    };

    std::istringstream in(text);
    std::string line;
    std::string section;
    for (int number = 1; std::getline(in, line); ++number) {
        const std::string where = origin + ":" + std::to_string(number);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(where, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty() || section.find('.') != std::string::npos)
                fail(where, "malformed section header");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(where, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(where, "empty key");
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        put(key, value, where, false);
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) fail("--set " + o, "expected key=value");
        put(trim(o.substr(0, eq)), trim(o.substr(eq + 1)), "--set " + o, true);
    }

    RunConfig cfg;
    // Mode first: it decides which sections are allowed.
    std::optional<Mode> mode;
    if (auto it = entries.find("mode"); it != entries.end()) {
        mode = mode_from(it->second.value);
        if (!mode) fail(it->second.where, "unknown mode '" + it->second.value + "'");
        if (mode_hint && *mode_hint != *mode)
            fail(it->second.where, "config selects mode " + it->second.value +
                                       " but the command is " + to_string(*mode_hint));
    } else if (mode_hint) {
        mode = mode_hint;
    } else {
        fail(origin, "missing required key 'mode'");
    }
    cfg.mode = *mode;
    const std::string active = to_string(cfg.mode);
    for (const auto& [key, e] : entries) {
        const std::string sec = section_of(key);
        if (mode_from(sec) && sec != active)
            fail(e.where, "option '" + key + "' belongs to mode " + sec + ", not " + active);
    }

    auto value_of = [&](const KeySpec& k) -> std::optional<Entry> {
        if (auto it = entries.find(k.key); it != entries.end()) return it->second;
        if (k.fallback) {
            cfg.defaulted.push_back(k.key);
            return Entry{k.fallback, std::string("default for ") + k.key};
        }
        return std::nullopt;
    };
    for (const auto& k : schema) {
        const std::string sec = section_of(k.key);
        if (mode_from(sec) && sec != active) continue;
        const auto e = value_of(k);
        if (!e) continue;
        const std::string& v = e->value;
        auto mismatch = [&](const char* expected) {
            fail(e->where, std::string("type mismatch for '") + k.key + "': expected " + expected +
                               ", got '" + v + "'");
        };
        double d = 0.0;
        long long i = 0;
        bool b = false;
        switch (k.type) {
            case Type::real:
                if (!to_double(v, d)) mismatch("a number");
                break;
            case Type::integer:
                if (!to_long(v, i)) mismatch("an integer");
                break;
            case Type::boolean:
                if (v == "true" || v == "1") b = true;
                else if (v == "false" || v == "0") b = false;
                else mismatch("true or false");
                break;
            default:
                break;
        }
        const std::string key = k.key;
        try {
            if (key == "mode") {
            } else if (key == "problem") {
                cfg.problem = parse_field_spec(v, false);
                cfg.has_problem = true;
            } else if (key == "initial") {
                cfg.initial = parse_field_spec(v, true);
            } else if (key == "output") {
                cfg.output = v;
            } else if (key == "seed") {
                if (i < 0) mismatch("a nonnegative integer");
                cfg.seed = static_cast<std::uint64_t>(i);
            } else if (key == "grid.n") {
                cfg.n = static_cast<int>(i);
            } else if (key == "grid.period") {
                cfg.period = d;
            } else if (key == "flow.t_end") {
                cfg.flow.t_end = d;
            } else if (key == "flow.dt_init") {
                cfg.flow.dt_init = d;
            } else if (key == "flow.dt_min") {
                cfg.flow.dt_min = d;
            } else if (key == "flow.dt_max") {
                cfg.flow.dt_max = d;
            } else if (key == "flow.energy_tolerance") {
                cfg.flow.energy_tolerance = d;
            } else if (key == "flow.volume_renormalize") {
                cfg.flow.volume_renormalize = b;
            } else if (key == "flow.inner_tol") {
                cfg.flow.inner_tol = d;
            } else if (key == "flow.diagnostics_stride") {
                cfg.flow.diagnostics_stride = static_cast<int>(i);
            } else if (key == "flow.defect_target") {
                cfg.flow.defect_target = d;
            } else if (key == "flow.defect_relax_window") {
                cfg.flow.defect_relax_window = d;
            } else if (key == "flow.steady_tol") {
                cfg.flow.steady_tol = d;
            } else if (key == "flow.steady_window") {
                cfg.flow.steady_window = static_cast<int>(i);
            } else if (key == "solve.tol") {
                cfg.solve.tol = d;
            } else if (key == "solve.max_iter") {
                cfg.solve.max_iter = static_cast<int>(i);
            } else if (key == "continuation.k_list") {
                cfg.k_list = parse_numbers(v, "continuation.k_list");
            } else if (key == "continuation.tol") {
                cfg.continuation.newton.tol = d;
            } else if (key == "continuation.max_iter") {
                cfg.continuation.newton.max_iter = static_cast<int>(i);
            } else if (key == "continuation.max_bisections") {
                cfg.continuation.max_bisections = static_cast<int>(i);
            } else if (key == "analyze.field") {
                cfg.analyze_field = v;
            } else if (key == "analyze.k") {
                cfg.analyze_k = d;
            } else if (key == "analyze.rho" || key == "bubble.rho") {
                cfg.rho = d;
            } else if (key == "bubble.lambda") {
                cfg.bubble_lambda = d;
            } else if (key == "bubble.k") {
                cfg.bubble_k = d;
            } else if (key == "bubble.count") {
                cfg.bubble_count = static_cast<int>(i);
            } else if (key == "bubble.fit_points") {
                cfg.fit_points = static_cast<int>(i);
            } else if (key == "green.r_min") {
                cfg.green_r_min = d;
            } else if (key == "green.r_max") {
                cfg.green_r_max = d;
            }
        } catch (const InvalidArgument& ex) {
            fail(e->where, ex.what());
        }
        cfg.resolved.emplace_back(key, v);
    }

    // Cross-field validation.
    try {
        TorusGrid(cfg.n, cfg.period);
    } catch (const InvalidArgument& ex) {
        fail(origin, ex.what());
    }
    const bool needs_problem = cfg.mode == Mode::flow || cfg.mode == Mode::solve ||
                               cfg.mode == Mode::continuation || cfg.mode == Mode::analyze;
    if (needs_problem && !cfg.has_problem)
        fail(origin, "mode " + active + " requires key 'problem'");
    if (cfg.mode == Mode::analyze && cfg.analyze_field.empty())
        fail(origin, "mode analyze requires key 'analyze.field'");
    if (cfg.mode == Mode::flow) {
        try {
            cfg.flow.validate();
        } catch (const InvalidArgument& ex) {
            fail(origin, ex.what());
        }
    }
    if (cfg.mode == Mode::bubble && (cfg.bubble_count < 1 || cfg.bubble_count > 2))
        fail(origin, "bubble.count must be 1 or 2");
    auto check_exists = [&](const std::filesystem::path& p, const std::string& key) {
        if (!std::filesystem::exists(p))
            fail(origin, "file referenced by '" + key + "' does not exist: " + p.string());
    };
    if (cfg.has_problem && cfg.problem.kind == FieldSpec::Kind::file)
        check_exists(cfg.problem.path, "problem");
    if (cfg.initial.kind == FieldSpec::Kind::file) check_exists(cfg.initial.path, "initial");
    if (cfg.mode == Mode::analyze) check_exists(cfg.analyze_field, "analyze.field");
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      std::optional<Mode> mode_hint) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw InvalidArgument(e.what());
    }
    return parse_config(text, overrides, path.string(), mode_hint);
}

std::string manifest_text(const RunConfig& cfg) {
    std::ostringstream out;
    out << "# resolved configuration\n";
    std::string current;
    for (const auto& [key, value] : cfg.resolved) {
        const std::string sec = section_of(key);
        if (sec != current) {
            out << "\n[" << sec << "]\n";
            current = sec;
        }
        out << (sec.empty() ? key : key.substr(sec.size() + 1)) << " = " << value << "\n";
    }
    // The mode may have come from the command line.
    std::string text = out.str();
    if (std::none_of(cfg.resolved.begin(), cfg.resolved.end(),
                     [](const auto& kv) { return kv.first == "mode"; }))
        text.insert(text.find('\n') + 1, "mode = " + to_string(cfg.mode) + "\n");
    return text;
}

}  // namespace qflow

#pragma once

// Run configuration.
//
// Format: one `key = value` per line, `#` starts a comment, `[section]`
// headers prefix the keys that follow (`[flow]` + `t_end` is `flow.t_end`).
// Dotted keys may also be written out in full. Lists are comma separated.
//
//   mode = flow
//   problem = constant:10
//   [grid]
//   n = 32
//   period = 1.0
//
// Keys under a mode section (flow, solve, continuation, analyze, bubble,
// green) are only accepted when that mode is selected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qflow/elliptic.hpp"
#include "qflow/flow.hpp"

namespace qflow {

enum class Mode { flow, solve, continuation, analyze, bubble, green };

std::string to_string(Mode m);

/// Data and initial fields are described constructively:
///   constant:c                       c
///   cosine:c,a,m1,m2,m3,m4           c (1 + a cos(2 pi m.x / L))
///   cosine:a,m1,m2,m3,m4             a cos(2 pi m.x / L) (initial only)
///   bump:c,a                         peaked datum with mean c (see bump_field)
///   random:amplitude[,max_mode]      seeded smooth random field (initial only)
///   zero                             0 (initial only)
///   file:path                        QFLD file
struct FieldSpec {
    enum class Kind { zero, constant, cosine, bump, random, file };
    Kind kind = Kind::zero;
    double c = 0.0;
    double a = 0.0;
    std::array<int, 4> m{};
    int max_mode = 2;
    std::filesystem::path path;
    std::string text;  ///< as written
};

struct RunConfig {
    Mode mode = Mode::flow;
    int n = 32;
    double period = 1.0;
    bool has_problem = false;
    FieldSpec problem;
    FieldSpec initial;
    std::filesystem::path output = "qflow_out";
    std::uint64_t seed = 1;

    FlowOptions flow;
    NewtonOptions solve;
    std::vector<double> k_list;
    ContinuationOptions continuation;
    std::filesystem::path analyze_field;
    double analyze_k = 0.0;     ///< 0: use the total curvature of the problem datum
    double rho = 0.0;           ///< 0: pi^2 / k
    double bubble_lambda = 40.0;
    double bubble_k = 0.0;      ///< 0: 16 pi^2 * count
    int bubble_count = 1;
    int fit_points = 33;
    double green_r_min = 0.0;   ///< 0: 6 spacings
    double green_r_max = 0.0;   ///< 0: L/8

    /// Every key with its resolved value, in schema order.
    std::vector<std::pair<std::string, std::string>> resolved;
    /// Keys that took their default value.
    std::vector<std::string> defaulted;
};

/// Parses a config text; `origin` names it in error messages. Overrides are
/// `key=value` strings applied after the file. Errors are InvalidArgument with
/// the offending key and line.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                       const std::string& origin = "config",
                       std::optional<Mode> mode_hint = std::nullopt);
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {},
                      std::optional<Mode> mode_hint = std::nullopt);

FieldSpec parse_field_spec(const std::string& text, bool allow_initial_forms);

/// The resolved config in the same format, suitable for replay.
std::string manifest_text(const RunConfig& cfg);

/// Builds the field a spec describes on the grid.
ScalarField build_field(const FieldSpec& spec, const TorusGrid& grid, std::uint64_t seed);

}  // namespace qflow

#pragma once

// Field files, diagnostics CSV and atomic file output.
//
// QFLD layout (little-endian):
//   offset  0  4 bytes  magic "QFLD"
//   offset  4  uint32   format version (1)
//   offset  8  uint32   n
//   offset 12  float64  period L
//   offset 20  4 bytes  axis order tag "1234" (axis 4 varies fastest)
//   offset 24  n^4 float64 values, row-major

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qflow/flow.hpp"

namespace qflow {

inline constexpr std::uint32_t qfld_version = 1;
inline constexpr std::size_t qfld_header_bytes = 24;

std::string encode_field(const ScalarField& field);
/// Throws IoError("not a QFLD file"), on version or axis tag mismatch, and when
/// the payload length disagrees with n.
ScalarField decode_field(const std::string& bytes);

void save_field(const ScalarField& field, const std::filesystem::path& path);
ScalarField load_field(const std::filesystem::path& path);

/// Writes to a temporary file in the same directory, then renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// printf %.17g: enough digits to round-trip any double.
std::string format_double(double x);

inline constexpr const char* diagnostics_header =
    "t,energy,volume,raw_volume_drift,sublevel_volume,Y,max_u,min_u,dt,residual";

std::string diagnostics_csv(const std::vector<DiagnosticsRow>& rows);
void emit_diagnostics(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace qflow

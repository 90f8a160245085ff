#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qflow/error.hpp"
#include "qflow/io.hpp"

namespace qflow {

namespace {

constexpr char magic[4] = {'Q', 'F', 'L', 'D'};
constexpr char axis_tag[4] = {'1', '2', '3', '4'};

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(const std::string& in, std::size_t offset) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    return v;
}

}  // namespace

std::string encode_field(const ScalarField& field) {
    const TorusGrid& g = field.grid();
    std::string out;
    out.reserve(qfld_header_bytes + 8 * field.size());
    out.append(magic, 4);
    put_le<std::uint32_t>(out, qfld_version);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.n()));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(g.period()));
    out.append(axis_tag, 4);
    for (double v : field.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

ScalarField decode_field(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
        throw IoError("not a QFLD file");
    if (bytes.size() < qfld_header_bytes) throw IoError("QFLD header truncated");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != qfld_version)
        throw IoError("unsupported QFLD version " + std::to_string(version));
    if (std::memcmp(bytes.data() + 20, axis_tag, 4) != 0)
        throw IoError("unsupported QFLD axis order tag");
    const auto n = get_le<std::uint32_t>(bytes, 8);
    const double period = std::bit_cast<double>(get_le<std::uint64_t>(bytes, 12));
    TorusGrid grid = [&] {
        try {
            return TorusGrid(static_cast<int>(n), period);
        } catch (const InvalidArgument& e) {
            throw IoError(std::string("QFLD header describes an invalid grid: ") + e.what());
        }
    }();
    const std::size_t expected = qfld_header_bytes + 8 * grid.total_points();
    if (bytes.size() != expected) {
        std::ostringstream msg;
        msg << "QFLD payload length does not match n = " << n << ": expected " << expected
            << " bytes, found " << bytes.size()
            << (bytes.size() < expected ? " (truncated payload)" : " (trailing data)");
        throw IoError(msg.str());
    }
    AlignedVector<double> values(grid.total_points());
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, qfld_header_bytes + 8 * i));
    try {
        return ScalarField(grid, std::move(values));
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("QFLD payload rejected: ") + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void save_field(const ScalarField& field, const std::filesystem::path& path) {
    write_file_atomic(path, encode_field(field));
}

ScalarField load_field(const std::filesystem::path& path) { return decode_field(read_file(path)); }

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string diagnostics_csv(const std::vector<DiagnosticsRow>& rows) {
    std::string out = diagnostics_header;
    out += '\n';
    for (const auto& r : rows) {
        const double cols[] = {r.t,     r.energy, r.conformal_volume, r.raw_volume_drift,
                               r.sublevel_volume, r.Y, r.max_u, r.min_u, r.dt, r.residual_norm};
        for (std::size_t i = 0; i < std::size(cols); ++i) {
            if (i) out += ',';
            out += format_double(cols[i]);
        }
        out += '\n';
    }
    return out;
}

void emit_diagnostics(const Trajectory& traj, const std::filesystem::path& path) {
    write_file_atomic(path, diagnostics_csv(traj.rows));
}

}  // namespace qflow

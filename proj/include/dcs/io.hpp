#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dcs/controller.hpp"
#include "dcs/errors.hpp"
#include "dcs/spatial.hpp"
#include "dcs/state.hpp"

namespace dcs {

inline constexpr const char* csv_schema = "dcs-csv/1";

/// Shortest round-trip decimal form; empty for NaN.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s)
{
    if (s.empty()) return std::nan("");
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw FormatError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw FormatError("trailing characters in number: '" + s + "'");
    return v;
}

/// Comma-separated table whose first line is "# dcs-csv/1 kind=<kind>".
/// Further '#' lines carry free-form metadata.
struct CsvTable {
    std::string kind;
    std::vector<std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    CsvTable() = default;
    CsvTable(std::string k, std::vector<std::string> cols) : kind(std::move(k)), columns(std::move(cols)) {}

    void add_row(std::vector<std::string> r)
    {
        detail::require(r.size() == columns.size(), "CsvTable: row width does not match header");
        rows.push_back(std::move(r));
    }

    std::size_t column(const std::string& name) const
    {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw FormatError("CsvTable: missing column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    double number(std::size_t row, const std::string& name) const { return parse_double(rows.at(row)[column(name)]); }

    std::string to_string() const
    {
        std::ostringstream os;
        os << "# " << csv_schema << " kind=" << kind << "\n";
        for (const auto& m : meta) os << "# " << m << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
        os << "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << "\n";
        }
        return os.str();
    }

    static CsvTable parse(const std::string& text)
    {
        CsvTable t;
        std::istringstream is(text);
        std::string line;
        bool first = true;
        bool header = false;
        auto split = [](const std::string& l) {
            std::vector<std::string> out;
            std::string cur;
            for (char ch : l) {
                if (ch == ',') {
                    out.push_back(cur);
                    cur.clear();
                } else if (ch != '\r') {
                    cur.push_back(ch);
                }
            }
            out.push_back(cur);
            return out;
        };
        while (std::getline(is, line)) {
            if (first) {
                first = false;
                const std::string tag = std::string("# ") + csv_schema + " kind=";
                if (line.rfind(tag, 0) != 0) throw FormatError("CSV: missing or unsupported schema header");
                t.kind = line.substr(tag.size());
                continue;
            }
            if (!line.empty() && line[0] == '#') {
                t.meta.push_back(line.size() > 2 ? line.substr(2) : "");
                continue;
            }
            if (line.empty()) continue;
            if (!header) {
                t.columns = split(line);
                header = true;
                continue;
            }
            auto r = split(line);
            if (r.size() != t.columns.size()) throw FormatError("CSV: ragged row");
            t.rows.push_back(std::move(r));
        }
        if (!header) throw FormatError("CSV: no column header");
        return t;
    }
};

/// Writes via a temporary file in the same directory and renames it in place.
inline void atomic_write(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

namespace detail {

template <class T>
void put_le(std::string& out, T v)
{
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(const std::string& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size()) throw FormatError("state dump: truncated");
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    pos += sizeof(T);
    return std::bit_cast<T>(bytes);
}

} // namespace detail

/// Binary state: "DCS1", uint64 n, uint64 m, double t, then n*m doubles,
/// all little-endian, point-major.
struct StateDump {
    std::uint64_t n = 0;
    std::uint64_t m = 0;
    double t = 0.0;
    State u;

    std::string encode() const
    {
        detail::require(u.size() == n * m, "StateDump: size mismatch");
        std::string out = "DCS1";
        detail::put_le(out, n);
        detail::put_le(out, m);
        detail::put_le(out, t);
        for (double v : u) detail::put_le(out, v);
        return out;
    }

    static StateDump decode(const std::string& bytes)
    {
        if (bytes.size() < 4 || bytes.compare(0, 4, "DCS1") != 0) throw FormatError("state dump: bad magic");
        std::size_t pos = 4;
        StateDump d;
        d.n = detail::get_le<std::uint64_t>(bytes, pos);
        d.m = detail::get_le<std::uint64_t>(bytes, pos);
        d.t = detail::get_le<double>(bytes, pos);
        if (d.m == 0 || d.n > (bytes.size() - pos) / 8 / d.m) throw FormatError("state dump: truncated");
        d.u.resize(d.n * d.m);
        for (auto& v : d.u) v = detail::get_le<double>(bytes, pos);
        if (pos != bytes.size()) throw FormatError("state dump: trailing bytes");
        return d;
    }
};

/// One row per grid point: x followed by the m species.
inline CsvTable state_to_csv(const Grid1D& grid, std::span<const double> u, std::size_t m, double t)
{
    detail::require(u.size() == grid.n * m, "state_to_csv: size mismatch");
    std::vector<std::string> cols{"x"};
    static const char* names[] = {"a", "b", "c"};
    for (std::size_t c = 0; c < m; ++c) cols.push_back(m == 3 ? names[c] : "u" + std::to_string(c));
    CsvTable tab("state", cols);
    tab.meta.push_back("t=" + format_double(t));
    for (std::size_t j = 0; j < grid.n; ++j) {
        std::vector<std::string> r{format_double(grid.x(j))};
        for (std::size_t c = 0; c < m; ++c) r.push_back(format_double(u[j * m + c]));
        tab.add_row(std::move(r));
    }
    return tab;
}

inline State state_from_csv(const CsvTable& tab, std::size_t m)
{
    if (tab.kind != "state") throw FormatError("state CSV: wrong kind '" + tab.kind + "'");
    if (tab.columns.size() != m + 1) throw FormatError("state CSV: expected x plus " + std::to_string(m) + " species");
    State u;
    u.reserve(tab.rows.size() * m);
    for (const auto& r : tab.rows)
        for (std::size_t c = 0; c < m; ++c) u.push_back(parse_double(r[c + 1]));
    return u;
}

/// Checkpoints: t followed by every state entry.
inline CsvTable trajectory_to_csv(const std::vector<double>& times, const std::vector<State>& states)
{
    detail::require(times.size() == states.size(), "trajectory_to_csv: size mismatch");
    std::vector<std::string> cols{"t"};
    const std::size_t n = states.empty() ? 0 : states.front().size();
    for (std::size_t i = 0; i < n; ++i) cols.push_back("u" + std::to_string(i));
    CsvTable tab("trajectory", cols);
    for (std::size_t r = 0; r < times.size(); ++r) {
        std::vector<std::string> row{format_double(times[r])};
        for (double v : states[r]) row.push_back(format_double(v));
        tab.add_row(std::move(row));
    }
    return tab;
}

/// t, dt, k_used, err_bar_0..K, err_tilde_0..K, zeta_1..K, accepted, restarts, wall_ns.
inline CsvTable step_reports_to_csv(const std::vector<StepReport>& reports, int k_cols)
{
    std::vector<std::string> cols{"t", "dt", "k_used"};
    for (int k = 0; k <= k_cols; ++k) cols.push_back("err_bar_" + std::to_string(k));
    for (int k = 0; k <= k_cols; ++k) cols.push_back("err_tilde_" + std::to_string(k));
    for (int k = 1; k <= k_cols; ++k) cols.push_back("zeta_" + std::to_string(k));
    for (const char* c : {"accepted", "restarts", "outcome", "dt_next", "wall_ns"}) cols.push_back(c);
    CsvTable tab("steps", cols);
    for (const auto& r : reports) {
        std::vector<std::string> row{format_double(r.t), format_double(r.dt), std::to_string(r.k_used)};
        auto rec = [&](int k) -> const SweepRecord* {
            return k < static_cast<int>(r.records.size()) ? &r.records[static_cast<std::size_t>(k)] : nullptr;
        };
        for (int k = 0; k <= k_cols; ++k) row.push_back(rec(k) ? format_double(rec(k)->err_bar) : "");
        for (int k = 0; k <= k_cols; ++k) row.push_back(rec(k) ? format_double(rec(k)->err_tilde) : "");
        for (int k = 1; k <= k_cols; ++k) row.push_back(rec(k) ? format_double(rec(k)->zeta_tilde) : "");
        row.push_back(r.accepted ? "1" : "0");
        row.push_back(std::to_string(r.restarts));
        row.push_back(to_string(r.outcome));
        row.push_back(format_double(r.dt_next));
        row.push_back(std::to_string(r.wall_ns));
        tab.add_row(std::move(row));
    }
    return tab;
}

/// Plain "key = value" lines; '#' starts a comment.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text)
    {
        KeyValueConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
            const auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) { return parse(read_file(path)); }

    bool has(const std::string& k) const { return values_.count(k) != 0; }
    const std::string& get(const std::string& k) const
    {
        const auto it = values_.find(k);
        if (it == values_.end()) throw FormatError("config: missing key '" + k + "'");
        return it->second;
    }
    double number(const std::string& k) const { return parse_double(get(k)); }
    const std::map<std::string, std::string>& values() const { return values_; }
    void set(const std::string& k, const std::string& v) { values_[k] = v; }

private:
    std::map<std::string, std::string> values_;
};

/// Configuration snapshot stored next to every output.
struct RunManifest {
    std::map<std::string, std::string> entries;

    void set(const std::string& k, const std::string& v) { entries[k] = v; }
    void set(const std::string& k, double v) { entries[k] = format_double(v); }

    std::string to_string() const
    {
        std::ostringstream os;
        os << "# dcs run manifest\n";
        for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
        return os.str();
    }

    static RunManifest parse(const std::string& text)
    {
        RunManifest m;
        m.entries = KeyValueConfig::parse(text).values();
        return m;
    }
};

} // namespace dcs

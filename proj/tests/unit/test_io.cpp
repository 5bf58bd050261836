#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "dcs/controller.hpp"
#include "dcs/io.hpp"

using namespace dcs;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("dcs_io_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST(Numbers, FormatRoundTripsExactly)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = U(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
}

TEST(Numbers, SpecialValues)
{
    EXPECT_EQ(format_double(std::nan("")), "");
    EXPECT_TRUE(std::isnan(parse_double("")));
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(parse_double("-inf"), -std::numeric_limits<double>::infinity());
    EXPECT_THROW(parse_double("1.5x"), FormatError);
    EXPECT_THROW(parse_double("abc"), FormatError);
}

TEST(Csv, RoundTripPreservesEverything)
{
    CsvTable t("demo", {"a", "b", "note"});
    t.meta.push_back("origin=unit");
    t.add_row({format_double(0.1), format_double(-2.5e-300), "x"});
    t.add_row({"", "inf", ""});
    const CsvTable u = CsvTable::parse(t.to_string());
    EXPECT_EQ(u.kind, "demo");
    EXPECT_EQ(u.meta, t.meta);
    EXPECT_EQ(u.columns, t.columns);
    EXPECT_EQ(u.rows, t.rows);
    EXPECT_EQ(u.number(0, "a"), 0.1);
    EXPECT_TRUE(std::isnan(u.number(1, "a")));
}

TEST(Csv, HeaderCarriesSchemaAndKind)
{
    const CsvTable t("steps", {"t"});
    EXPECT_EQ(t.to_string().rfind("# dcs-csv/1 kind=steps\n", 0), 0u);
}

TEST(Csv, RejectsMalformedInput)
{
    EXPECT_THROW(CsvTable::parse("t,dt\n1,2\n"), FormatError);
    EXPECT_THROW(CsvTable::parse("# dcs-csv/1 kind=x\na,b\n1\n"), FormatError);
    CsvTable t("x", {"a", "b"});
    EXPECT_THROW(t.add_row({"1"}), InvalidArgument);
    EXPECT_THROW(t.column("zzz"), FormatError);
}

TEST(StateDumpFormat, ByteLayout)
{
    StateDump d;
    d.n = 2;
    d.m = 1;
    d.t = 1.0;
    d.u = {0.0, -2.0};
    const std::string b = d.encode();
    ASSERT_EQ(b.size(), 4u + 8 + 8 + 8 + 16);
    EXPECT_EQ(b.substr(0, 4), "DCS1");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 2u);
    for (int i = 5; i < 12; ++i) EXPECT_EQ(b[i], 0);
    EXPECT_EQ(static_cast<unsigned char>(b[12]), 1u);
    // 1.0 = 0x3FF0000000000000 little-endian
    EXPECT_EQ(static_cast<unsigned char>(b[27]), 0x3Fu);
    EXPECT_EQ(static_cast<unsigned char>(b[26]), 0xF0u);
    // -2.0 = 0xC000000000000000
    EXPECT_EQ(static_cast<unsigned char>(b[43]), 0xC0u);
}

TEST(StateDumpFormat, RoundTripAndCorruption)
{
    StateDump d;
    d.n = 5;
    d.m = 3;
    d.t = 0.625;
    for (int i = 0; i < 15; ++i) d.u.push_back(std::sin(i) * 1e-3);
    const std::string b = d.encode();
    const StateDump e = StateDump::decode(b);
    EXPECT_EQ(e.n, d.n);
    EXPECT_EQ(e.m, d.m);
    EXPECT_EQ(e.t, d.t);
    EXPECT_EQ(e.u, d.u);
    EXPECT_THROW(StateDump::decode("DCS2" + b.substr(4)), FormatError);
    EXPECT_THROW(StateDump::decode(b.substr(0, b.size() - 1)), FormatError);
    EXPECT_THROW(StateDump::decode(b + "x"), FormatError);
    EXPECT_THROW(StateDump::decode("DC"), FormatError);
}

TEST(StateCsv, RoundTrip)
{
    const Grid1D g(7, 0.0, 1.0);
    State u(21);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.1 * i - 0.3;
    const CsvTable t = state_to_csv(g, u, 3, 0.5);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"x", "a", "b", "c"}));
    EXPECT_EQ(t.rows.size(), 7u);
    EXPECT_EQ(state_from_csv(CsvTable::parse(t.to_string()), 3), u);
    EXPECT_THROW(state_from_csv(t, 2), FormatError);
}

TEST(TrajectoryCsv, Columns)
{
    const CsvTable t = trajectory_to_csv({0.0, 0.5}, {{1.0, 2.0}, {3.0, 4.0}});
    EXPECT_EQ(t.kind, "trajectory");
    EXPECT_EQ(t.columns, (std::vector<std::string>{"t", "u0", "u1"}));
    EXPECT_EQ(t.number(1, "u1"), 4.0);
}

TEST(StepCsv, PlotFacingColumns)
{
    StepReport r;
    r.t = 0.5;
    r.dt = 1e-5;
    r.k_used = 1;
    r.accepted = true;
    r.outcome = StepOutcome::converged;
    r.records.resize(2);
    r.records[0].err_bar = 1e-6;
    r.records[1].zeta_tilde = 40.0;
    const CsvTable t = step_reports_to_csv({r}, 3);
    for (const char* c : {"t", "dt", "k_used", "err_bar_0", "err_bar_3", "err_tilde_0", "zeta_1", "zeta_3",
                          "accepted", "restarts", "outcome", "dt_next", "wall_ns"})
        EXPECT_NO_THROW(t.column(c)) << c;
    EXPECT_EQ(t.number(0, "err_bar_0"), 1e-6);
    EXPECT_EQ(t.number(0, "zeta_1"), 40.0);
    EXPECT_TRUE(std::isnan(t.number(0, "zeta_2")));
    EXPECT_EQ(t.rows[0][t.column("outcome")], "converged");
}

TEST(Files, AtomicWriteReplacesContent)
{
    const auto dir = scratch_dir("atomic");
    const auto f = dir / "sub" / "out.csv";
    atomic_write(f, "first");
    atomic_write(f, "second");
    EXPECT_EQ(read_file(f), "second");
    EXPECT_FALSE(std::filesystem::exists(f.string() + ".tmp"));
    EXPECT_THROW(read_file(dir / "missing"), Error);
    std::filesystem::remove_all(dir);
}

TEST(Config, ParsesKeyValueLines)
{
    const auto c = KeyValueConfig::parse("# comment\n eta = 1e-7  # inline\nscheme=strang\n\n");
    EXPECT_TRUE(c.has("eta"));
    EXPECT_EQ(c.number("eta"), 1e-7);
    EXPECT_EQ(c.get("scheme"), "strang");
    EXPECT_FALSE(c.has("rule"));
    EXPECT_THROW(c.get("rule"), FormatError);
    EXPECT_THROW(KeyValueConfig::parse("no equals sign\n"), FormatError);
    EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), FormatError);
}

TEST(Config, LoadsFromFile)
{
    const auto dir = scratch_dir("config");
    atomic_write(dir / "run.cfg", "kmax = 2\n");
    EXPECT_EQ(KeyValueConfig::load(dir / "run.cfg").number("kmax"), 2.0);
    std::filesystem::remove_all(dir);
}

TEST(Manifest, RoundTrip)
{
    RunManifest m;
    m.set("command", "converge-local");
    m.set("eta", 1e-7);
    const RunManifest n = RunManifest::parse(m.to_string());
    EXPECT_EQ(n.entries, m.entries);
    EXPECT_EQ(parse_double(n.entries.at("eta")), 1e-7);
}

// Integration tests for the cxlmemsim binary: exit-code contract, output
// files, overwrite protection, determinism of rerun output.
// Usage: test_cli <path-to-cxlmemsim>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::printf("[PASS] %s\n", what.c_str());
    } else {
        std::printf("[FAIL] %s\n", what.c_str());
        ++g_failures;
    }
}

std::string g_binary;
fs::path g_tmp;

int run_cmd(const std::string& args, const std::string& tag) {
    std::string stderr_file = (g_tmp / (tag + ".stderr")).string();
    std::string cmd = g_binary + " " + args + " 2>" + stderr_file;
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::vector<std::vector<std::string>> parse_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

const char* kGoodConfig = R"({
    "system": {"kind": "cxl-ssd"},
    "device": {"capacity_mib": 64},
    "workload": {"type": "apexmap", "alpha": 0.5, "footprint_mib": 64,
                 "count": 20000, "load_fraction": 0.9},
    "run": {"seed": 7}
})";

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <cxlmemsim binary>\n");
        return 2;
    }
    g_binary = argv[1];
    g_tmp = fs::temp_directory_path() / "cxlmemsim_cli_test";
    fs::remove_all(g_tmp);
    fs::create_directories(g_tmp);

    fs::path cfg = g_tmp / "good.json";
    write_file(cfg, kGoodConfig);

    // --- run: success path ---
    fs::path out1 = g_tmp / "out1";
    int rc = run_cmd("run --config " + cfg.string() + " --out " + out1.string(), "run1");
    check(rc == 0, "run exits 0 on a valid config");
    check(fs::exists(out1 / "results.csv"), "run writes results.csv");
    check(fs::exists(out1 / "summary.txt"), "run writes summary.txt");
    std::string first_csv = slurp(out1 / "results.csv");
    {
        auto rows = parse_csv(out1 / "results.csv");
        check(rows.size() == 20001, "results.csv has one row per memory request");
        check(rows[0].size() == 7 &&
                  rows[0][0] == "req_id" && rows[0][6] == "served_by",
              "results.csv header is the documented schema");
    }

    // --- overwrite protection and determinism ---
    rc = run_cmd("run --config " + cfg.string() + " --out " + out1.string(), "run2");
    check(rc == 1, "rerun without --force exits 1");
    rc = run_cmd("run --config " + cfg.string() + " --out " + out1.string() + " --force",
                 "run3");
    check(rc == 0, "rerun with --force exits 0");
    check(slurp(out1 / "results.csv") == first_csv, "rerun results.csv is byte-identical");

    // --- seed override changes the output ---
    fs::path out_seed = g_tmp / "out_seed";
    rc = run_cmd("run --config " + cfg.string() + " --out " + out_seed.string() +
                     " --seed 8",
                 "run4");
    check(rc == 0, "run with --seed exits 0");
    check(slurp(out_seed / "results.csv") != first_csv, "a different seed changes results");

    // --- config errors exit 1 and cite the field ---
    fs::path bad = g_tmp / "bad.json";
    write_file(bad, R"({
        "workload": {"type": "apexmap", "alpha": 0.0, "footprint_mib": 64, "count": 100}
    })");
    rc = run_cmd("run --config " + bad.string() + " --out " + (g_tmp / "outbad").string(),
                 "runbad");
    check(rc == 1, "alpha=0 config exits 1");
    check(slurp(g_tmp / "runbad.stderr").find("apexmap.alpha") != std::string::npos,
          "the error message cites apexmap.alpha");
    rc = run_cmd("run --config " + (g_tmp / "missing.json").string() + " --out " +
                     (g_tmp / "outmissing").string(),
                 "runmissing");
    check(rc == 1, "missing config file exits 1");

    // --- validate ---
    rc = run_cmd("validate --config " + cfg.string(), "validate");
    check(rc == 0, "validate accepts a good config");
    rc = run_cmd("validate --config " + bad.string(), "validate_bad");
    check(rc == 1, "validate rejects a bad config");

    // --- event log ---
    fs::path out_log = g_tmp / "out_log";
    rc = run_cmd("run --config " + cfg.string() + " --out " + out_log.string() +
                     " --event-log",
                 "runlog");
    check(rc == 0, "run --event-log exits 0");
    check(fs::exists(out_log / "device_log.csv"), "event log CSV is written");

    // --- sweep over alpha: latency non-decreasing in alpha ---
    fs::path out_sweep = g_tmp / "out_sweep";
    rc = run_cmd("sweep --config " + cfg.string() + " --out " + out_sweep.string() +
                     " --axis alpha --values 0.001,0.5,1.0",
                 "sweep");
    check(rc == 0, "alpha sweep exits 0");
    {
        auto rows = parse_csv(out_sweep / "sweep.csv");
        check(rows.size() == 4, "sweep.csv has one row per value");
        bool monotone = rows.size() == 4 && std::stod(rows[1][1]) <= std::stod(rows[2][1]) &&
                        std::stod(rows[2][1]) <= std::stod(rows[3][1]);
        check(monotone, "mean latency is non-decreasing in alpha");
        check(fs::exists(out_sweep / "results_alpha_0.5.csv"),
              "per-point results files exist");
    }

    // --- sweep axis validation ---
    rc = run_cmd("sweep --config " + cfg.string() + " --out " +
                     (g_tmp / "out_sweep2").string() + " --axis threads --values 1,2",
                 "sweep_threads");
    check(rc == 1, "axis=threads on a non-STREAM workload exits 1");
    check(slurp(g_tmp / "sweep_threads.stderr").find("STREAM") != std::string::npos,
          "the error message explains the axis constraint");
    rc = run_cmd("sweep --config " + cfg.string() + " --out " +
                     (g_tmp / "out_sweep3").string() + " --axis dt_fraction --values 0.5",
                 "sweep_dt");
    check(rc == 1, "axis=dt_fraction on a non-assd kind exits 1");

    // --- compare ---
    fs::path out_cmp = g_tmp / "out_cmp";
    rc = run_cmd("compare --config " + cfg.string() + " --out " + out_cmp.string() +
                     " --kinds dram,pcie-ssd --baseline dram",
                 "compare");
    check(rc == 0, "compare exits 0");
    {
        auto rows = parse_csv(out_cmp / "compare.csv");
        check(rows.size() == 3, "compare.csv has one row per kind");
        bool ratio_ok = false;
        for (const auto& row : rows) {
            if (row.size() == 3 && row[0] == "pcie-ssd") ratio_ok = std::stod(row[2]) > 1.0;
        }
        check(ratio_ok, "pcie-ssd ratio to dram baseline exceeds 1");
    }
    rc = run_cmd("compare --config " + cfg.string() + " --out " +
                     (g_tmp / "out_cmp2").string() + " --kinds dram,pcie-ssd --baseline cxl-ssd",
                 "compare_bad");
    check(rc == 1, "a baseline outside --kinds exits 1");

    std::printf("%s: %d failure(s)\n", g_failures ? "FAILURE" : "SUCCESS", g_failures);
    return g_failures ? 1 : 0;
}

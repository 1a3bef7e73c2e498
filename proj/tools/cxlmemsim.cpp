// cxlmemsim: deterministic simulator for CXL/PCIe memory-expansion systems.
//
// Subcommands:
//   run       single experiment -> results.csv + summary.txt
//   sweep     one axis (alpha | dt_fraction | bf_fraction | threads) -> sweep.csv
//   compare   several system kinds on one identical stream -> compare.csv
//   validate  config check only
//
// CXLMEMSIM_LOG=error|warn|info|debug controls verbosity on stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cxlsim/config.hpp"
#include "cxlsim/system.hpp"

namespace fs = std::filesystem;
using namespace cxlsim;

namespace {

int g_log_level = 1; // 0 error, 1 warn, 2 info, 3 debug

void init_log_level() {
    const char* env = std::getenv("CXLMEMSIM_LOG");
    if (!env) return;
    std::string v = env;
    if (v == "error") g_log_level = 0;
    else if (v == "warn") g_log_level = 1;
    else if (v == "info") g_log_level = 2;
    else if (v == "debug") g_log_level = 3;
}

void log_info(const std::string& msg) {
    if (g_log_level >= 2) std::cerr << "[cxlmemsim] " << msg << "\n";
}

struct OutputDir {
    fs::path dir;
    bool force = false;

    void prepare() const { fs::create_directories(dir); }

    // Refuses to clobber existing results unless --force; writes through a
    // temp file and renames so readers never see partial output.
    void write(const std::string& name, const std::string& content) const {
        fs::path target = dir / name;
        if (fs::exists(target) && !force) {
            throw ConfigError("refusing to overwrite " + target.string() +
                              " (use --force)");
        }
        fs::path tmp = target;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw SimError("cannot write " + tmp.string());
            out << content;
        }
        fs::rename(tmp, target);
    }
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;
    bool force = false;
    bool event_log = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
    cmd->add_option("--config", args.config_path, "config file (JSON)")->required();
    if (needs_out) cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override run.seed");
    cmd->add_flag("--force", args.force, "overwrite existing result files");
    cmd->add_flag("--event-log", args.event_log, "emit the device event log CSV");
}

FullConfig load_common(const CommonArgs& args) {
    FullConfig fc = load_config(args.config_path);
    if (args.seed >= 0) fc.system.seed = static_cast<std::uint64_t>(args.seed);
    fc.system.emit_event_log = args.event_log;
    return fc;
}

std::string render_csv(const StatsReport& r) {
    std::ostringstream os;
    r.write_csv(os);
    return os.str();
}

std::string render_summary(const StatsReport& r) {
    std::ostringstream os;
    r.write_summary(os);
    return os.str();
}

std::string render_heat(const std::vector<std::pair<std::uint32_t, std::uint64_t>>& heat) {
    std::ostringstream os;
    os << "function_id,storage_accesses\n";
    for (const auto& [fn, n] : heat) os << fn << ',' << n << '\n';
    return os.str();
}

std::string render_device_log(const std::vector<DeviceLogEntry>& log) {
    std::ostringstream os;
    os << "tick_ps,event,detail\n";
    for (const auto& e : log) os << e.tick << ',' << e.event << ',' << e.detail << '\n';
    return os.str();
}

struct RunOutput {
    StatsReport report;
    std::vector<std::pair<std::uint32_t, std::uint64_t>> heat;
    std::vector<DeviceLogEntry> device_log;
    bool profiled = false;
};

// One full experiment, with the CxlAssd profiling pre-pass when the config
// needs a heat table it does not already have.
RunOutput run_once(SystemConfig cfg, const std::vector<AccessRecord>& stream) {
    RunOutput out;
    if (cfg.kind == SystemKind::CxlAssd && cfg.annotations.bf_function_fraction > 0.0 &&
        cfg.function_heat.empty()) {
        log_info("profiling pass (function heat)");
        out.heat = profile_function_heat(cfg, stream);
        cfg.function_heat = out.heat;
        out.profiled = true;
    }
    Simulation sim(cfg);
    out.report = sim.run(stream);
    out.device_log = sim.device_log();
    return out;
}

int cmd_run(const CommonArgs& args) {
    FullConfig fc = load_common(args);
    OutputDir out{args.out_dir, args.force};
    out.prepare();
    auto stream = generate_workload(fc.workload, fc.system.seed, fc.system.host.cores);
    log_info("running " + std::string(to_string(fc.system.kind)) + " over " +
             std::to_string(stream.size()) + " records");
    RunOutput ro = run_once(fc.system, stream);
    out.write("results.csv", render_csv(ro.report));
    out.write("summary.txt", render_summary(ro.report));
    if (ro.profiled) out.write("profile.csv", render_heat(ro.heat));
    if (args.event_log) out.write("device_log.csv", render_device_log(ro.device_log));
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<std::string>& values) {
    FullConfig fc = load_common(args);
    if (values.empty()) throw ConfigError("sweep: at least one --values entry required");
    if (axis != "alpha" && axis != "dt_fraction" && axis != "bf_fraction" &&
        axis != "threads")
        throw ConfigError("sweep axis must be alpha|dt_fraction|bf_fraction|threads");
    if (axis == "alpha" && fc.workload.type != WorkloadSpec::Type::ApexMap)
        throw ConfigError("sweep axis=alpha applies to apexmap workloads only");
    if ((axis == "dt_fraction" || axis == "bf_fraction") &&
        fc.system.kind != SystemKind::CxlAssd)
        throw ConfigError("sweep axis=" + axis + " applies to system.kind=cxl-assd only");
    if (axis == "threads" && fc.workload.type != WorkloadSpec::Type::Stream)
        throw ConfigError(
            "sweep axis=threads applies to STREAM workloads only (workload.type=stream)");

    OutputDir out{args.out_dir, args.force};
    out.prepare();
    std::ostringstream sweep;
    sweep << "axis_value,mean_latency_ps,p99_9_latency_ps,storage_accesses,total_ticks\n";
    for (const std::string& v : values) {
        FullConfig point = fc;
        if (axis == "alpha") {
            point.workload.apex.alpha = std::stod(v);
        } else if (axis == "dt_fraction") {
            point.system.annotations.dt_mode = DtMode::Target;
            point.system.annotations.dt_target_fraction = std::stod(v);
        } else if (axis == "bf_fraction") {
            point.system.annotations.bf_function_fraction = std::stod(v);
        } else {
            point.workload.stream.threads = static_cast<std::uint32_t>(std::stoul(v));
            point.system.host.cores = point.workload.stream.threads;
        }
        point.workload.validate();
        point.system.validate();
        auto stream =
            generate_workload(point.workload, point.system.seed, point.system.host.cores);
        log_info("sweep " + axis + "=" + v);
        RunOutput ro = run_once(point.system, stream);
        out.write("results_" + axis + "_" + v + ".csv", render_csv(ro.report));
        const StatsReport& r = ro.report;
        sweep << v << ',' << r.mean_latency_ps() << ','
              << (r.counted_samples() ? r.latency_percentile(0.999) : 0) << ','
              << r.storage_accesses() << ',' << r.total_ticks() << '\n';
    }
    out.write("sweep.csv", sweep.str());
    return 0;
}

int cmd_compare(const CommonArgs& args, const std::vector<std::string>& kinds,
                const std::string& baseline) {
    FullConfig fc = load_common(args);
    if (kinds.size() < 2) throw ConfigError("compare: at least two --kinds required");
    bool baseline_in = false;
    for (const std::string& k : kinds) baseline_in = baseline_in || k == baseline;
    if (!baseline_in) throw ConfigError("compare: baseline must be one of --kinds");

    OutputDir out{args.out_dir, args.force};
    out.prepare();
    auto stream = generate_workload(fc.workload, fc.system.seed, fc.system.host.cores);

    std::vector<std::pair<std::string, StatsReport>> reports;
    for (const std::string& k : kinds) {
        SystemConfig cfg = fc.system;
        cfg.kind = system_kind_from_string(k);
        log_info("compare " + k);
        reports.emplace_back(k, run_once(cfg, stream).report);
    }
    const StatsReport* base = nullptr;
    for (const auto& [k, r] : reports)
        if (k == baseline) base = &r;
    std::ostringstream cmp;
    cmp << "kind,total_ticks,ratio_to_baseline\n";
    for (const auto& [k, r] : reports) {
        cmp << k << ',' << r.total_ticks() << ',' << ratio_to_baseline(r, *base) << '\n';
    }
    out.write("compare.csv", cmp.str());
    return 0;
}

int cmd_validate(const CommonArgs& args) {
    load_common(args);
    std::cout << "ok\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    init_log_level();
    CLI::App app{"CXL/PCIe memory-expansion simulator"};
    app.require_subcommand(1);

    CommonArgs run_args, sweep_args, compare_args, validate_args;
    std::string axis;
    std::vector<std::string> values;
    std::vector<std::string> kinds;
    std::string baseline;

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run, run_args);

    CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis");
    add_common(sweep, sweep_args);
    sweep->add_option("--axis", axis, "alpha|dt_fraction|bf_fraction|threads")->required();
    sweep->add_option("--values", values, "axis values")->required()->delimiter(',');

    CLI::App* compare = app.add_subcommand("compare", "compare system kinds");
    add_common(compare, compare_args);
    compare->add_option("--kinds", kinds, "system kinds to run")->required()->delimiter(',');
    compare->add_option("--baseline", baseline, "kind to normalize against")->required();

    CLI::App* validate = app.add_subcommand("validate", "validate a config file");
    add_common(validate, validate_args, /*needs_out=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args, axis, values);
        if (compare->parsed()) return cmd_compare(compare_args, kinds, baseline);
        if (validate->parsed()) return cmd_validate(validate_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

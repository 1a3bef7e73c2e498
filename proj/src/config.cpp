#include "cxlsim/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "cxlsim/errors.hpp"

namespace cxlsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ConfigError(path + ": " + why);
}

void expect_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
    }
}

double get_num(const json& j, const std::string& path, const char* key, double dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number()) fail(path + "." + key, "expected a number");
    return j[key].get<double>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key,
                      std::uint64_t dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
        fail(path + "." + key, "expected an integer");
    auto v = j[key].get<std::int64_t>();
    if (v < 0) fail(path + "." + key, "must be non-negative");
    return static_cast<std::uint64_t>(v);
}

bool get_bool(const json& j, const std::string& path, const char* key, bool dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_boolean()) fail(path + "." + key, "expected a boolean");
    return j[key].get<bool>();
}

std::string get_str(const json& j, const std::string& path, const char* key,
                    const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_string()) fail(path + "." + key, "expected a string");
    return j[key].get<std::string>();
}

CacheLevelConfig parse_cache_level(const json& j, const std::string& path,
                                   CacheLevelConfig dflt) {
    expect_keys(j, path, {"size_kib", "ways", "mshrs", "hit_cycles"});
    CacheLevelConfig out = dflt;
    out.size_bytes = get_u64(j, path, "size_kib", dflt.size_bytes / 1024) * 1024;
    out.ways = static_cast<std::uint32_t>(get_u64(j, path, "ways", dflt.ways));
    out.mshrs = static_cast<std::uint32_t>(get_u64(j, path, "mshrs", dflt.mshrs));
    out.hit_cycles = static_cast<std::uint32_t>(get_u64(j, path, "hit_cycles", dflt.hit_cycles));
    return out;
}

HostConfig parse_host(const json& j) {
    HostConfig h;
    expect_keys(j, "host",
                {"cores", "freq_ghz", "lsq_entries", "store_queue_entries", "l1i", "l1d", "l2",
                 "line_bytes"});
    h.cores = static_cast<std::uint32_t>(get_u64(j, "host", "cores", h.cores));
    double ghz = get_num(j, "host", "freq_ghz", 4.0);
    if (ghz <= 0.0) fail("host.freq_ghz", "must be positive");
    h.freq_hz = static_cast<std::uint64_t>(ghz * 1e9 + 0.5);
    h.lsq_entries = static_cast<std::uint32_t>(get_u64(j, "host", "lsq_entries", h.lsq_entries));
    h.store_queue_entries = static_cast<std::uint32_t>(
        get_u64(j, "host", "store_queue_entries", h.store_queue_entries));
    h.line_bytes = static_cast<std::uint32_t>(get_u64(j, "host", "line_bytes", h.line_bytes));
    if (j.contains("l1i")) h.l1i = parse_cache_level(j["l1i"], "host.l1i", h.l1i);
    if (j.contains("l1d")) h.l1d = parse_cache_level(j["l1d"], "host.l1d", h.l1d);
    if (j.contains("l2")) h.l2 = parse_cache_level(j["l2"], "host.l2", h.l2);
    return h;
}

AnnotationConfig parse_annotations(const json& j) {
    AnnotationConfig a;
    expect_keys(j, "annotations",
                {"dt_mode", "dt_threshold", "dt_target_fraction", "bf_function_fraction",
                 "nb_functions", "dt_window_us", "function_heat"});
    std::string mode = get_str(j, "annotations", "dt_mode", "off");
    if (mode == "off") a.dt_mode = DtMode::Off;
    else if (mode == "threshold") a.dt_mode = DtMode::Threshold;
    else if (mode == "target") a.dt_mode = DtMode::Target;
    else fail("annotations.dt_mode", "must be off|threshold|target");
    a.dt_threshold = get_num(j, "annotations", "dt_threshold", a.dt_threshold);
    a.dt_target_fraction = get_num(j, "annotations", "dt_target_fraction", a.dt_target_fraction);
    a.bf_function_fraction =
        get_num(j, "annotations", "bf_function_fraction", a.bf_function_fraction);
    a.dt_window = ps_from_us(get_num(j, "annotations", "dt_window_us", 10.0));
    if (j.contains("nb_functions")) {
        if (!j["nb_functions"].is_array()) fail("annotations.nb_functions", "expected an array");
        for (const auto& v : j["nb_functions"])
            a.nb_functions.insert(v.get<std::uint32_t>());
    }
    return a;
}

LinkConfig parse_link(const json& j) {
    LinkConfig l;
    expect_keys(j, "link", {"lanes", "gt_per_lane", "per_hop_latency_ns", "header_bytes"});
    l.lanes = static_cast<std::uint32_t>(get_u64(j, "link", "lanes", l.lanes));
    l.gt_per_lane = static_cast<std::uint32_t>(get_u64(j, "link", "gt_per_lane", l.gt_per_lane));
    l.per_hop_latency = ps_from_ns(get_num(j, "link", "per_hop_latency_ns", 25.0));
    l.header_bytes =
        static_cast<std::uint32_t>(get_u64(j, "link", "header_bytes", l.header_bytes));
    return l;
}

void parse_device(const json& j, FlashConfig& f, DeviceDramConfig& d) {
    expect_keys(j, "device",
                {"capacity_mib", "page_bytes", "pages_per_block", "channels", "t_read_us",
                 "t_prog_us", "t_erase_ms", "over_provision", "gc_low_watermark",
                 "gc_high_watermark", "dt_window_us", "dram_cache"});
    f.capacity = get_u64(j, "device", "capacity_mib", f.capacity >> 20) << 20;
    f.page_bytes = static_cast<std::uint32_t>(get_u64(j, "device", "page_bytes", f.page_bytes));
    f.pages_per_block =
        static_cast<std::uint32_t>(get_u64(j, "device", "pages_per_block", f.pages_per_block));
    f.channels = static_cast<std::uint32_t>(get_u64(j, "device", "channels", f.channels));
    f.t_read = ps_from_us(get_num(j, "device", "t_read_us", 3.0));
    f.t_prog = ps_from_us(get_num(j, "device", "t_prog_us", 100.0));
    f.t_erase = ps_from_ms(get_num(j, "device", "t_erase_ms", 1.0));
    f.over_provision = get_num(j, "device", "over_provision", f.over_provision);
    f.gc_low_watermark = get_num(j, "device", "gc_low_watermark", f.gc_low_watermark);
    f.gc_high_watermark = get_num(j, "device", "gc_high_watermark", f.gc_high_watermark);
    f.dt_window = ps_from_us(get_num(j, "device", "dt_window_us", 10.0));
    if (j.contains("dram_cache")) {
        const json& c = j["dram_cache"];
        expect_keys(c, "device.dram_cache",
                    {"capacity_mib", "capacity_divisor", "ways", "line_bytes", "t_rp_ns",
                     "t_rcd_ns", "t_ras_ns"});
        if (c.contains("capacity_mib")) {
            d.capacity = get_u64(c, "device.dram_cache", "capacity_mib", 0) << 20;
        } else if (c.contains("capacity_divisor")) {
            std::uint64_t div = get_u64(c, "device.dram_cache", "capacity_divisor", 64);
            if (div == 0) fail("device.dram_cache.capacity_divisor", "must be positive");
            d.capacity = f.capacity / div;
        }
        d.ways = static_cast<std::uint32_t>(get_u64(c, "device.dram_cache", "ways", d.ways));
        d.line_bytes = static_cast<std::uint32_t>(
            get_u64(c, "device.dram_cache", "line_bytes", d.line_bytes));
        d.t_rp = ps_from_ns(get_num(c, "device.dram_cache", "t_rp_ns", 9.1));
        d.t_rcd = ps_from_ns(get_num(c, "device.dram_cache", "t_rcd_ns", 9.1));
        d.t_ras = ps_from_ns(get_num(c, "device.dram_cache", "t_ras_ns", 19.0));
    }
}

DramTimingConfig parse_dram_timing(const json& j) {
    DramTimingConfig d;
    expect_keys(j, "dram_timing",
                {"t_rp_ns", "t_rcd_ns", "t_cas_ns", "channels", "ranks", "banks", "burst_ns"});
    d.t_rp = ps_from_ns(get_num(j, "dram_timing", "t_rp_ns", 12.5));
    d.t_rcd = ps_from_ns(get_num(j, "dram_timing", "t_rcd_ns", 12.5));
    d.t_cas = ps_from_ns(get_num(j, "dram_timing", "t_cas_ns", 12.5));
    d.channels = static_cast<std::uint32_t>(get_u64(j, "dram_timing", "channels", d.channels));
    d.ranks = static_cast<std::uint32_t>(get_u64(j, "dram_timing", "ranks", d.ranks));
    d.banks = static_cast<std::uint32_t>(get_u64(j, "dram_timing", "banks", d.banks));
    d.burst = ps_from_ns(get_num(j, "dram_timing", "burst_ns", 2.5));
    return d;
}

WorkloadSpec parse_workload(const json& j) {
    WorkloadSpec w;
    std::string type = get_str(j, "workload", "type", "");
    if (type == "apexmap") {
        w.type = WorkloadSpec::Type::ApexMap;
        expect_keys(j, "workload",
                    {"type", "alpha", "footprint_mib", "count", "load_fraction"});
        w.apex.alpha = get_num(j, "workload", "alpha", 1.0);
        w.apex.footprint_bytes = get_u64(j, "workload", "footprint_mib", 0) << 20;
        w.apex.count = get_u64(j, "workload", "count", 0);
        w.apex.load_fraction = get_num(j, "workload", "load_fraction", 1.0);
    } else if (type == "mix") {
        w.type = WorkloadSpec::Type::Mix;
        expect_keys(j, "workload",
                    {"type", "load_pct", "store_pct", "compute_pct", "footprint_mib", "alpha",
                     "function_zipf_s", "function_count", "count"});
        w.mix.load_pct = get_num(j, "workload", "load_pct", 0.0);
        w.mix.store_pct = get_num(j, "workload", "store_pct", 0.0);
        w.mix.compute_pct = get_num(j, "workload", "compute_pct", 1.0);
        w.mix.footprint_bytes = get_u64(j, "workload", "footprint_mib", 0) << 20;
        w.mix.alpha = get_num(j, "workload", "alpha", 0.05);
        w.mix.function_zipf_s = get_num(j, "workload", "function_zipf_s", 1.2);
        w.mix.function_count =
            static_cast<std::uint32_t>(get_u64(j, "workload", "function_count", 64));
        w.mix.count = get_u64(j, "workload", "count", 0);
    } else if (type == "stream") {
        w.type = WorkloadSpec::Type::Stream;
        expect_keys(j, "workload", {"type", "kernel", "elements", "threads"});
        w.stream.kernel = stream_kernel_from_string(get_str(j, "workload", "kernel", "copy"));
        w.stream.elements = get_u64(j, "workload", "elements", 0);
        w.stream.threads = static_cast<std::uint32_t>(get_u64(j, "workload", "threads", 1));
    } else if (type == "trace") {
        w.type = WorkloadSpec::Type::Trace;
        expect_keys(j, "workload", {"type", "path"});
        w.trace_path = get_str(j, "workload", "path", "");
        if (w.trace_path.empty()) fail("workload.path", "required for trace workloads");
    } else {
        fail("workload.type", "must be apexmap|mix|stream|trace");
    }
    return w;
}

} // namespace

std::uint64_t WorkloadSpec::footprint_bytes() const {
    switch (type) {
    case Type::ApexMap: return apex.footprint_bytes;
    case Type::Mix: return mix.footprint_bytes;
    case Type::Stream: return stream.footprint_bytes();
    case Type::Trace: return 0; // derived from the trace at load time
    }
    return 0;
}

void WorkloadSpec::validate() const {
    switch (type) {
    case Type::ApexMap: apex.validate(); break;
    case Type::Mix: mix.validate(); break;
    case Type::Stream: stream.validate(); break;
    case Type::Trace:
        if (trace_path.empty()) throw ConfigError("workload.path: required");
        break;
    }
}

FullConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    expect_keys(j, "config",
                {"system", "host", "annotations", "link", "device", "dram_timing", "workload",
                 "run"});
    FullConfig out;
    if (!j.contains("workload")) fail("workload", "section is required");
    out.workload = parse_workload(j["workload"]);

    if (j.contains("system")) {
        expect_keys(j["system"], "system", {"kind"});
        out.system.kind =
            system_kind_from_string(get_str(j["system"], "system", "kind", "cxl-ssd"));
    }
    if (j.contains("host")) out.system.host = parse_host(j["host"]);
    if (j.contains("annotations")) {
        out.system.annotations = parse_annotations(j["annotations"]);
        // Optional pre-supplied heat table: [[function_id, storage_accesses], ...]
        const json& a = j["annotations"];
        if (a.contains("function_heat")) {
            if (!a["function_heat"].is_array())
                fail("annotations.function_heat", "expected an array of [id, count] pairs");
            for (const auto& row : a["function_heat"]) {
                if (!row.is_array() || row.size() != 2)
                    fail("annotations.function_heat", "expected [id, count] pairs");
                out.system.function_heat.emplace_back(row[0].get<std::uint32_t>(),
                                                      row[1].get<std::uint64_t>());
            }
        }
    }
    if (j.contains("link")) out.system.link = parse_link(j["link"]);
    if (j.contains("device")) parse_device(j["device"], out.system.flash, out.system.device_dram);
    if (j.contains("dram_timing")) out.system.dram = parse_dram_timing(j["dram_timing"]);
    if (j.contains("run")) {
        expect_keys(j["run"], "run", {"seed", "warmup_fraction", "emit_event_log"});
        out.system.seed = get_u64(j["run"], "run", "seed", 1);
        out.system.warmup_fraction =
            get_num(j["run"], "run", "warmup_fraction", out.system.warmup_fraction);
        out.system.emit_event_log =
            get_bool(j["run"], "run", "emit_event_log", out.system.emit_event_log);
    }

    out.workload.validate();
    std::uint64_t footprint = out.workload.footprint_bytes();
    if (footprint == 0 && out.workload.type != WorkloadSpec::Type::Trace)
        fail("workload", "footprint must be positive");
    out.system.region_size = footprint ? footprint : (64ull << 20);
    // STREAM threads become cores so each thread owns an issue port.
    if (out.workload.type == WorkloadSpec::Type::Stream)
        out.system.host.cores = out.workload.stream.threads;
    out.system.validate();
    return out;
}

FullConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::vector<AccessRecord> generate_workload(const WorkloadSpec& spec, std::uint64_t seed,
                                            std::uint32_t cores) {
    SplitMix64 root(seed);
    std::vector<AccessRecord> stream;
    switch (spec.type) {
    case WorkloadSpec::Type::ApexMap:
        stream = apexmap_generate(spec.apex, root.split(1));
        break;
    case WorkloadSpec::Type::Mix:
        stream = mix_gen(spec.mix, root.split(2));
        break;
    case WorkloadSpec::Type::Stream:
        return stream_gen(spec.stream); // cores carried by thread ids already
    case WorkloadSpec::Type::Trace:
        stream = load_trace(spec.trace_path);
        break;
    }
    assign_cores(stream, cores);
    return stream;
}

} // namespace cxlsim

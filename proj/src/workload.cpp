#include "cxlsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cxlsim/errors.hpp"

namespace cxlsim {

// ---------------------------------------------------------------------------
// Apex-Map
// ---------------------------------------------------------------------------

void ApexMapConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ConfigError("apexmap.alpha must be in (0,1]");
    if (footprint_bytes == 0 || footprint_bytes % kLineBytes != 0)
        throw ConfigError("apexmap.footprint_bytes must be a positive multiple of 64");
    if (request_bytes != kLineBytes)
        throw ConfigError("apexmap.request_bytes must be 64");
    if (load_fraction < 0.0 || load_fraction > 1.0)
        throw ConfigError("apexmap.load_fraction must be in [0,1]");
}

AccessRecord apexmap_next(SplitMix64& rng, const ApexMapConfig& cfg) {
    std::uint64_t lines = cfg.footprint_bytes / kLineBytes;
    double u = rng.next_double();
    double scaled = static_cast<double>(lines) * std::pow(u, 1.0 / cfg.alpha);
    auto index = static_cast<std::uint64_t>(scaled);
    if (index >= lines) index = lines - 1;
    AccessRecord rec;
    rec.address = index * kLineBytes;
    rec.function_id = 0;
    if (cfg.load_fraction >= 1.0) {
        rec.op = OpType::Load;
    } else {
        rec.op = rng.next_double() < cfg.load_fraction ? OpType::Load : OpType::Store;
    }
    return rec;
}

std::vector<AccessRecord> apexmap_generate(const ApexMapConfig& cfg, SplitMix64 rng) {
    cfg.validate();
    std::vector<AccessRecord> out;
    out.reserve(cfg.count);
    for (std::uint64_t i = 0; i < cfg.count; ++i) out.push_back(apexmap_next(rng, cfg));
    return out;
}

// ---------------------------------------------------------------------------
// STREAM
// ---------------------------------------------------------------------------

StreamKernel stream_kernel_from_string(const std::string& s) {
    if (s == "copy") return StreamKernel::Copy;
    if (s == "scale") return StreamKernel::Scale;
    if (s == "add") return StreamKernel::Add;
    if (s == "triad") return StreamKernel::Triad;
    throw ConfigError("workload.kernel must be copy|scale|add|triad, got '" + s + "'");
}

const char* to_string(StreamKernel k) {
    switch (k) {
    case StreamKernel::Copy: return "copy";
    case StreamKernel::Scale: return "scale";
    case StreamKernel::Add: return "add";
    case StreamKernel::Triad: return "triad";
    }
    return "?";
}

void StreamConfig::validate() const {
    if (elements == 0) throw ConfigError("stream.elements must be positive");
    if (threads == 0) throw ConfigError("stream.threads must be positive");
    if (elements % threads != 0)
        throw ConfigError("stream.elements must be divisible by stream.threads");
}

std::vector<AccessRecord> stream_gen(const StreamConfig& cfg) {
    cfg.validate();
    std::uint64_t a = cfg.base_address;
    std::uint64_t b = a + cfg.elements * kLineBytes;
    std::uint64_t c = b + cfg.elements * kLineBytes;
    auto fid = static_cast<std::uint32_t>(cfg.kernel);

    std::vector<AccessRecord> out;
    std::uint64_t per_op = cfg.kernel == StreamKernel::Add || cfg.kernel == StreamKernel::Triad
                               ? 3
                               : 2;
    out.reserve(cfg.elements * per_op);
    std::uint64_t chunk = cfg.elements / cfg.threads;
    for (std::uint32_t t = 0; t < cfg.threads; ++t) {
        std::uint64_t lo = static_cast<std::uint64_t>(t) * chunk;
        std::uint64_t hi = lo + chunk;
        for (std::uint64_t i = lo; i < hi; ++i) {
            std::uint64_t off = i * kLineBytes;
            switch (cfg.kernel) {
            case StreamKernel::Copy:
            case StreamKernel::Scale:
                out.push_back({OpType::Load, a + off, fid, t});
                out.push_back({OpType::Store, b + off, fid, t});
                break;
            case StreamKernel::Add:
                out.push_back({OpType::Load, a + off, fid, t});
                out.push_back({OpType::Load, b + off, fid, t});
                out.push_back({OpType::Store, c + off, fid, t});
                break;
            case StreamKernel::Triad:
                out.push_back({OpType::Load, b + off, fid, t});
                out.push_back({OpType::Load, c + off, fid, t});
                out.push_back({OpType::Store, a + off, fid, t});
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mixes
// ---------------------------------------------------------------------------

void MixConfig::validate() const {
    double sum = load_pct + store_pct + compute_pct;
    if (load_pct < 0 || store_pct < 0 || compute_pct < 0 || std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("mix fractions must be non-negative and sum to 1");
    if (footprint_bytes == 0 || footprint_bytes % kLineBytes != 0)
        throw ConfigError("mix.footprint_bytes must be a positive multiple of 64");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("mix.alpha must be in (0,1]");
    if (function_count == 0) throw ConfigError("mix.function_count must be positive");
    if (function_zipf_s <= 0.0) throw ConfigError("mix.function_zipf_s must be positive");
}

std::vector<AccessRecord> mix_gen(const MixConfig& cfg, SplitMix64 rng) {
    cfg.validate();
    // Zipf CDF over function ranks; rank k gets weight (k+1)^-s.
    std::vector<double> cdf(cfg.function_count);
    double total = 0.0;
    for (std::uint32_t k = 0; k < cfg.function_count; ++k) {
        total += std::pow(static_cast<double>(k + 1), -cfg.function_zipf_s);
        cdf[k] = total;
    }
    for (double& v : cdf) v /= total;

    std::uint64_t lines_total = cfg.footprint_bytes / kLineBytes;
    std::uint64_t lines_per_fn = lines_total / cfg.function_count;
    if (lines_per_fn == 0) lines_per_fn = 1;

    std::vector<AccessRecord> out;
    out.reserve(cfg.count);
    for (std::uint64_t i = 0; i < cfg.count; ++i) {
        AccessRecord rec;
        double cls = rng.next_double();
        if (cls < cfg.load_pct) rec.op = OpType::Load;
        else if (cls < cfg.load_pct + cfg.store_pct) rec.op = OpType::Store;
        else rec.op = OpType::Compute;
        if (rec.op != OpType::Compute) {
            double uf = rng.next_double();
            std::uint32_t fn = static_cast<std::uint32_t>(
                std::lower_bound(cdf.begin(), cdf.end(), uf) - cdf.begin());
            if (fn >= cfg.function_count) fn = cfg.function_count - 1;
            rec.function_id = fn;
            // Power-law locality inside the function's contiguous slice. The
            // hot head of each slice is staggered so hot lines of different
            // functions never stride-alias into one cache set.
            double u = rng.next_double();
            double scaled = static_cast<double>(lines_per_fn) * std::pow(u, 1.0 / cfg.alpha);
            auto idx = static_cast<std::uint64_t>(scaled);
            if (idx >= lines_per_fn) idx = lines_per_fn - 1;
            idx = (idx + static_cast<std::uint64_t>(fn) * 131) % lines_per_fn;
            std::uint64_t line = static_cast<std::uint64_t>(fn) * lines_per_fn + idx;
            if (line >= lines_total) line = lines_total - 1;
            rec.address = line * kLineBytes;
        }
        out.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

std::vector<AccessRecord> load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("trace: cannot open '" + path + "'");
    std::vector<AccessRecord> out;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t pos = line.find('#');
        if (pos != std::string::npos) line.resize(pos);
        std::istringstream ss(line);
        std::string op;
        if (!(ss >> op)) continue; // blank or comment-only line
        AccessRecord rec;
        if (op == "C") {
            rec.op = OpType::Compute;
            out.push_back(rec);
            continue;
        }
        if (op == "L") rec.op = OpType::Load;
        else if (op == "S") rec.op = OpType::Store;
        else
            throw ConfigError("ParseError at line " + std::to_string(lineno) +
                              ": unknown op '" + op + "'");
        std::string addr;
        std::uint64_t fid = 0;
        if (!(ss >> addr >> fid))
            throw ConfigError("ParseError at line " + std::to_string(lineno) +
                              ": expected `OP ADDRESS_HEX FUNCTION_ID`");
        try {
            rec.address = std::stoull(addr, nullptr, 16);
        } catch (const std::exception&) {
            throw ConfigError("ParseError at line " + std::to_string(lineno) +
                              ": bad address '" + addr + "'");
        }
        if (rec.address % kLineBytes != 0)
            throw ConfigError("AlignmentError at line " + std::to_string(lineno) +
                              ": address must be 64 B aligned");
        rec.function_id = static_cast<std::uint32_t>(fid);
        out.push_back(rec);
    }
    return out;
}

void write_trace(const std::string& path, const std::vector<AccessRecord>& stream) {
    std::ofstream out(path);
    if (!out) throw ConfigError("trace: cannot write '" + path + "'");
    for (const AccessRecord& rec : stream) {
        if (rec.op == OpType::Compute) {
            out << "C\n";
            continue;
        }
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%c 0x%llx %u\n", rec.op == OpType::Load ? 'L' : 'S',
                      static_cast<unsigned long long>(rec.address), rec.function_id);
        out << buf;
    }
}

void assign_cores(std::vector<AccessRecord>& stream, std::uint32_t cores) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
        stream[i].core = static_cast<std::uint32_t>(i % cores);
    }
}

} // namespace cxlsim

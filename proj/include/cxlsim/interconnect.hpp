#ifndef CXLSIM_INTERCONNECT_HPP
#define CXLSIM_INTERCONNECT_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cxlsim/event_queue.hpp"
#include "cxlsim/protocol.hpp"

namespace cxlsim {

// ---------------------------------------------------------------------------
// Address map
// ---------------------------------------------------------------------------

enum class RegionKind : std::uint8_t { HostDram, HdmCacheable, BarNonCacheable };

struct Region {
    std::uint64_t base = 0;
    std::uint64_t size = 0;
    RegionKind kind = RegionKind::HostDram;
    std::uint32_t endpoint = 0;      // meaningless for HostDram
    std::int32_t mld_index = -1;
    std::uint64_t device_offset = 0; // partition base inside the device
    std::uint32_t vh = 0;            // routing binding
};

struct Resolved {
    RegionKind kind;
    std::uint32_t endpoint;
    std::uint64_t device_addr;
    bool cacheable;
    std::uint32_t vh;
};

class AddressMap {
public:
    void add_region(const Region& r);
    void validate() const; // throws ConfigError on overlap or empty region
    Resolved resolve(std::uint64_t addr) const; // throws SimError("UnmappedAddress...")
    const std::vector<Region>& regions() const { return regions_; }

private:
    std::vector<Region> regions_; // kept sorted by base
};

// ---------------------------------------------------------------------------
// Link timing
// ---------------------------------------------------------------------------

struct LinkConfig {
    std::uint32_t lanes = 8; // 4 or 8
    std::uint32_t gt_per_lane = 64;
    Tick per_hop_latency = 25 * kPsPerNs;
    std::uint32_t header_bytes = 16;

    std::uint64_t bytes_per_ns() const {
        return static_cast<std::uint64_t>(lanes) * gt_per_lane / 8;
    }
    void validate() const;
};

// hops * per_hop_latency + (header + payload) / rate, rounded up to 1 ps.
Tick transfer_latency(std::uint32_t payload_bytes, const LinkConfig& link,
                      std::uint32_t hops);

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

enum class EndpointKind : std::uint8_t { FlashSsd, DramEp };

struct SwitchSpec {
    std::string name;
    std::uint32_t lanes_total = 64; // 64-128; a x16 port per 16 lanes
};

struct EndpointSpec {
    std::string name;
    EndpointKind kind = EndpointKind::FlashSsd;
    std::uint64_t capacity = 0;
    std::uint32_t mld_count = 1; // 1..16 logical devices
};

struct VhSpec {
    std::uint32_t host = 0;
    std::vector<std::string> path; // switch names, in order host -> endpoint
    std::string endpoint;
    std::int32_t mld_index = -1; // -1 when the endpoint is not partitioned
};

struct TopologySpec {
    std::uint32_t hosts = 1;
    std::vector<SwitchSpec> switches;
    std::vector<EndpointSpec> endpoints;
    std::vector<std::pair<std::string, std::string>> edges; // "host0", switch or endpoint names
    std::vector<VhSpec> vhs;
};

struct MldPartition {
    std::uint64_t base = 0;
    std::uint64_t size = 0;
};

// Equal split, remainder to the last partition. Throws ConfigError
// ("TooManyMlds") for k outside 1..16.
std::vector<MldPartition> partition_mld(std::uint64_t capacity, std::uint32_t k);

// Validated immutable fabric wiring. Validation errors name the offending
// element (switch, edge, or VH).
class Topology {
public:
    struct Vh {
        std::uint32_t host;
        std::uint32_t endpoint;
        std::int32_t mld_index;
        std::vector<std::uint32_t> links; // edge ids along the path
    };

    static Topology build(const TopologySpec& spec);
    // Single host wired straight to a single endpoint.
    static Topology direct(EndpointKind kind, std::uint64_t capacity);

    const std::vector<Vh>& vhs() const { return vhs_; }
    const std::vector<EndpointSpec>& endpoints() const { return endpoints_; }
    std::size_t link_count() const { return link_count_; }
    const std::vector<MldPartition>& partitions(std::uint32_t endpoint) const {
        return partitions_[endpoint];
    }
    // Throws SimError("NoVhBinding...") if the pair has no bound hierarchy.
    std::uint32_t find_vh(std::uint32_t host, std::uint32_t endpoint,
                          std::int32_t mld_index) const;

private:
    std::vector<Vh> vhs_;
    std::vector<EndpointSpec> endpoints_;
    std::vector<std::vector<MldPartition>> partitions_;
    std::size_t link_count_ = 0;
};

// ---------------------------------------------------------------------------
// Fabric: runtime link occupancy and routing
// ---------------------------------------------------------------------------

// Cut-through routing over FIFO links. Each directed link serializes flits
// at the configured byte rate; propagation costs per_hop_latency per hop.
class Fabric {
public:
    using DeliverFn = std::function<void(const Flit&, Tick arrival)>;

    Fabric(EventQueue& eq, Topology topo, LinkConfig link);

    const Topology& topology() const { return topo_; }

    // Schedules delivery at the endpoint (M2S) or back at the host (S2M).
    void route_to_endpoint(const Flit& f, std::uint32_t vh, DeliverFn deliver);
    void route_to_host(const Flit& f, std::uint32_t vh, DeliverFn deliver);

    // Sends a GPF flit down every listed VH; `flush` runs per endpoint and
    // reports completion; `done` fires once every endpoint has flushed and
    // its acknowledgment has traveled back.
    void gpf_broadcast(const std::vector<std::uint32_t>& vhs,
                       std::function<void(std::uint32_t endpoint, Tick arrival,
                                          std::function<void(Tick)> flushed)> flush,
                       std::function<void(Tick)> done);

    std::uint64_t bytes_sent(std::uint32_t link, bool toward_host) const;
    double utilization(std::uint32_t link, bool toward_host) const;

private:
    struct Dir {
        Tick busy_until = 0;
        std::uint64_t bytes = 0;
    };
    struct LinkState {
        Dir dir[2]; // 0: toward endpoint, 1: toward host
    };

    Tick reserve_path(const std::vector<std::uint32_t>& links, bool toward_host,
                      std::uint32_t payload_bytes);

    EventQueue& eq_;
    Topology topo_;
    LinkConfig link_;
    std::vector<LinkState> links_;
};

} // namespace cxlsim

#endif

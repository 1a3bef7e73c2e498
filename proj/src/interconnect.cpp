#include "cxlsim/interconnect.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <set>

#include "cxlsim/errors.hpp"

namespace cxlsim {

// ---------------------------------------------------------------------------
// AddressMap
// ---------------------------------------------------------------------------

void AddressMap::add_region(const Region& r) {
    regions_.push_back(r);
    std::sort(regions_.begin(), regions_.end(),
              [](const Region& a, const Region& b) { return a.base < b.base; });
}

void AddressMap::validate() const {
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        if (regions_[i].size == 0) throw ConfigError("address map: empty region");
        if (i > 0) {
            const Region& prev = regions_[i - 1];
            if (prev.base + prev.size > regions_[i].base)
                throw ConfigError("address map: overlapping regions");
        }
    }
}

Resolved AddressMap::resolve(std::uint64_t addr) const {
    // Regions are sorted by base; find the last region with base <= addr.
    std::size_t lo = 0, hi = regions_.size();
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (regions_[mid].base <= addr) lo = mid + 1; else hi = mid;
    }
    if (lo == 0) throw SimError("UnmappedAddress: 0x" + std::to_string(addr));
    const Region& r = regions_[lo - 1];
    if (addr >= r.base + r.size)
        throw SimError("UnmappedAddress: 0x" + std::to_string(addr));
    Resolved res;
    res.kind = r.kind;
    res.endpoint = r.endpoint;
    res.device_addr = addr - r.base + r.device_offset;
    res.cacheable = r.kind != RegionKind::BarNonCacheable;
    res.vh = r.vh;
    return res;
}

// ---------------------------------------------------------------------------
// Link timing
// ---------------------------------------------------------------------------

void LinkConfig::validate() const {
    if (lanes != 4 && lanes != 8) throw ConfigError("link.lanes must be 4 or 8");
    if (gt_per_lane == 0 || gt_per_lane % 8 != 0)
        throw ConfigError("link.gt_per_lane must be a positive multiple of 8");
    if (bytes_per_ns() == 0) throw ConfigError("link rate must be positive");
}

Tick transfer_latency(std::uint32_t payload_bytes, const LinkConfig& link,
                      std::uint32_t hops) {
    if (hops == 0) throw SimError("transfer_latency: hops must be >= 1");
    std::uint64_t bytes = link.header_bytes + payload_bytes;
    std::uint64_t rate = link.bytes_per_ns();
    Tick serialize = (bytes * kPsPerNs + rate - 1) / rate;
    return hops * link.per_hop_latency + serialize;
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

std::vector<MldPartition> partition_mld(std::uint64_t capacity, std::uint32_t k) {
    if (k < 1 || k > 16)
        throw ConfigError("TooManyMlds: mld_count must be in 1..16, got " +
                          std::to_string(k));
    std::vector<MldPartition> out(k);
    std::uint64_t each = capacity / k;
    std::uint64_t base = 0;
    for (std::uint32_t i = 0; i < k; ++i) {
        out[i].base = base;
        out[i].size = (i == k - 1) ? capacity - base : each;
        base += out[i].size;
    }
    return out;
}

Topology Topology::direct(EndpointKind kind, std::uint64_t capacity) {
    TopologySpec spec;
    spec.hosts = 1;
    spec.endpoints.push_back(EndpointSpec{"ep0", kind, capacity, 1});
    spec.edges.emplace_back("host0", "ep0");
    spec.vhs.push_back(VhSpec{0, {}, "ep0", -1});
    return build(spec);
}

Topology Topology::build(const TopologySpec& spec) {
    Topology t;
    t.endpoints_ = spec.endpoints;
    if (spec.hosts == 0) throw ConfigError("topology: at least one host required");
    if (spec.endpoints.empty()) throw ConfigError("topology: at least one endpoint required");

    std::map<std::string, std::uint32_t> switch_id;
    for (std::uint32_t i = 0; i < spec.switches.size(); ++i) {
        const SwitchSpec& sw = spec.switches[i];
        if (switch_id.count(sw.name))
            throw ConfigError("topology: duplicate switch '" + sw.name + "'");
        switch_id[sw.name] = i;
    }
    std::map<std::string, std::uint32_t> endpoint_id;
    for (std::uint32_t i = 0; i < spec.endpoints.size(); ++i) {
        const EndpointSpec& ep = spec.endpoints[i];
        if (endpoint_id.count(ep.name) || switch_id.count(ep.name))
            throw ConfigError("topology: duplicate endpoint '" + ep.name + "'");
        if (ep.capacity == 0)
            throw ConfigError("topology: endpoint '" + ep.name + "' has zero capacity");
        endpoint_id[ep.name] = i;
        t.partitions_.push_back(partition_mld(ep.capacity, ep.mld_count));
    }

    auto node_name = [&](std::uint32_t host) { return "host" + std::to_string(host); };
    std::set<std::string> hosts;
    for (std::uint32_t h = 0; h < spec.hosts; ++h) hosts.insert(node_name(h));

    auto known = [&](const std::string& n) {
        return hosts.count(n) || switch_id.count(n) || endpoint_id.count(n);
    };

    std::map<std::pair<std::string, std::string>, std::uint32_t> edge_id;
    std::map<std::string, std::uint32_t> ports_used;
    for (std::uint32_t e = 0; e < spec.edges.size(); ++e) {
        const auto& [a, b] = spec.edges[e];
        if (!known(a)) throw ConfigError("topology: edge references unknown node '" + a + "'");
        if (!known(b)) throw ConfigError("topology: edge references unknown node '" + b + "'");
        edge_id[{a, b}] = e;
        edge_id[{b, a}] = e;
        ports_used[a] += 1;
        ports_used[b] += 1;
    }
    t.link_count_ = spec.edges.size();

    // A x16 port per attached link; lanes_total bounds the port count.
    for (const SwitchSpec& sw : spec.switches) {
        std::uint32_t ports = ports_used.count(sw.name) ? ports_used[sw.name] : 0;
        if (ports * 16 > sw.lanes_total)
            throw ConfigError("PortBudgetExceeded: switch '" + sw.name + "' needs " +
                              std::to_string(ports) + " ports but has " +
                              std::to_string(sw.lanes_total) + " lanes");
    }

    std::set<std::pair<std::uint32_t, std::int32_t>> claimed; // (endpoint, partition)
    for (const VhSpec& vh : spec.vhs) {
        if (vh.host >= spec.hosts)
            throw ConfigError("topology: VH references unknown host " +
                              std::to_string(vh.host));
        auto ep = endpoint_id.find(vh.endpoint);
        if (ep == endpoint_id.end())
            throw ConfigError("topology: VH references unknown endpoint '" + vh.endpoint +
                              "'");
        const EndpointSpec& eps = spec.endpoints[ep->second];
        std::int32_t mld = vh.mld_index;
        if (eps.mld_count > 1) {
            if (mld < 0 || mld >= static_cast<std::int32_t>(eps.mld_count))
                throw ConfigError("topology: VH to '" + vh.endpoint +
                                  "' needs a valid mld_index");
        } else {
            mld = mld < 0 ? 0 : mld;
            if (mld != 0)
                throw ConfigError("topology: endpoint '" + vh.endpoint +
                                  "' is not partitioned");
        }
        if (!claimed.insert({ep->second, mld}).second)
            throw ConfigError("PartitionConflict: endpoint '" + vh.endpoint +
                              "' partition " + std::to_string(mld) +
                              " is bound to more than one VH");

        // Resolve the simple path host -> switches* -> endpoint into edges.
        Vh resolved;
        resolved.host = vh.host;
        resolved.endpoint = ep->second;
        resolved.mld_index = mld;
        std::string at = node_name(vh.host);
        std::set<std::string> visited{at};
        std::vector<std::string> chain = vh.path;
        chain.push_back(vh.endpoint);
        for (const std::string& next : chain) {
            if (!visited.insert(next).second)
                throw ConfigError("topology: VH path revisits '" + next + "'");
            auto it = edge_id.find({at, next});
            if (it == edge_id.end())
                throw ConfigError("topology: VH hop '" + at + "' -> '" + next +
                                  "' has no edge");
            resolved.links.push_back(it->second);
            at = next;
        }
        t.vhs_.push_back(std::move(resolved));
    }
    return t;
}

std::uint32_t Topology::find_vh(std::uint32_t host, std::uint32_t endpoint,
                                std::int32_t mld_index) const {
    for (std::uint32_t i = 0; i < vhs_.size(); ++i) {
        const Vh& vh = vhs_[i];
        if (vh.host == host && vh.endpoint == endpoint &&
            (mld_index < 0 || vh.mld_index == mld_index)) {
            return i;
        }
    }
    throw SimError("NoVhBinding: host " + std::to_string(host) + " has no path to endpoint " +
                   std::to_string(endpoint) + " partition " + std::to_string(mld_index));
}

// ---------------------------------------------------------------------------
// Fabric
// ---------------------------------------------------------------------------

Fabric::Fabric(EventQueue& eq, Topology topo, LinkConfig link)
    : eq_(eq), topo_(std::move(topo)), link_(link) {
    links_.resize(topo_.link_count());
}

Tick Fabric::reserve_path(const std::vector<std::uint32_t>& links, bool toward_host,
                          std::uint32_t payload_bytes) {
    std::uint64_t bytes = link_.header_bytes + payload_bytes;
    std::uint64_t rate = link_.bytes_per_ns();
    Tick serialize = (bytes * kPsPerNs + rate - 1) / rate;

    // Head departs each link after any queued traffic; tail trails the head
    // by one serialization time at the final hop (cut-through forwarding).
    Tick head = eq_.now();
    int d = toward_host ? 1 : 0;
    auto order = links;
    if (toward_host) std::reverse(order.begin(), order.end());
    for (std::uint32_t li : order) {
        Dir& dir = links_[li].dir[d];
        Tick start = std::max(head, dir.busy_until);
        dir.busy_until = start + serialize;
        dir.bytes += bytes;
        head = start + link_.per_hop_latency;
    }
    return head + serialize;
}

void Fabric::route_to_endpoint(const Flit& f, std::uint32_t vh, DeliverFn deliver) {
    const Topology::Vh& path = topo_.vhs().at(vh);
    Tick arrival = reserve_path(path.links, false, f.payload_bytes);
    eq_.schedule(arrival, EventKind::FlitArrival,
                 [f, arrival, deliver = std::move(deliver)] { deliver(f, arrival); });
}

void Fabric::route_to_host(const Flit& f, std::uint32_t vh, DeliverFn deliver) {
    const Topology::Vh& path = topo_.vhs().at(vh);
    Tick arrival = reserve_path(path.links, true, f.payload_bytes);
    eq_.schedule(arrival, EventKind::FlitArrival,
                 [f, arrival, deliver = std::move(deliver)] { deliver(f, arrival); });
}

void Fabric::gpf_broadcast(const std::vector<std::uint32_t>& vhs,
                           std::function<void(std::uint32_t, Tick, std::function<void(Tick)>)>
                               flush,
                           std::function<void(Tick)> done) {
    if (vhs.empty()) {
        done(eq_.now());
        return;
    }
    auto remaining = std::make_shared<std::size_t>(vhs.size());
    auto latest = std::make_shared<Tick>(0);
    for (std::uint32_t vh : vhs) {
        std::uint32_t endpoint = topo_.vhs().at(vh).endpoint;
        Flit gpf;
        gpf.cls = FlitClass::M2SReq;
        gpf.opcode = FlitOpcode::Gpf;
        route_to_endpoint(gpf, vh, [this, vh, endpoint, flush, remaining, latest, done](
                                       const Flit& req, Tick arrival) {
            flush(endpoint, arrival, [this, vh, req, remaining, latest, done](Tick flushed) {
                eq_.schedule(flushed, EventKind::GpfDone, [this, vh, req, remaining, latest,
                                                           done] {
                    Flit ack = make_response(req);
                    route_to_host(ack, vh, [remaining, latest, done](const Flit&, Tick t) {
                        *latest = std::max(*latest, t);
                        if (--*remaining == 0) done(*latest);
                    });
                });
            });
        });
    }
}

std::uint64_t Fabric::bytes_sent(std::uint32_t link, bool toward_host) const {
    return links_[link].dir[toward_host ? 1 : 0].bytes;
}

double Fabric::utilization(std::uint32_t link, bool toward_host) const {
    if (eq_.now() == 0) return 0.0;
    const Dir& d = links_[link].dir[toward_host ? 1 : 0];
    double busy = static_cast<double>(std::min(d.busy_until, eq_.now()));
    return busy / static_cast<double>(eq_.now());
}

} // namespace cxlsim

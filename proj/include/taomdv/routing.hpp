#pragma once

// AODV control-plane machinery and AOMDV multipath route tables as a
// deterministic per-node state machine. Operations consume one control
// message and return the actions (broadcasts/unicasts) the owner should
// perform; actual delivery is the simulator's job.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "taomdv/types.hpp"

namespace taomdv {

struct RouteRequest {
  std::uint32_t rreq_id = 0;
  NodeId source = 0;
  NodeId dest = 0;
  std::uint32_t source_seq = 0;
  std::optional<std::uint32_t> dest_seq_known;
  std::uint32_t hop_count = 0;  // hops travelled to the sender of this copy
  NodeId first_hop = 0;         // disjointness marker, set by the first relay
};

struct RouteReply {
  NodeId source = 0;  // originator of the discovery
  NodeId dest = 0;    // destination the reply describes
  std::uint32_t dest_seq = 0;
  std::uint32_t hop_count = 0;  // hops from the replier to dest
};

struct RouteError {
  std::vector<std::pair<NodeId, std::uint32_t>> unreachable;  // (dest, seq)
};

struct PathEntry {
  NodeId next_hop = 0;
  std::uint32_t hop_count = 1;
  double expiry = 0.0;
};

/// Per-destination multipath records. Invariants: one sequence epoch per
/// record, pairwise-distinct next hops, and every stored hop count within the
/// advertised bound fixed when the epoch was created (the loop-freedom rule).
class MultipathRouteTable {
 public:
  struct DestRecord {
    std::uint32_t dest_seq = 0;
    std::uint32_t advertised_hop_count = 0;
    std::vector<PathEntry> paths;  // insertion order
  };

  /// Returns true when the path is present after the call. Fresher epochs
  /// reset the record; equal epochs accept only new next hops within the
  /// advertised bound; stale epochs are rejected. At most `max_paths` are
  /// kept, dropping the worst (highest hop count, newest on ties).
  bool insert_path(NodeId dest, std::uint32_t dest_seq, NodeId next_hop,
                   std::uint32_t hop_count, double expiry, std::size_t max_paths) {
    if (hop_count == 0) throw std::invalid_argument("path hop count must be at least 1");
    if (max_paths == 0) throw std::invalid_argument("max paths must be at least 1");
    auto it = records_.find(dest);
    if (it == records_.end() || dest_seq > it->second.dest_seq) {
      records_[dest] = DestRecord{dest_seq, hop_count, {PathEntry{next_hop, hop_count, expiry}}};
      return true;
    }
    DestRecord& rec = it->second;
    if (dest_seq < rec.dest_seq) return false;
    if (hop_count > rec.advertised_hop_count) return false;
    for (const auto& p : rec.paths)
      if (p.next_hop == next_hop) return false;
    rec.paths.push_back(PathEntry{next_hop, hop_count, expiry});
    if (rec.paths.size() > max_paths) {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < rec.paths.size(); ++i)
        if (rec.paths[i].hop_count >= rec.paths[worst].hop_count) worst = i;
      const bool survived = rec.paths[worst].next_hop != next_hop;
      rec.paths.erase(rec.paths.begin() + static_cast<std::ptrdiff_t>(worst));
      return survived;
    }
    return true;
  }

  std::vector<PathEntry> usable_paths(NodeId dest, double now) const {
    std::vector<PathEntry> out;
    auto it = records_.find(dest);
    if (it == records_.end()) return out;
    for (const auto& p : it->second.paths)
      if (p.expiry > now) out.push_back(p);
    return out;
  }

  void refresh_on_use(NodeId dest, NodeId next_hop, double expiry) {
    auto it = records_.find(dest);
    if (it == records_.end()) return;
    for (auto& p : it->second.paths)
      if (p.next_hop == next_hop && expiry > p.expiry) p.expiry = expiry;
  }

  std::optional<std::uint32_t> known_seq(NodeId dest) const {
    auto it = records_.find(dest);
    if (it == records_.end()) return std::nullopt;
    return it->second.dest_seq;
  }

  /// Drops every path through `next_hop`. Destinations left with no paths are
  /// erased and reported with their epoch bumped by one.
  std::vector<std::pair<NodeId, std::uint32_t>> remove_next_hop(NodeId next_hop) {
    std::vector<std::pair<NodeId, std::uint32_t>> emptied;
    for (auto it = records_.begin(); it != records_.end();) {
      auto& rec = it->second;
      bool removed = false;
      for (auto p = rec.paths.begin(); p != rec.paths.end();) {
        if (p->next_hop == next_hop) {
          p = rec.paths.erase(p);
          removed = true;
        } else {
          ++p;
        }
      }
      if (removed && rec.paths.empty()) {
        emptied.emplace_back(it->first, rec.dest_seq + 1);
        it = records_.erase(it);
      } else {
        ++it;
      }
    }
    return emptied;
  }

  /// RERR processing: drop paths to `dest` via `from` unless the local epoch
  /// is strictly fresher than the reported one. Returns the cascade entry
  /// when the destination lost its last path.
  std::optional<std::pair<NodeId, std::uint32_t>> invalidate(NodeId dest, std::uint32_t seq,
                                                             NodeId from) {
    auto it = records_.find(dest);
    if (it == records_.end()) return std::nullopt;
    auto& rec = it->second;
    if (rec.dest_seq > seq) return std::nullopt;
    bool removed = false;
    for (auto p = rec.paths.begin(); p != rec.paths.end();) {
      if (p->next_hop == from) {
        p = rec.paths.erase(p);
        removed = true;
      } else {
        ++p;
      }
    }
    if (removed && rec.paths.empty()) {
      const std::uint32_t bumped = std::max(seq, rec.dest_seq + 1);
      records_.erase(it);
      return std::make_pair(dest, bumped);
    }
    return std::nullopt;
  }

  const std::map<NodeId, DestRecord>& records() const { return records_; }

 private:
  std::map<NodeId, DestRecord> records_;
};

struct RreqBroadcast {
  RouteRequest rreq;
};
struct RrepSend {
  RouteReply rrep;
  NodeId to;
};
struct RerrBroadcast {
  RouteError rerr;
};
using RoutingAction = std::variant<RreqBroadcast, RrepSend, RerrBroadcast>;

struct RouterConfig {
  Protocol protocol = Protocol::TrustAomdv;
  std::size_t max_paths = 3;     // K; forced to 1 in AODV mode
  double route_lifetime = 10.0;  // seconds, refreshed on data use
  std::uint32_t ttl = 16;        // flood diameter cap
};

struct RoutingMetrics {
  std::uint64_t malformed_rreq_dropped = 0;
  std::uint64_t ttl_exceeded_dropped = 0;
  std::uint64_t rrep_without_reverse_path = 0;
  std::uint64_t stale_rrep_ignored = 0;
};

class Router {
 public:
  Router(NodeId id, RouterConfig cfg) : id_(id), cfg_(cfg) {}

  NodeId id() const { return id_; }
  bool aodv_mode() const { return cfg_.protocol == Protocol::Aodv; }
  std::size_t effective_max_paths() const { return aodv_mode() ? 1 : cfg_.max_paths; }
  const RouterConfig& config() const { return cfg_; }

  /// Reactive discovery: only when no valid path exists. Returns the RREQ
  /// broadcast with fresh counters, or nothing while a route is still usable.
  std::optional<RreqBroadcast> originate_route_discovery(NodeId dest, double now) {
    if (!table_.usable_paths(dest, now).empty()) return std::nullopt;
    return flood(dest);
  }

  /// Re-floods for additional disjoint paths while data is pending and the
  /// stored path set is thin; rate limiting is the caller's job. Never used
  /// in AODV mode (single-path protocol).
  std::optional<RreqBroadcast> refresh_route_discovery(NodeId dest, double now) {
    if (aodv_mode()) return originate_route_discovery(dest, now);
    if (table_.usable_paths(dest, now).size() >= wanted_paths()) return std::nullopt;
    return flood(dest);
  }

  std::size_t wanted_paths() const { return std::min<std::size_t>(effective_max_paths(), 2); }

  std::vector<RoutingAction> process_route_request(const RouteRequest& rreq, NodeId from,
                                                   double now) {
    std::vector<RoutingAction> out;
    if (rreq.source == id_) return out;  // echo of our own flood
    if (rreq.source == rreq.dest || rreq.hop_count > cfg_.ttl) {
      ++metrics_.malformed_rreq_dropped;
      return out;
    }
    const NodeId first_hop = (rreq.hop_count == 0) ? id_ : rreq.first_hop;
    const auto key = std::make_pair(rreq.source, rreq.rreq_id);
    const bool is_dest = rreq.dest == id_;
    const double expiry = now + cfg_.route_lifetime;

    if (auto it = seen_.find(key); it != seen_.end()) {
      if (aodv_mode()) return out;  // duplicates dropped entirely
      RreqSeen& seen = it->second;
      if (!seen.first_hops.insert(first_hop).second) return out;
      const bool accepted = table_.insert_path(rreq.source, rreq.source_seq, from,
                                               rreq.hop_count + 1, expiry, effective_max_paths());
      // The destination answers each disjoint copy within the same reply
      // epoch so the source accumulates disjoint forward paths.
      if (accepted && is_dest)
        out.push_back(RrepSend{RouteReply{rreq.source, id_, seen.reply_seq, 0}, from});
      return out;  // later copies are never re-forwarded
    }

    RreqSeen seen;
    seen.first_hops.insert(first_hop);
    table_.insert_path(rreq.source, rreq.source_seq, from, rreq.hop_count + 1, expiry,
                       effective_max_paths());

    if (is_dest) {
      source_seq_ = std::max(source_seq_, rreq.dest_seq_known.value_or(0)) + 1;
      seen.reply_seq = source_seq_;
      out.push_back(RrepSend{RouteReply{rreq.source, id_, source_seq_, 0}, from});
      seen_.emplace(key, std::move(seen));
      return out;
    }

    if (aodv_mode()) {
      // Intermediate reply when holding a route at least as fresh as asked.
      auto rec = table_.records().find(rreq.dest);
      if (rec != table_.records().end() &&
          rec->second.dest_seq >= rreq.dest_seq_known.value_or(0)) {
        auto paths = table_.usable_paths(rreq.dest, now);
        if (!paths.empty()) {
          std::uint32_t best = paths.front().hop_count;
          for (const auto& p : paths) best = std::min(best, p.hop_count);
          out.push_back(
              RrepSend{RouteReply{rreq.source, rreq.dest, rec->second.dest_seq, best}, from});
          seen_.emplace(key, std::move(seen));
          return out;
        }
      }
    }

    if (rreq.hop_count + 1 > cfg_.ttl) {
      ++metrics_.ttl_exceeded_dropped;
      seen_.emplace(key, std::move(seen));
      return out;
    }
    RouteRequest forwarded = rreq;
    forwarded.hop_count += 1;
    if (rreq.hop_count == 0) forwarded.first_hop = id_;
    seen.forwarded = true;
    seen_.emplace(key, std::move(seen));
    out.push_back(RreqBroadcast{forwarded});
    return out;
  }

  std::vector<RoutingAction> process_route_reply(const RouteReply& rrep, NodeId from, double now) {
    std::vector<RoutingAction> out;
    auto rec = table_.records().find(rrep.dest);
    if (rec != table_.records().end() && rrep.dest_seq < rec->second.dest_seq) {
      ++metrics_.stale_rrep_ignored;
      return out;
    }
    const std::uint32_t path_hops = rrep.hop_count + 1;
    table_.insert_path(rrep.dest, rrep.dest_seq, from, path_hops, now + cfg_.route_lifetime,
                       effective_max_paths());
    if (rrep.source == id_) return out;  // discovery completed here
    auto reverse = table_.usable_paths(rrep.source, now);
    if (reverse.empty()) {
      ++metrics_.rrep_without_reverse_path;
      return out;
    }
    RouteReply forwarded = rrep;
    forwarded.hop_count = path_hops;
    out.push_back(RrepSend{forwarded, reverse.front().next_hop});
    return out;
  }

  std::optional<RerrBroadcast> process_route_error(const RouteError& rerr, NodeId from,
                                                   double /*now*/) {
    if (rerr.unreachable.empty()) throw std::invalid_argument("route error must list destinations");
    std::vector<std::pair<NodeId, std::uint32_t>> cascade;
    for (const auto& [dest, seq] : rerr.unreachable) {
      if (auto lost = table_.invalidate(dest, seq, from)) cascade.push_back(*lost);
    }
    if (cascade.empty()) return std::nullopt;
    return RerrBroadcast{RouteError{std::move(cascade)}};
  }

  /// Removes all paths through a dead neighbor. Destinations that lost their
  /// last path are announced in one RERR; salvageable ones stay quiet.
  std::optional<RerrBroadcast> handle_link_failure(NodeId dead_neighbor, double /*now*/) {
    auto emptied = table_.remove_next_hop(dead_neighbor);
    if (emptied.empty()) return std::nullopt;
    return RerrBroadcast{RouteError{std::move(emptied)}};
  }

  std::vector<PathEntry> usable_paths(NodeId dest, double now) const {
    return table_.usable_paths(dest, now);
  }

  void refresh_on_use(NodeId dest, NodeId next_hop, double now) {
    table_.refresh_on_use(dest, next_hop, now + cfg_.route_lifetime);
  }

  MultipathRouteTable& table() { return table_; }
  const MultipathRouteTable& table() const { return table_; }
  const RoutingMetrics& metrics() const { return metrics_; }
  std::uint32_t source_seq() const { return source_seq_; }
  std::uint32_t last_rreq_id() const { return rreq_id_; }

 private:
  struct RreqSeen {
    std::set<NodeId> first_hops;
    bool forwarded = false;
    std::uint32_t reply_seq = 0;
  };

  RreqBroadcast flood(NodeId dest) {
    ++source_seq_;
    ++rreq_id_;
    return RreqBroadcast{
        RouteRequest{rreq_id_, id_, dest, source_seq_, table_.known_seq(dest), 0, id_}};
  }

  NodeId id_;
  RouterConfig cfg_;
  MultipathRouteTable table_;
  RoutingMetrics metrics_;
  std::map<std::pair<NodeId, std::uint32_t>, RreqSeen> seen_;
  std::uint32_t source_seq_ = 0;
  std::uint32_t rreq_id_ = 0;
};

}  // namespace taomdv

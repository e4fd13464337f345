#pragma once

// Deterministic discrete-event engine. One run is strictly single-threaded
// over a (time, sequence)-ordered queue; all randomness comes from named
// per-(link, purpose) substreams of the scenario seed, so identical inputs
// reproduce identical traces byte for byte.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "taomdv/dispatch.hpp"
#include "taomdv/report.hpp"
#include "taomdv/rng.hpp"
#include "taomdv/routing.hpp"
#include "taomdv/scenario.hpp"
#include "taomdv/text.hpp"
#include "taomdv/trust.hpp"
#include "taomdv/types.hpp"

namespace taomdv {

struct DataPacket {
  std::uint64_t id = 0;
  std::uint32_t flow = 0;
  NodeId source = 0;
  NodeId dest = 0;
  double created = 0.0;
  double hop_service_start = -1.0;  // first slot entry at the current hop
};

struct AckInfo {
  std::uint64_t packet_id = 0;
  std::uint64_t attempt = 0;
};

struct BeaconInfo {
  NodeId from = 0;
  double sampled_at = 0.0;
  double level = 1.0;
};

using DeliverPayload = std::variant<DataPacket, AckInfo, RouteRequest, RouteReply, RouteError, BeaconInfo>;

struct EvTransmitStart { NodeId sender; NodeId receiver; std::uint64_t attempt; };
struct EvTransmitEnd { NodeId sender; NodeId receiver; std::uint64_t attempt; };
struct EvDeliver { NodeId to; NodeId from; DeliverPayload payload; };
struct EvAckTimeout { NodeId sender; NodeId receiver; std::uint64_t attempt; };
struct EvBatteryBroadcast { NodeId node; };
struct EvLinkStateChange { NodeId a; NodeId b; bool up; };
struct EvTrafficArrival { std::uint32_t flow; std::uint64_t count; };
struct EvBatchPlan { NodeId node; NodeId dest; bool probe; };

using EventBody = std::variant<EvTransmitStart, EvTransmitEnd, EvDeliver, EvAckTimeout,
                               EvBatteryBroadcast, EvLinkStateChange, EvTrafficArrival, EvBatchPlan>;

struct Event {
  double time = 0.0;
  std::uint64_t sequence = 0;
  EventBody body;
};

inline const char* event_kind_name(const EventBody& body) {
  switch (body.index()) {
    case 0: return "TransmitStart";
    case 1: return "TransmitEnd";
    case 2: return "Deliver";
    case 3: return "AckTimeout";
    case 4: return "BatteryBroadcast";
    case 5: return "LinkStateChange";
    case 6: return "TrafficArrival";
    case 7: return "BatchPlan";
  }
  return "?";
}

struct GroundTruthLink {
  NodeId a = 0;
  NodeId b = 0;
  double success_prob = 1.0;
  double transmission_time = 0.1;
  bool up = true;
};

struct RunOptions {
  bool record_trace = true;
  bool check_invariants = true;
};

// Everything one node owns during a run: its router, per-neighbor
// assessments, battery, and the data-plane queues (one stop-and-wait slot
// plus a FIFO per next hop, and a per-destination backlog of unassigned
// packets).
struct NodeRuntime {
  struct InFlight {
    DataPacket pkt;
    std::uint64_t attempt = 0;
    bool drawn = false;  // becomes true when TransmitStart executes
  };
  struct Lane {
    std::deque<DataPacket> queue;
    std::optional<InFlight> slot;
  };

  NodeId id = 0;
  Router router;
  std::map<NodeId, NeighborAssessment> assessments;
  BatteryInfluenceConfig battery_cfg;
  std::uint32_t trust_capacity = 50;

  double battery = 1.0;
  double battery_updated = 0.0;
  double idle_drain = 1e-4;
  double tx_cost = 1e-3;

  std::map<NodeId, Lane> lanes;                        // keyed by next hop
  std::map<NodeId, std::deque<DataPacket>> backlog;    // keyed by destination
  std::map<NodeId, std::uint64_t> lane_queued;         // per-destination lane occupancy
  std::map<NodeId, bool> plan_pending;                 // immediate BatchPlan scheduled
  std::map<NodeId, bool> probe_pending;                // retry probe scheduled
  std::map<NodeId, double> last_rreq_time;
  std::map<NodeId, std::uint32_t> refresh_attempts;    // consecutive no-gain refresh floods
  std::map<NodeId, std::size_t> last_path_count;

  NodeRuntime(NodeId node, RouterConfig cfg) : id(node), router(node, cfg) {}

  void apply_idle_drain(double now) {
    if (now > battery_updated) {
      battery = std::max(0.0, battery - idle_drain * (now - battery_updated));
      battery_updated = now;
    }
  }

  // A transmission requires charge; the per-send cost lands immediately.
  bool spend_transmission(double now) {
    apply_idle_drain(now);
    if (battery <= 0.0) return false;
    battery = std::max(0.0, battery - tx_cost);
    return true;
  }
};

class Simulator {
 public:
  explicit Simulator(Scenario scenario, RunOptions options = {})
      : scenario_(std::move(scenario)), options_(options) {
    auto diags = validate_scenario(scenario_);
    if (!diags.empty()) {
      std::string msg = "invalid scenario:";
      for (const auto& d : diags) msg += " " + d.message + ";";
      throw std::invalid_argument(msg);
    }
    initialize();
  }

  RunReport run() {
    while (!queue_.empty() && queue_.top().time <= scenario_.horizon) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      execute(ev);
      if (options_.check_invariants) check_conservation();
    }
    return build_report();
  }

  const std::string& trace() const { return trace_; }
  const NodeRuntime& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<double>& flow_delays(std::uint32_t flow) const { return flows_.at(flow).delays; }
  const std::vector<double>& flow_delivery_times(std::uint32_t flow) const {
    return flows_.at(flow).delivery_times;
  }
  double now() const { return now_; }

 private:
  static constexpr std::uint32_t kMaxRefreshFloods = 30;  // consecutive no-gain refresh cap
  static constexpr std::size_t kMaxTrustSamplesPerPair = 200;

  struct LinkState {
    double q = 1.0;
    double t = 0.1;
    bool up = true;
  };

  struct FlowRuntime {
    FlowSpec spec;
    std::uint64_t offered = 0;
    std::uint64_t delivered = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t emitted_arrivals = 0;
    std::vector<double> delays;
    std::vector<double> delivery_times;
    double service_sum = 0.0;
    std::uint64_t service_count = 0;
  };

  struct EventCompare {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.sequence > b.sequence;
    }
  };

  // --- setup -------------------------------------------------------------

  void initialize() {
    for (const auto& n : scenario_.nodes) {
      RouterConfig rc;
      rc.protocol = scenario_.protocol;
      rc.max_paths = scenario_.params.max_paths;
      rc.route_lifetime = scenario_.params.route_lifetime;
      rc.ttl = scenario_.params.ttl;
      NodeRuntime rt(n.id, rc);
      rt.battery = n.initial_battery;
      rt.idle_drain = n.idle_drain;
      rt.tx_cost = n.tx_cost;
      rt.trust_capacity = n.trust_window.value_or(scenario_.params.trust_window);
      rt.battery_cfg.gamma = n.gamma.value_or(scenario_.params.gamma);
      nodes_.emplace(n.id, std::move(rt));
    }
    for (const auto& l : scenario_.links) {
      links_[link_key(l.a, l.b)] = LinkState{l.success_prob, l.transmission_time, l.initially_up};
      adjacency_[l.a].push_back(l.b);
      adjacency_[l.b].push_back(l.a);
      for (auto [self, peer] : {std::pair{l.a, l.b}, std::pair{l.b, l.a}}) {
        NodeRuntime& rt = nodes_.at(self);
        const NodeSpec& spec = *std::find_if(scenario_.nodes.begin(), scenario_.nodes.end(),
                                             [&](const NodeSpec& n) { return n.id == self; });
        AvailabilityState avail;
        avail.value = 1.0;
        avail.last_update = 0.0;
        avail.regen_rate = spec.regen_rate.value_or(scenario_.params.regen_rate);
        avail.degradation = spec.degradation.value_or(scenario_.params.degradation);
        rt.assessments.emplace(peer, NeighborAssessment(peer, rt.trust_capacity, avail));
      }
    }
    for (auto& [id, neighbors] : adjacency_) std::sort(neighbors.begin(), neighbors.end());

    for (auto& [id, rt] : nodes_) schedule(0.0, EvBatteryBroadcast{id});
    for (const auto& e : scenario_.link_events) schedule(e.time, EvLinkStateChange{e.a, e.b, e.up});
    for (std::uint32_t i = 0; i < scenario_.flows.size(); ++i) {
      FlowRuntime fr;
      fr.spec = scenario_.flows[i];
      flows_.push_back(std::move(fr));
      const FlowSpec& f = scenario_.flows[i];
      const std::uint64_t count = f.rate ? 1 : f.packets.value_or(0);
      schedule(f.start, EvTrafficArrival{i, count});
    }
  }

  // --- primitives ---------------------------------------------------------

  static std::pair<NodeId, NodeId> link_key(NodeId a, NodeId b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
  }

  LinkState* link(NodeId a, NodeId b) {
    auto it = links_.find(link_key(a, b));
    return it == links_.end() ? nullptr : &it->second;
  }

  RngStream& stream(NodeId sender, NodeId receiver, std::uint64_t purpose) {
    const auto key = std::tuple{sender, receiver, purpose};
    auto it = streams_.find(key);
    if (it == streams_.end())
      it = streams_.emplace(key, RngStream(substream_seed(scenario_.seed, sender, receiver, purpose)))
               .first;
    return it->second;
  }

  void schedule(double time, EventBody body) {
    queue_.push(Event{time, next_sequence_++, std::move(body)});
  }

  void emit(const EventBody& body, std::uint64_t sequence, const std::string& detail) {
    if (!options_.record_trace) return;
    trace_ += fmt9(now_);
    trace_ += '\t';
    trace_ += std::to_string(sequence);
    trace_ += '\t';
    trace_ += event_kind_name(body);
    trace_ += '\t';
    trace_ += detail;
    trace_ += '\n';
  }

  void check_conservation() const {
    if (offered_ != delivered_ + in_flight_ + queued_ + dropped_)
      throw std::logic_error("packet conservation violated at t=" + fmt9(now_));
  }

  // --- control-plane sends -------------------------------------------------

  template <typename Msg>
  void broadcast_control(NodeId from, const Msg& msg) {
    NodeRuntime& rt = nodes_.at(from);
    if (!rt.spend_transmission(now_)) return;  // dead nodes are silent
    if constexpr (std::is_same_v<Msg, RouteRequest>) ++control_.rreq_sent;
    if constexpr (std::is_same_v<Msg, RouteError>) ++control_.rerr_sent;
    auto adj = adjacency_.find(from);
    if (adj == adjacency_.end()) return;
    for (NodeId nb : adj->second) {
      LinkState* l = link(from, nb);
      if (!l || !l->up) continue;
      if (stream(from, nb, substream::kControlLoss).bernoulli(l->q))
        schedule(now_ + l->t, EvDeliver{nb, from, DeliverPayload{msg}});
    }
  }

  void unicast_control(NodeId from, NodeId to, const RouteReply& rrep) {
    NodeRuntime& rt = nodes_.at(from);
    if (!rt.spend_transmission(now_)) return;
    ++control_.rrep_sent;
    LinkState* l = link(from, to);
    if (!l || !l->up) return;
    if (stream(from, to, substream::kControlLoss).bernoulli(l->q))
      schedule(now_ + l->t, EvDeliver{to, from, DeliverPayload{rrep}});
  }

  void dispatch_routing_actions(NodeId node, const std::vector<RoutingAction>& actions) {
    for (const auto& action : actions) {
      if (const auto* rq = std::get_if<RreqBroadcast>(&action)) broadcast_control(node, rq->rreq);
      else if (const auto* rp = std::get_if<RrepSend>(&action)) unicast_control(node, rp->to, rp->rrep);
      else if (const auto* re = std::get_if<RerrBroadcast>(&action)) broadcast_control(node, re->rerr);
    }
  }

  // --- data plane -----------------------------------------------------------

  void packet_to_backlog(NodeId node, DataPacket pkt, bool front) {
    pkt.hop_service_start = -1.0;
    auto& dq = nodes_.at(node).backlog[pkt.dest];
    if (front) dq.push_front(pkt);
    else dq.push_back(pkt);
  }

  void try_start(NodeId node, NodeId next_hop) {
    NodeRuntime& rt = nodes_.at(node);
    auto lane_it = rt.lanes.find(next_hop);
    if (lane_it == rt.lanes.end()) return;
    NodeRuntime::Lane& lane = lane_it->second;
    if (lane.slot || lane.queue.empty()) return;
    LinkState* l = link(node, next_hop);
    if (!l || !l->up) return;
    rt.apply_idle_drain(now_);
    if (rt.battery <= 0.0) return;  // dead sender; packets stay queued

    DataPacket pkt = lane.queue.front();
    lane.queue.pop_front();
    rt.lane_queued[pkt.dest] -= 1;
    queued_ -= 1;
    in_flight_ += 1;
    if (pkt.hop_service_start < 0.0) pkt.hop_service_start = now_;
    const std::uint64_t attempt = ++attempt_counter_;
    lane.slot = NodeRuntime::InFlight{pkt, attempt, false};
    schedule(now_, EvTransmitStart{node, next_hop, attempt});
  }

  void notify_transmission(NodeId transmitter, bool starting) {
    auto adj = adjacency_.find(transmitter);
    if (adj == adjacency_.end()) return;
    for (NodeId nb : adj->second) {
      LinkState* l = link(transmitter, nb);
      if (!l || !l->up) continue;
      NodeRuntime& observer = nodes_.at(nb);
      auto it = observer.assessments.find(transmitter);
      if (it == observer.assessments.end()) continue;
      it->second.availability() = it->second.availability().advanced(now_, starting);
    }
  }

  void record_trust(NodeId node, NodeId neighbor, bool ack) {
    NodeRuntime& rt = nodes_.at(node);
    auto it = rt.assessments.find(neighbor);
    if (it == rt.assessments.end()) return;
    it->second.trust().record(ack);
    LinkState* l = link(node, neighbor);
    trust_samples_[{node, neighbor}].push_back(
        TrustSample{now_, node, neighbor, it->second.trust().expectation(), l ? l->q : 0.0});
  }

  // Move every queued packet for a dead next hop back into the backlog,
  // preserving order; in-flight slots resolve through their own events.
  void drain_lane(NodeId node, NodeId next_hop) {
    NodeRuntime& rt = nodes_.at(node);
    auto lane_it = rt.lanes.find(next_hop);
    if (lane_it == rt.lanes.end()) return;
    auto& q = lane_it->second.queue;
    while (!q.empty()) {
      DataPacket pkt = q.back();
      q.pop_back();
      rt.lane_queued[pkt.dest] -= 1;
      packet_to_backlog(node, pkt, true);
    }
  }

  void after_state_change(NodeId node) {
    NodeRuntime& rt = nodes_.at(node);
    for (auto& [dest, dq] : rt.backlog) {
      if (dq.empty()) continue;
      if (rt.lane_queued[dest] > 0) continue;
      if (rt.plan_pending[dest]) continue;
      rt.plan_pending[dest] = true;
      schedule(now_, EvBatchPlan{node, dest, false});
    }
  }

  void maybe_flood(NodeId node, NodeId dest, bool refresh) {
    NodeRuntime& rt = nodes_.at(node);
    auto last = rt.last_rreq_time.find(dest);
    if (last != rt.last_rreq_time.end() && now_ - last->second < scenario_.params.rreq_retry) return;
    std::optional<RreqBroadcast> rreq;
    if (refresh) {
      // Additional-path discovery is capped: repeated floods that gain no new
      // path stop after a budget, so single-path topologies quiesce.
      if (rt.refresh_attempts[dest] >= kMaxRefreshFloods) return;
      rreq = rt.router.refresh_route_discovery(dest, now_);
      if (rreq) rt.refresh_attempts[dest] += 1;
    } else {
      rreq = rt.router.originate_route_discovery(dest, now_);
    }
    if (!rreq) return;
    rt.last_rreq_time[dest] = now_;
    broadcast_control(node, rreq->rreq);
  }

  void schedule_probe(NodeId node, NodeId dest) {
    NodeRuntime& rt = nodes_.at(node);
    if (rt.probe_pending[dest]) return;
    rt.probe_pending[dest] = true;
    schedule(now_ + scenario_.params.rreq_retry, EvBatchPlan{node, dest, true});
  }

  std::string plan_batch(NodeId node, NodeId dest) {
    NodeRuntime& rt = nodes_.at(node);
    auto paths = rt.router.usable_paths(dest, now_);

    // Reset the refresh budget whenever the path set changes size.
    const std::size_t known = rt.last_path_count.count(dest) ? rt.last_path_count[dest] : 0;
    if (paths.size() != known) {
      rt.refresh_attempts[dest] = 0;
      rt.last_path_count[dest] = paths.size();
    }

    auto& backlog = rt.backlog[dest];
    const bool data_pending = !backlog.empty() || rt.lane_queued[dest] > 0;

    if (paths.empty()) {
      if (!data_pending) return "noop=idle";
      maybe_flood(node, dest, false);
      schedule_probe(node, dest);
      return "noop=awaiting_route";
    }
    if (data_pending && paths.size() < rt.router.wanted_paths()) {
      maybe_flood(node, dest, true);
      schedule_probe(node, dest);
    }
    if (backlog.empty()) return "noop=drained";
    if (rt.lane_queued[dest] > 0) return "noop=lanes_busy";

    std::vector<PacketAssignment> assignment;
    if (scenario_.protocol == Protocol::TrustAomdv) {
      std::vector<PathScore> scores;
      scores.reserve(paths.size());
      for (const auto& p : paths) {
        const auto& assessment = rt.assessments.at(p.next_hop);
        scores.push_back(PathScore{
            p.next_hop, composite_link_probability(assessment, now_, p.hop_count, rt.battery_cfg),
            p.hop_count});
      }
      const auto chunk = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(scenario_.params.batch, backlog.size()));
      SplitPlan plan = plan_split(scores, chunk);
      if (plan.fractions.uniform_fallback) ++control_.uniform_split_fallbacks;
      assignment = plan.packet_counts;
      SplitSample sample{now_, node, dest, {}};
      for (const auto& f : plan.fractions.fractions) sample.fractions.emplace_back(f.next_hop, f.fraction);
      splits_.push_back(std::move(sample));
    } else {
      // AODV: the single stored path. AOMDV: lowest hop count wins, earliest
      // insertion on ties; alternates stay as failover.
      const PathEntry* best = &paths.front();
      for (const auto& p : paths)
        if (p.hop_count < best->hop_count) best = &p;
      assignment.push_back(
          PacketAssignment{best->next_hop, static_cast<std::uint32_t>(std::min<std::uint64_t>(
                                               backlog.size(), UINT32_MAX))});
    }

    std::string detail = "assigned=";
    bool first_entry = true;
    for (const auto& a : assignment) {
      for (std::uint32_t k = 0; k < a.count && !backlog.empty(); ++k) {
        DataPacket pkt = backlog.front();
        backlog.pop_front();
        rt.lanes[a.next_hop].queue.push_back(pkt);
        rt.lane_queued[dest] += 1;
      }
      if (!first_entry) detail += ',';
      detail += std::to_string(a.next_hop) + ":" + std::to_string(a.count);
      first_entry = false;
    }
    for (const auto& a : assignment) try_start(node, a.next_hop);
    return detail;
  }

  // --- event handlers --------------------------------------------------------

  void execute(const Event& ev) {
    std::visit([&](const auto& body) { handle(body, ev.sequence); }, ev.body);
  }

  void handle(const EvTrafficArrival& e, std::uint64_t seq) {
    FlowRuntime& fr = flows_.at(e.flow);
    for (std::uint64_t k = 0; k < e.count; ++k) {
      DataPacket pkt{next_packet_id_++, e.flow, fr.spec.source, fr.spec.dest, now_, -1.0};
      packet_to_backlog(fr.spec.source, pkt, false);
      fr.offered += 1;
      offered_ += 1;
      queued_ += 1;
    }
    fr.emitted_arrivals += 1;
    emit(EventBody{e}, seq,
         "node=" + std::to_string(fr.spec.source) + " flow=" + std::to_string(e.flow) +
             " count=" + std::to_string(e.count));
    if (fr.spec.rate) {
      const bool more = !fr.spec.packets || fr.emitted_arrivals < *fr.spec.packets;
      const double next = now_ + 1.0 / *fr.spec.rate;
      if (more && next <= scenario_.horizon) schedule(next, EvTrafficArrival{e.flow, 1});
    }
    after_state_change(fr.spec.source);
  }

  void handle(const EvBatchPlan& e, std::uint64_t seq) {
    NodeRuntime& rt = nodes_.at(e.node);
    if (e.probe) rt.probe_pending[e.dest] = false;
    else rt.plan_pending[e.dest] = false;
    const std::string detail = plan_batch(e.node, e.dest);
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.node) + " dest=" + std::to_string(e.dest) + " " + detail);
  }

  void handle(const EvTransmitStart& e, std::uint64_t seq) {
    NodeRuntime& rt = nodes_.at(e.sender);
    NodeRuntime::Lane& lane = rt.lanes.at(e.receiver);
    assert(lane.slot && lane.slot->attempt == e.attempt);
    LinkState* l = link(e.sender, e.receiver);
    const bool can_send = l && l->up && rt.spend_transmission(now_);
    if (!can_send) {
      ++control_.aborted_transmissions;
      DataPacket pkt = lane.slot->pkt;
      lane.slot.reset();
      in_flight_ -= 1;
      queued_ += 1;
      packet_to_backlog(e.sender, pkt, true);
      emit(EventBody{e}, seq,
           "node=" + std::to_string(e.sender) + " peer=" + std::to_string(e.receiver) +
               " pkt=" + std::to_string(pkt.id) + " outcome=abort");
      after_state_change(e.sender);
      return;
    }

    lane.slot->drawn = true;
    notify_transmission(e.sender, true);
    const bool ok = stream(e.sender, e.receiver, substream::kDataLoss).bernoulli(l->q);
    const double t = l->t;
    schedule(now_ + t, EvTransmitEnd{e.sender, e.receiver, e.attempt});
    if (ok) {
      schedule(now_ + t, EvDeliver{e.receiver, e.sender, DeliverPayload{lane.slot->pkt}});
      schedule(now_ + 2.0 * t,
               EvDeliver{e.sender, e.receiver, DeliverPayload{AckInfo{lane.slot->pkt.id, e.attempt}}});
    } else {
      schedule(now_ + 2.0 * t + scenario_.params.timeout_epsilon * t,
               EvAckTimeout{e.sender, e.receiver, e.attempt});
    }
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.sender) + " peer=" + std::to_string(e.receiver) +
             " pkt=" + std::to_string(lane.slot->pkt.id) + " flow=" +
             std::to_string(lane.slot->pkt.flow) + " attempt=" + std::to_string(e.attempt) +
             " outcome=" + (ok ? "ok" : "fail"));
  }

  void handle(const EvTransmitEnd& e, std::uint64_t seq) {
    notify_transmission(e.sender, false);
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.sender) + " peer=" + std::to_string(e.receiver));
  }

  void handle(const EvAckTimeout& e, std::uint64_t seq) {
    NodeRuntime& rt = nodes_.at(e.sender);
    NodeRuntime::Lane& lane = rt.lanes.at(e.receiver);
    if (!lane.slot || lane.slot->attempt != e.attempt) {
      ++control_.duplicate_ack_anomalies;
      emit(EventBody{e}, seq, "node=" + std::to_string(e.sender) + " outcome=unmatched");
      return;
    }
    DataPacket pkt = lane.slot->pkt;
    lane.slot.reset();
    record_trust(e.sender, e.receiver, false);
    flows_.at(pkt.flow).retransmissions += 1;
    in_flight_ -= 1;
    queued_ += 1;
    LinkState* l = link(e.sender, e.receiver);
    if (l && l->up) {
      // retransmit the same packet next (stop-and-wait, unbounded retries)
      lane.queue.push_front(pkt);
      rt.lane_queued[pkt.dest] += 1;
    } else {
      packet_to_backlog(e.sender, pkt, true);
    }
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.sender) + " peer=" + std::to_string(e.receiver) +
             " pkt=" + std::to_string(pkt.id));
    try_start(e.sender, e.receiver);
    after_state_change(e.sender);
  }

  void handle(const EvBatteryBroadcast& e, std::uint64_t seq) {
    NodeRuntime& rt = nodes_.at(e.node);
    rt.apply_idle_drain(now_);
    if (rt.battery <= 0.0) {
      emit(EventBody{e}, seq, "node=" + std::to_string(e.node) + " level=0 silent=1");
      return;  // dead nodes stop beaconing and never recover
    }
    rt.spend_transmission(now_);
    ++control_.beacons_sent;
    const double level = rt.battery;
    auto adj = adjacency_.find(e.node);
    if (adj != adjacency_.end()) {
      for (NodeId nb : adj->second) {
        LinkState* l = link(e.node, nb);
        if (!l || !l->up) continue;
        if (stream(e.node, nb, substream::kControlLoss).bernoulli(l->q))
          schedule(now_ + l->t, EvDeliver{nb, e.node, DeliverPayload{BeaconInfo{e.node, now_, level}}});
      }
    }
    emit(EventBody{e}, seq, "node=" + std::to_string(e.node) + " level=" + fmt6(level));
    const double next = now_ + scenario_.params.battery_period;
    if (next <= scenario_.horizon) schedule(next, EvBatteryBroadcast{e.node});
  }

  void handle(const EvLinkStateChange& e, std::uint64_t seq) {
    LinkState* l = link(e.a, e.b);
    if (l) l->up = e.up;
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.a) + " peer=" + std::to_string(e.b) +
             " up=" + (e.up ? "1" : "0"));
    if (!e.up) {
      for (auto [self, peer] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
        NodeRuntime& rt = nodes_.at(self);
        drain_lane(self, peer);
        if (auto rerr = rt.router.handle_link_failure(peer, now_))
          broadcast_control(self, rerr->rerr);
        after_state_change(self);
      }
    }
  }

  void handle(const EvDeliver& e, std::uint64_t seq) {
    if (const auto* pkt = std::get_if<DataPacket>(&e.payload)) deliver_data(e, *pkt, seq);
    else if (const auto* ack = std::get_if<AckInfo>(&e.payload)) deliver_ack(e, *ack, seq);
    else if (const auto* rreq = std::get_if<RouteRequest>(&e.payload)) deliver_rreq(e, *rreq, seq);
    else if (const auto* rrep = std::get_if<RouteReply>(&e.payload)) deliver_rrep(e, *rrep, seq);
    else if (const auto* rerr = std::get_if<RouteError>(&e.payload)) deliver_rerr(e, *rerr, seq);
    else if (const auto* beacon = std::get_if<BeaconInfo>(&e.payload)) deliver_beacon(e, *beacon, seq);
  }

  void deliver_data(const EvDeliver& e, DataPacket pkt, std::uint64_t seq) {
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) + " type=data pkt=" +
             std::to_string(pkt.id) + " flow=" + std::to_string(pkt.flow));
    in_flight_ -= 1;
    if (pkt.dest == e.to) {
      delivered_ += 1;
      FlowRuntime& fr = flows_.at(pkt.flow);
      fr.delivered += 1;
      fr.delays.push_back(now_ - pkt.created);
      fr.delivery_times.push_back(now_);
      return;
    }
    queued_ += 1;
    packet_to_backlog(e.to, pkt, false);
    after_state_change(e.to);
  }

  void deliver_ack(const EvDeliver& e, const AckInfo& ack, std::uint64_t seq) {
    NodeRuntime& rt = nodes_.at(e.to);
    auto lane_it = rt.lanes.find(e.from);
    if (lane_it == rt.lanes.end() || !lane_it->second.slot ||
        lane_it->second.slot->attempt != ack.attempt) {
      ++control_.duplicate_ack_anomalies;
      emit(EventBody{e}, seq,
           "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) +
               " type=ack pkt=" + std::to_string(ack.packet_id) + " outcome=unmatched");
      return;
    }
    NodeRuntime::Lane& lane = lane_it->second;
    const DataPacket& pkt = lane.slot->pkt;
    FlowRuntime& fr = flows_.at(pkt.flow);
    fr.service_sum += now_ - pkt.hop_service_start;
    fr.service_count += 1;
    record_trust(e.to, e.from, true);
    rt.router.refresh_on_use(pkt.dest, e.from, now_);
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) +
             " type=ack pkt=" + std::to_string(pkt.id));
    lane.slot.reset();
    try_start(e.to, e.from);
    after_state_change(e.to);
  }

  void deliver_rreq(const EvDeliver& e, const RouteRequest& rreq, std::uint64_t seq) {
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) + " type=rreq id=" +
             std::to_string(rreq.rreq_id) + " src=" + std::to_string(rreq.source) + " dst=" +
             std::to_string(rreq.dest) + " seq=" + std::to_string(rreq.source_seq) + " hops=" +
             std::to_string(rreq.hop_count) + " fh=" + std::to_string(rreq.first_hop));
    auto actions = nodes_.at(e.to).router.process_route_request(rreq, e.from, now_);
    dispatch_routing_actions(e.to, actions);
    after_state_change(e.to);
  }

  void deliver_rrep(const EvDeliver& e, const RouteReply& rrep, std::uint64_t seq) {
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) + " type=rrep src=" +
             std::to_string(rrep.source) + " dst=" + std::to_string(rrep.dest) + " seq=" +
             std::to_string(rrep.dest_seq) + " hops=" + std::to_string(rrep.hop_count));
    auto actions = nodes_.at(e.to).router.process_route_reply(rrep, e.from, now_);
    dispatch_routing_actions(e.to, actions);
    after_state_change(e.to);
  }

  void deliver_rerr(const EvDeliver& e, const RouteError& rerr, std::uint64_t seq) {
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) +
             " type=rerr n=" + std::to_string(rerr.unreachable.size()));
    if (auto cascade = nodes_.at(e.to).router.process_route_error(rerr, e.from, now_))
      broadcast_control(e.to, cascade->rerr);
    after_state_change(e.to);
  }

  void deliver_beacon(const EvDeliver& e, const BeaconInfo& beacon, std::uint64_t seq) {
    emit(EventBody{e}, seq,
         "node=" + std::to_string(e.to) + " peer=" + std::to_string(e.from) +
             " type=beacon level=" + fmt6(beacon.level) + " at=" + fmt9(beacon.sampled_at));
    NodeRuntime& rt = nodes_.at(e.to);
    auto it = rt.assessments.find(beacon.from);
    if (it != rt.assessments.end())
      it->second.observe_battery(BatterySample{beacon.sampled_at, beacon.level});
  }

  // --- reporting ---------------------------------------------------------------

  RunReport build_report() {
    RunReport report;
    report.protocol = scenario_.protocol;
    report.seed = scenario_.seed;
    report.horizon = scenario_.horizon;
    const RoutingMetrics totals = routing_metric_totals();
    report.control = control_;
    report.control.malformed_rreq_dropped = totals.malformed_rreq_dropped;
    report.control.ttl_exceeded_dropped = totals.ttl_exceeded_dropped;
    report.control.rrep_without_reverse_path = totals.rrep_without_reverse_path;
    report.control.stale_rrep_ignored = totals.stale_rrep_ignored;

    for (std::uint32_t i = 0; i < flows_.size(); ++i) {
      const FlowRuntime& fr = flows_[i];
      FlowReport f;
      f.flow = i;
      f.source = fr.spec.source;
      f.dest = fr.spec.dest;
      f.offered = fr.offered;
      f.delivered = fr.delivered;
      f.dropped = fr.offered - fr.delivered;
      f.retransmissions = fr.retransmissions;
      if (!fr.delays.empty()) {
        std::vector<double> sorted = fr.delays;
        std::sort(sorted.begin(), sorted.end());
        double sum = 0.0;
        for (double d : sorted) sum += d;
        f.mean_delay = sum / static_cast<double>(sorted.size());
        f.median_delay = quantile(sorted, 0.5);
        f.p95_delay = quantile(sorted, 0.95);
      }
      if (fr.service_count > 0)
        f.mean_service_delay = fr.service_sum / static_cast<double>(fr.service_count);
      f.service_samples = fr.service_count;
      report.flows.push_back(f);
    }

    for (const auto& [key, samples] : trust_samples_) {
      if (samples.size() <= kMaxTrustSamplesPerPair) {
        report.trust_trajectory.insert(report.trust_trajectory.end(), samples.begin(), samples.end());
        continue;
      }
      const std::size_t stride = (samples.size() + kMaxTrustSamplesPerPair - 1) / kMaxTrustSamplesPerPair;
      for (std::size_t i = 0; i < samples.size(); i += stride)
        report.trust_trajectory.push_back(samples[i]);
      report.trust_trajectory.push_back(samples.back());
    }
    std::stable_sort(report.trust_trajectory.begin(), report.trust_trajectory.end(),
                     [](const TrustSample& a, const TrustSample& b) {
                       if (a.time != b.time) return a.time < b.time;
                       if (a.node != b.node) return a.node < b.node;
                       return a.neighbor < b.neighbor;
                     });
    report.splits = splits_;
    return report;
  }

  static double quantile(const std::vector<double>& sorted, double q) {
    // nearest-rank on the sorted sample
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n)));
    return sorted[std::min(rank, sorted.size()) - 1];
  }

  RoutingMetrics routing_metric_totals() const {
    RoutingMetrics m;
    for (const auto& [id, rt] : nodes_) {
      m.malformed_rreq_dropped += rt.router.metrics().malformed_rreq_dropped;
      m.ttl_exceeded_dropped += rt.router.metrics().ttl_exceeded_dropped;
      m.rrep_without_reverse_path += rt.router.metrics().rrep_without_reverse_path;
      m.stale_rrep_ignored += rt.router.metrics().stale_rrep_ignored;
    }
    return m;
  }

  Scenario scenario_;
  RunOptions options_;
  std::map<NodeId, NodeRuntime> nodes_;
  std::map<std::pair<NodeId, NodeId>, LinkState> links_;
  std::map<NodeId, std::vector<NodeId>> adjacency_;
  std::map<std::tuple<NodeId, NodeId, std::uint64_t>, RngStream> streams_;
  std::vector<FlowRuntime> flows_;
  std::priority_queue<Event, std::vector<Event>, EventCompare> queue_;
  std::map<std::pair<NodeId, NodeId>, std::vector<TrustSample>> trust_samples_;
  std::vector<SplitSample> splits_;
  ControlReport control_;
  std::string trace_;
  double now_ = 0.0;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t next_packet_id_ = 1;
  std::uint64_t attempt_counter_ = 0;
  // conservation ledger
  std::uint64_t offered_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t in_flight_ = 0;
  std::uint64_t queued_ = 0;
  std::uint64_t dropped_ = 0;
};

inline RunReport run(const Scenario& scenario, RunOptions options = {}) {
  Simulator sim(scenario, options);
  return sim.run();
}

}  // namespace taomdv

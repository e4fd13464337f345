#pragma once

// Run metrics and their serializations. Both writers are deterministic:
// stable key order, 6-significant-digit numbers, so identical runs produce
// byte-identical documents.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taomdv/text.hpp"
#include "taomdv/types.hpp"

namespace taomdv {

struct FlowReport {
  std::uint32_t flow = 0;
  NodeId source = 0;
  NodeId dest = 0;
  std::uint64_t offered = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;  // offered but not delivered by the horizon
  std::uint64_t retransmissions = 0;
  double mean_delay = 0.0;    // end-to-end, delivered packets only
  double median_delay = 0.0;
  double p95_delay = 0.0;
  double mean_service_delay = 0.0;  // per-hop slot occupancy, first attempt to ACK
  std::uint64_t service_samples = 0;
};

struct ControlReport {
  std::uint64_t rreq_sent = 0;
  std::uint64_t rrep_sent = 0;
  std::uint64_t rerr_sent = 0;
  std::uint64_t beacons_sent = 0;
  std::uint64_t malformed_rreq_dropped = 0;
  std::uint64_t ttl_exceeded_dropped = 0;
  std::uint64_t rrep_without_reverse_path = 0;
  std::uint64_t stale_rrep_ignored = 0;
  std::uint64_t duplicate_ack_anomalies = 0;
  std::uint64_t uniform_split_fallbacks = 0;
  std::uint64_t aborted_transmissions = 0;
};

struct TrustSample {
  double time = 0.0;
  NodeId node = 0;
  NodeId neighbor = 0;
  double estimate = 0.0;
  double ground_truth = 0.0;
};

struct SplitSample {
  double time = 0.0;
  NodeId node = 0;
  NodeId dest = 0;
  std::vector<std::pair<NodeId, double>> fractions;
};

struct RunReport {
  Protocol protocol = Protocol::TrustAomdv;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  std::vector<FlowReport> flows;
  ControlReport control;
  std::vector<TrustSample> trust_trajectory;  // time-ascending per pair
  std::vector<SplitSample> splits;
};

enum class ReportFormat { StructuredData, Tabular };

inline std::string write_report(const RunReport& r, ReportFormat format) {
  if (format == ReportFormat::StructuredData) {
    nlohmann::json doc;
    doc["schema"] = "taomdv-report-v1";
    doc["protocol"] = std::string(protocol_name(r.protocol));
    doc["seed"] = r.seed;
    doc["horizon"] = round6(r.horizon);

    std::uint64_t offered = 0, delivered = 0, dropped = 0, retx = 0;
    nlohmann::json flows = nlohmann::json::array();
    for (const auto& f : r.flows) {
      offered += f.offered;
      delivered += f.delivered;
      dropped += f.dropped;
      retx += f.retransmissions;
      nlohmann::json jf;
      jf["flow"] = f.flow;
      jf["source"] = f.source;
      jf["dest"] = f.dest;
      jf["offered"] = f.offered;
      jf["delivered"] = f.delivered;
      jf["dropped"] = f.dropped;
      jf["retransmissions"] = f.retransmissions;
      jf["mean_delay"] = round6(f.mean_delay);
      jf["median_delay"] = round6(f.median_delay);
      jf["p95_delay"] = round6(f.p95_delay);
      jf["mean_service_delay"] = round6(f.mean_service_delay);
      jf["service_samples"] = f.service_samples;
      flows.push_back(std::move(jf));
    }
    doc["flows"] = std::move(flows);
    doc["totals"] = {{"offered", offered},
                     {"delivered", delivered},
                     {"dropped", dropped},
                     {"retransmissions", retx}};
    doc["control"] = {{"rreq_sent", r.control.rreq_sent},
                      {"rrep_sent", r.control.rrep_sent},
                      {"rerr_sent", r.control.rerr_sent},
                      {"beacons_sent", r.control.beacons_sent},
                      {"malformed_rreq_dropped", r.control.malformed_rreq_dropped},
                      {"ttl_exceeded_dropped", r.control.ttl_exceeded_dropped},
                      {"rrep_without_reverse_path", r.control.rrep_without_reverse_path},
                      {"stale_rrep_ignored", r.control.stale_rrep_ignored},
                      {"duplicate_ack_anomalies", r.control.duplicate_ack_anomalies},
                      {"uniform_split_fallbacks", r.control.uniform_split_fallbacks},
                      {"aborted_transmissions", r.control.aborted_transmissions}};

    nlohmann::json trust = nlohmann::json::array();
    for (const auto& t : r.trust_trajectory) {
      trust.push_back({{"time", round6(t.time)},
                       {"node", t.node},
                       {"neighbor", t.neighbor},
                       {"estimate", round6(t.estimate)},
                       {"ground_truth", round6(t.ground_truth)}});
    }
    doc["trust_trajectory"] = std::move(trust);

    nlohmann::json splits = nlohmann::json::array();
    for (const auto& s : r.splits) {
      nlohmann::json fr = nlohmann::json::array();
      for (const auto& [hop, f] : s.fractions)
        fr.push_back({{"next_hop", hop}, {"fraction", round6(f)}});
      splits.push_back({{"time", round6(s.time)},
                        {"node", s.node},
                        {"dest", s.dest},
                        {"fractions", std::move(fr)}});
    }
    doc["splits"] = std::move(splits);
    return doc.dump(2) + "\n";
  }

  // tabular
  std::string out;
  out += "protocol: " + std::string(protocol_name(r.protocol));
  out += "  seed: " + std::to_string(r.seed);
  out += "  horizon: " + fmt6(r.horizon) + "\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-5s %-7s %-5s %-9s %-10s %-8s %-8s %-11s %-13s %-10s %-13s\n",
                "flow", "source", "dest", "offered", "delivered", "dropped", "retx",
                "mean_delay", "median_delay", "p95_delay", "mean_service");
  out += buf;
  for (const auto& f : r.flows) {
    std::snprintf(buf, sizeof(buf),
                  "%-5u %-7u %-5u %-9llu %-10llu %-8llu %-8llu %-11s %-13s %-10s %-13s\n", f.flow,
                  f.source, f.dest, static_cast<unsigned long long>(f.offered),
                  static_cast<unsigned long long>(f.delivered),
                  static_cast<unsigned long long>(f.dropped),
                  static_cast<unsigned long long>(f.retransmissions), fmt6(f.mean_delay).c_str(),
                  fmt6(f.median_delay).c_str(), fmt6(f.p95_delay).c_str(),
                  fmt6(f.mean_service_delay).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "control: rreq=%llu rrep=%llu rerr=%llu beacons=%llu\n",
                static_cast<unsigned long long>(r.control.rreq_sent),
                static_cast<unsigned long long>(r.control.rrep_sent),
                static_cast<unsigned long long>(r.control.rerr_sent),
                static_cast<unsigned long long>(r.control.beacons_sent));
  out += buf;
  return out;
}

}  // namespace taomdv

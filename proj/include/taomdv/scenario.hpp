#pragma once

// Scenario documents: a line-oriented section/key=value format chosen for
// clean diffs and strict validation. Grammar (also described in the README):
//
//   version 1
//   [nodes]
//   node <id> [battery=F] [idle_drain=F] [tx_cost=F]
//            [trust_window=N] [gamma=F] [regen_rate=F] [degradation=F]
//   [links]
//   link <a> <b> q=F t=F [up=BOOL]
//   linkevent <a> <b> at=F up=BOOL
//   [flows]
//   flow <src> <dst> [packets=N] [rate=F] [start=F]
//   [params]
//   <key> = <value>
//
// '#' starts a comment; unknown keys, verbs, and sections are errors.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "taomdv/text.hpp"
#include "taomdv/types.hpp"

namespace taomdv {

struct NodeSpec {
  NodeId id = 0;
  double initial_battery = 1.0;
  double idle_drain = 1e-4;  // battery fraction per second
  double tx_cost = 1e-3;     // battery fraction per transmission
  // optional per-node overrides of the scenario-level trust parameters
  std::optional<std::uint32_t> trust_window;
  std::optional<double> gamma;
  std::optional<double> regen_rate;
  std::optional<double> degradation;
  bool operator==(const NodeSpec&) const = default;
};

struct LinkSpec {
  NodeId a = 0;
  NodeId b = 0;
  double success_prob = 1.0;      // latent per-attempt Bernoulli parameter
  double transmission_time = 0.1;  // seconds per packet leg
  bool initially_up = true;
  bool operator==(const LinkSpec&) const = default;
};

struct LinkEvent {
  NodeId a = 0;
  NodeId b = 0;
  double time = 0.0;
  bool up = false;
  bool operator==(const LinkEvent&) const = default;
};

struct FlowSpec {
  NodeId source = 0;
  NodeId dest = 0;
  std::optional<std::uint64_t> packets;  // bulk count (all at start unless rate given)
  std::optional<double> rate;            // packets per second
  double start = 0.0;
  bool operator==(const FlowSpec&) const = default;
};

struct SimParams {
  std::uint32_t trust_window = 50;  // N
  double gamma = 4.0;
  double regen_rate = 0.2;   // r
  double degradation = 0.4;  // d
  std::uint32_t max_paths = 3;  // K
  std::uint32_t batch = 20;
  double timeout_epsilon = 0.1;  // fraction of the link transmission time
  double battery_period = 5.0;
  double route_lifetime = 10.0;
  std::uint32_t ttl = 16;
  double rreq_retry = 1.0;  // minimum interval between discovery floods
  bool operator==(const SimParams&) const = default;
};

struct Scenario {
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<LinkEvent> link_events;
  std::vector<FlowSpec> flows;
  Protocol protocol = Protocol::TrustAomdv;
  SimParams params;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  bool operator==(const Scenario&) const = default;
};

struct Diagnostic {
  int line = 0;  // 0 for semantic checks without a source position
  std::string message;
};

struct ParseResult {
  std::optional<Scenario> scenario;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return scenario.has_value() && diagnostics.empty(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    if (v > (UINT64_MAX - static_cast<std::uint64_t>(c - '0')) / 10) return false;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  out = v;
  return true;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (in.fail() || !in.eof()) return false;
  out = v;
  return true;
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") { out = true; return true; }
  if (s == "false" || s == "0") { out = false; return true; }
  return false;
}

}  // namespace detail

inline std::vector<Diagnostic> validate_scenario(const Scenario& s) {
  std::vector<Diagnostic> diags;
  auto bad = [&](const std::string& msg) { diags.push_back({0, msg}); };

  std::set<NodeId> ids;
  for (const auto& n : s.nodes) {
    if (!ids.insert(n.id).second) bad("duplicate node id " + std::to_string(n.id));
    if (n.initial_battery < 0.0 || n.initial_battery > 1.0)
      bad("node " + std::to_string(n.id) + ": battery outside [0, 1]");
    if (n.idle_drain < 0.0) bad("node " + std::to_string(n.id) + ": idle_drain must be >= 0");
    if (n.tx_cost < 0.0) bad("node " + std::to_string(n.id) + ": tx_cost must be >= 0");
    if (n.trust_window && *n.trust_window == 0)
      bad("node " + std::to_string(n.id) + ": trust_window must be >= 1");
    if (n.gamma && *n.gamma <= 0.0) bad("node " + std::to_string(n.id) + ": gamma must be > 0");
    if (n.regen_rate && *n.regen_rate <= 0.0)
      bad("node " + std::to_string(n.id) + ": regen_rate must be > 0");
    if (n.degradation && *n.degradation < 0.0)
      bad("node " + std::to_string(n.id) + ": degradation must be >= 0");
  }
  if (s.nodes.empty()) bad("scenario declares no nodes");

  std::set<std::pair<NodeId, NodeId>> link_keys;
  for (const auto& l : s.links) {
    if (l.a == l.b) bad("link " + std::to_string(l.a) + "-" + std::to_string(l.b) + ": self link");
    for (NodeId e : {l.a, l.b})
      if (!ids.count(e)) bad("link endpoint " + std::to_string(e) + " is not a declared node");
    auto key = std::minmax(l.a, l.b);
    if (!link_keys.insert({key.first, key.second}).second)
      bad("duplicate link " + std::to_string(l.a) + "-" + std::to_string(l.b));
    if (l.success_prob < 0.0 || l.success_prob > 1.0)
      bad("link " + std::to_string(l.a) + "-" + std::to_string(l.b) + ": q outside [0, 1]");
    if (l.transmission_time <= 0.0)
      bad("link " + std::to_string(l.a) + "-" + std::to_string(l.b) + ": t must be > 0");
  }
  for (const auto& e : s.link_events) {
    auto key = std::minmax(e.a, e.b);
    if (!link_keys.count({key.first, key.second}))
      bad("linkevent references undeclared link " + std::to_string(e.a) + "-" + std::to_string(e.b));
    if (e.time < 0.0) bad("linkevent time must be >= 0");
  }
  for (const auto& f : s.flows) {
    for (NodeId e : {f.source, f.dest})
      if (!ids.count(e)) bad("flow endpoint " + std::to_string(e) + " is not a declared node");
    if (f.source == f.dest) bad("flow source equals destination");
    if (!f.packets && !f.rate) bad("flow must give packets=, rate=, or both");
    if (f.packets && *f.packets == 0) bad("flow packets must be >= 1");
    if (f.rate && *f.rate <= 0.0) bad("flow rate must be > 0");
    if (f.start < 0.0) bad("flow start must be >= 0");
  }
  if (s.horizon <= 0.0) bad("horizon must be > 0");
  const SimParams& p = s.params;
  if (p.trust_window == 0) bad("trust_window must be >= 1");
  if (p.gamma <= 0.0) bad("gamma must be > 0");
  if (p.regen_rate <= 0.0) bad("regen_rate must be > 0");
  if (p.degradation < 0.0) bad("degradation must be >= 0");
  if (p.max_paths == 0) bad("max_paths must be >= 1");
  if (p.batch == 0) bad("batch must be >= 1");
  if (p.timeout_epsilon <= 0.0) bad("timeout_epsilon must be > 0");
  if (p.battery_period <= 0.0) bad("battery_period must be > 0");
  if (p.route_lifetime <= 0.0) bad("route_lifetime must be > 0");
  if (p.ttl == 0) bad("ttl must be >= 1");
  if (p.rreq_retry <= 0.0) bad("rreq_retry must be > 0");
  return diags;
}

inline ParseResult parse_scenario(std::string_view text) {
  using namespace detail;
  ParseResult result;
  Scenario sc;
  std::vector<Diagnostic>& diags = result.diagnostics;

  enum class Section { None, Nodes, Links, Flows, Params };
  Section section = Section::None;
  bool saw_version = false;
  int lineno = 0;
  std::size_t pos = 0;

  auto fail = [&](int line, const std::string& msg) { diags.push_back({line, msg}); };

  // attribute helpers shared by node/link/flow entries
  auto parse_attrs = [&](const std::vector<std::string>& tokens, std::size_t first, int line)
      -> std::optional<std::map<std::string, std::string>> {
    std::map<std::string, std::string> attrs;
    for (std::size_t i = first; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 > tokens[i].size()) {
        fail(line, "expected key=value, got '" + tokens[i] + "'");
        return std::nullopt;
      }
      const std::string key = tokens[i].substr(0, eq);
      const std::string value = tokens[i].substr(eq + 1);
      if (value.empty()) {
        fail(line, "empty value for key '" + key + "'");
        return std::nullopt;
      }
      if (!attrs.emplace(key, value).second) {
        fail(line, "duplicate key '" + key + "'");
        return std::nullopt;
      }
    }
    return attrs;
  };

  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;

    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;

    if (!saw_version) {
      if (line == "version 1") {
        saw_version = true;
        continue;
      }
      fail(lineno, "document must start with 'version 1'");
      return result;
    }

    if (line.front() == '[') {
      if (line == "[nodes]") section = Section::Nodes;
      else if (line == "[links]") section = Section::Links;
      else if (line == "[flows]") section = Section::Flows;
      else if (line == "[params]") section = Section::Params;
      else fail(lineno, "unknown section '" + std::string(line) + "'");
      continue;
    }

    const auto tokens = split_ws(line);
    switch (section) {
      case Section::None:
        fail(lineno, "entry before any section header");
        break;

      case Section::Nodes: {
        if (tokens[0] != "node" || tokens.size() < 2) {
          fail(lineno, "expected 'node <id> [key=value]...'");
          break;
        }
        std::uint64_t id = 0;
        if (!parse_u64(tokens[1], id) || id > UINT32_MAX) {
          fail(lineno, "invalid node id '" + tokens[1] + "'");
          break;
        }
        auto attrs = parse_attrs(tokens, 2, lineno);
        if (!attrs) break;
        NodeSpec node;
        node.id = static_cast<NodeId>(id);
        bool bad_attr = false;
        for (const auto& [key, value] : *attrs) {
          double d = 0.0;
          std::uint64_t u = 0;
          if (key == "battery" && parse_double(value, d)) node.initial_battery = d;
          else if (key == "idle_drain" && parse_double(value, d)) node.idle_drain = d;
          else if (key == "tx_cost" && parse_double(value, d)) node.tx_cost = d;
          else if (key == "trust_window" && parse_u64(value, u) && u <= UINT32_MAX)
            node.trust_window = static_cast<std::uint32_t>(u);
          else if (key == "gamma" && parse_double(value, d)) node.gamma = d;
          else if (key == "regen_rate" && parse_double(value, d)) node.regen_rate = d;
          else if (key == "degradation" && parse_double(value, d)) node.degradation = d;
          else {
            fail(lineno, "node " + tokens[1] + ": unknown or malformed attribute '" + key + "=" + value + "'");
            bad_attr = true;
          }
        }
        if (!bad_attr) sc.nodes.push_back(node);
        break;
      }

      case Section::Links: {
        if ((tokens[0] != "link" && tokens[0] != "linkevent") || tokens.size() < 3) {
          fail(lineno, "expected 'link <a> <b> ...' or 'linkevent <a> <b> ...'");
          break;
        }
        std::uint64_t a = 0, b = 0;
        if (!parse_u64(tokens[1], a) || !parse_u64(tokens[2], b) || a > UINT32_MAX || b > UINT32_MAX) {
          fail(lineno, "invalid link endpoints");
          break;
        }
        auto attrs = parse_attrs(tokens, 3, lineno);
        if (!attrs) break;
        if (tokens[0] == "link") {
          LinkSpec link;
          link.a = static_cast<NodeId>(a);
          link.b = static_cast<NodeId>(b);
          bool saw_q = false, saw_t = false, bad_attr = false;
          for (const auto& [key, value] : *attrs) {
            double d = 0.0;
            bool flag = false;
            if (key == "q" && parse_double(value, d)) { link.success_prob = d; saw_q = true; }
            else if (key == "t" && parse_double(value, d)) { link.transmission_time = d; saw_t = true; }
            else if (key == "up" && parse_bool(value, flag)) link.initially_up = flag;
            else {
              fail(lineno, "link: unknown or malformed attribute '" + key + "=" + value + "'");
              bad_attr = true;
            }
          }
          if (!saw_q || !saw_t) {
            fail(lineno, "link requires q= and t=");
            break;
          }
          if (!bad_attr) sc.links.push_back(link);
        } else {
          LinkEvent ev;
          ev.a = static_cast<NodeId>(a);
          ev.b = static_cast<NodeId>(b);
          bool saw_at = false, saw_up = false, bad_attr = false;
          for (const auto& [key, value] : *attrs) {
            double d = 0.0;
            bool flag = false;
            if (key == "at" && parse_double(value, d)) { ev.time = d; saw_at = true; }
            else if (key == "up" && parse_bool(value, flag)) { ev.up = flag; saw_up = true; }
            else {
              fail(lineno, "linkevent: unknown or malformed attribute '" + key + "=" + value + "'");
              bad_attr = true;
            }
          }
          if (!saw_at || !saw_up) {
            fail(lineno, "linkevent requires at= and up=");
            break;
          }
          if (!bad_attr) sc.link_events.push_back(ev);
        }
        break;
      }

      case Section::Flows: {
        if (tokens[0] != "flow" || tokens.size() < 3) {
          fail(lineno, "expected 'flow <src> <dst> [key=value]...'");
          break;
        }
        std::uint64_t src = 0, dst = 0;
        if (!parse_u64(tokens[1], src) || !parse_u64(tokens[2], dst) || src > UINT32_MAX ||
            dst > UINT32_MAX) {
          fail(lineno, "invalid flow endpoints");
          break;
        }
        auto attrs = parse_attrs(tokens, 3, lineno);
        if (!attrs) break;
        FlowSpec flow;
        flow.source = static_cast<NodeId>(src);
        flow.dest = static_cast<NodeId>(dst);
        bool bad_attr = false;
        for (const auto& [key, value] : *attrs) {
          double d = 0.0;
          std::uint64_t u = 0;
          if (key == "packets" && parse_u64(value, u)) flow.packets = u;
          else if (key == "rate" && parse_double(value, d)) flow.rate = d;
          else if (key == "start" && parse_double(value, d)) flow.start = d;
          else {
            fail(lineno, "flow: unknown or malformed attribute '" + key + "=" + value + "'");
            bad_attr = true;
          }
        }
        if (!bad_attr) sc.flows.push_back(flow);
        break;
      }

      case Section::Params: {
        // accept "key = value" and "key=value"
        std::string joined;
        for (const auto& t : tokens) joined += t;
        const auto eq = joined.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= joined.size()) {
          fail(lineno, "expected '<key> = <value>'");
          break;
        }
        const std::string key = joined.substr(0, eq);
        const std::string value = joined.substr(eq + 1);
        double d = 0.0;
        std::uint64_t u = 0;
        if (key == "protocol") {
          if (auto p = parse_protocol(value)) sc.protocol = *p;
          else fail(lineno, "unknown protocol '" + value + "' (aodv, aomdv, trust_aomdv)");
        } else if (key == "seed" && parse_u64(value, u)) sc.seed = u;
        else if (key == "horizon" && parse_double(value, d)) sc.horizon = d;
        else if (key == "trust_window" && parse_u64(value, u) && u <= UINT32_MAX)
          sc.params.trust_window = static_cast<std::uint32_t>(u);
        else if (key == "gamma" && parse_double(value, d)) sc.params.gamma = d;
        else if (key == "regen_rate" && parse_double(value, d)) sc.params.regen_rate = d;
        else if (key == "degradation" && parse_double(value, d)) sc.params.degradation = d;
        else if (key == "max_paths" && parse_u64(value, u) && u <= UINT32_MAX)
          sc.params.max_paths = static_cast<std::uint32_t>(u);
        else if (key == "batch" && parse_u64(value, u) && u <= UINT32_MAX)
          sc.params.batch = static_cast<std::uint32_t>(u);
        else if (key == "timeout_epsilon" && parse_double(value, d)) sc.params.timeout_epsilon = d;
        else if (key == "battery_period" && parse_double(value, d)) sc.params.battery_period = d;
        else if (key == "route_lifetime" && parse_double(value, d)) sc.params.route_lifetime = d;
        else if (key == "ttl" && parse_u64(value, u) && u <= UINT32_MAX)
          sc.params.ttl = static_cast<std::uint32_t>(u);
        else if (key == "rreq_retry" && parse_double(value, d)) sc.params.rreq_retry = d;
        else fail(lineno, "unknown or malformed parameter '" + key + " = " + value + "'");
        break;
      }
    }
  }

  if (!saw_version) {
    fail(lineno, "empty document; expected 'version 1'");
    return result;
  }

  for (auto& d : validate_scenario(sc)) diags.push_back(std::move(d));
  if (diags.empty()) result.scenario = std::move(sc);
  return result;
}

/// Canonical serialization; parse_scenario(serialize_scenario(s)) == s.
inline std::string serialize_scenario(const Scenario& s) {
  std::string out = "version 1\n\n[nodes]\n";
  for (const auto& n : s.nodes) {
    out += "node " + std::to_string(n.id);
    out += " battery=" + fmt_exact(n.initial_battery);
    out += " idle_drain=" + fmt_exact(n.idle_drain);
    out += " tx_cost=" + fmt_exact(n.tx_cost);
    if (n.trust_window) out += " trust_window=" + std::to_string(*n.trust_window);
    if (n.gamma) out += " gamma=" + fmt_exact(*n.gamma);
    if (n.regen_rate) out += " regen_rate=" + fmt_exact(*n.regen_rate);
    if (n.degradation) out += " degradation=" + fmt_exact(*n.degradation);
    out += "\n";
  }
  out += "\n[links]\n";
  for (const auto& l : s.links) {
    out += "link " + std::to_string(l.a) + " " + std::to_string(l.b);
    out += " q=" + fmt_exact(l.success_prob);
    out += " t=" + fmt_exact(l.transmission_time);
    out += " up=" + std::string(l.initially_up ? "true" : "false");
    out += "\n";
  }
  for (const auto& e : s.link_events) {
    out += "linkevent " + std::to_string(e.a) + " " + std::to_string(e.b);
    out += " at=" + fmt_exact(e.time);
    out += " up=" + std::string(e.up ? "true" : "false");
    out += "\n";
  }
  out += "\n[flows]\n";
  for (const auto& f : s.flows) {
    out += "flow " + std::to_string(f.source) + " " + std::to_string(f.dest);
    if (f.packets) out += " packets=" + std::to_string(*f.packets);
    if (f.rate) out += " rate=" + fmt_exact(*f.rate);
    out += " start=" + fmt_exact(f.start);
    out += "\n";
  }
  out += "\n[params]\n";
  out += "protocol = " + std::string(protocol_name(s.protocol)) + "\n";
  out += "seed = " + std::to_string(s.seed) + "\n";
  out += "horizon = " + fmt_exact(s.horizon) + "\n";
  out += "trust_window = " + std::to_string(s.params.trust_window) + "\n";
  out += "gamma = " + fmt_exact(s.params.gamma) + "\n";
  out += "regen_rate = " + fmt_exact(s.params.regen_rate) + "\n";
  out += "degradation = " + fmt_exact(s.params.degradation) + "\n";
  out += "max_paths = " + std::to_string(s.params.max_paths) + "\n";
  out += "batch = " + std::to_string(s.params.batch) + "\n";
  out += "timeout_epsilon = " + fmt_exact(s.params.timeout_epsilon) + "\n";
  out += "battery_period = " + fmt_exact(s.params.battery_period) + "\n";
  out += "route_lifetime = " + fmt_exact(s.params.route_lifetime) + "\n";
  out += "ttl = " + std::to_string(s.params.ttl) + "\n";
  out += "rreq_retry = " + fmt_exact(s.params.rreq_retry) + "\n";
  return out;
}

}  // namespace taomdv

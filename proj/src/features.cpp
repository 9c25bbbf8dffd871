#include "metauad/features.hpp"

#include <cmath>
#include <functional>

#include <nlohmann/json.hpp>

#include "metauad/common.hpp"
#include "metauad/csv.hpp"

namespace metauad {

namespace {

// Degenerate-case policy: statistics over an empty sample set are 0, the
// std of a single sample is 0 (population std throughout), and any ratio
// with a zero denominator is 0.
struct Stats {
  double total = 0;
  double min = 0;
  double max = 0;
  double mean = 0;
  double std = 0;
  std::size_t count = 0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.min = xs[0];
  s.max = xs[0];
  for (double x : xs) {
    s.total += x;
    if (x < s.min) s.min = x;
    if (x > s.max) s.max = x;
  }
  s.mean = s.total / static_cast<double>(xs.size());
  double acc = 0;
  for (double x : xs) acc += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(acc / static_cast<double>(xs.size()));
  return s;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// Per-flow aggregates every feature is computed from.
struct FlowAgg {
  double duration_s = 0;
  double fwd_count = 0, bwd_count = 0, flow_count = 0;
  double fwd_header = 0, bwd_header = 0;
  Stats fwd_len, bwd_len, flow_len;
  Stats fwd_hdr, bwd_hdr;
  Stats fwd_iat, bwd_iat, flow_iat;
  double fwd_psh = 0, bwd_psh = 0, flow_psh = 0;
  double flow_ack = 0, flow_fin = 0, flow_syn = 0, flow_rst = 0, flow_urg = 0;
};

FlowAgg aggregate(const FlowRecord& flow) {
  FlowAgg a;
  std::vector<double> fwd_len, bwd_len, flow_len, fwd_hdr_v, bwd_hdr_v;
  std::vector<double> fwd_ts, bwd_ts, flow_ts;
  for (const PacketMeta& p : flow.packets) {
    double pay = static_cast<double>(p.payload_len);
    double hdr = static_cast<double>(p.header_len);
    double ts = static_cast<double>(p.timestamp_us);
    flow_len.push_back(pay);
    flow_ts.push_back(ts);
    bool psh = (p.tcp_flags & kPsh) != 0;
    if (p.direction == Direction::forward) {
      fwd_len.push_back(pay);
      fwd_hdr_v.push_back(hdr);
      fwd_ts.push_back(ts);
      if (psh) a.fwd_psh += 1;
    } else {
      bwd_len.push_back(pay);
      bwd_hdr_v.push_back(hdr);
      bwd_ts.push_back(ts);
      if (psh) a.bwd_psh += 1;
    }
    if (psh) a.flow_psh += 1;
    if (p.tcp_flags & kAck) a.flow_ack += 1;
    if (p.tcp_flags & kFin) a.flow_fin += 1;
    if (p.tcp_flags & kSyn) a.flow_syn += 1;
    if (p.tcp_flags & kRst) a.flow_rst += 1;
    if (p.tcp_flags & kUrg) a.flow_urg += 1;
  }

  auto iats = [](const std::vector<double>& ts) {
    std::vector<double> d;
    for (std::size_t i = 1; i < ts.size(); ++i) d.push_back(ts[i] - ts[i - 1]);
    return d;
  };

  a.duration_s =
      static_cast<double>(flow.end_time_us - flow.start_time_us) * 1e-6;
  a.fwd_count = static_cast<double>(fwd_len.size());
  a.bwd_count = static_cast<double>(bwd_len.size());
  a.flow_count = static_cast<double>(flow.packets.size());
  a.fwd_len = stats_of(fwd_len);
  a.bwd_len = stats_of(bwd_len);
  a.flow_len = stats_of(flow_len);
  a.fwd_hdr = stats_of(fwd_hdr_v);
  a.bwd_hdr = stats_of(bwd_hdr_v);
  a.fwd_header = a.fwd_hdr.total;
  a.bwd_header = a.bwd_hdr.total;
  a.fwd_iat = stats_of(iats(fwd_ts));
  a.bwd_iat = stats_of(iats(bwd_ts));
  a.flow_iat = stats_of(iats(flow_ts));
  return a;
}

struct FeatureDef {
  const char* id;
  double (*fn)(const FlowAgg&);
};

// "Mean" in the packet-count rows is packets per second of flow duration.
const FeatureDef kFeatureTable[] = {
    {"Bwd packet count: Total", [](const FlowAgg& a) { return a.bwd_count; }},
    {"Bwd packet count: Mean", [](const FlowAgg& a) { return ratio(a.bwd_count, a.duration_s); }},
    {"Flow packet count: Total", [](const FlowAgg& a) { return a.flow_count; }},
    {"Flow packet count: Mean",
     [](const FlowAgg& a) { return ratio(a.flow_count, a.duration_s); }},
    {"Bwd/Fwd packet total count ratio",
     [](const FlowAgg& a) { return ratio(a.bwd_count, a.fwd_count); }},
    {"Fwd header Length: Total", [](const FlowAgg& a) { return a.fwd_header; }},
    {"Bwd header Length: Total", [](const FlowAgg& a) { return a.bwd_header; }},
    {"Flow header Length: Total", [](const FlowAgg& a) { return a.fwd_header + a.bwd_header; }},
    {"Bwd/Fwd header total length ratio",
     [](const FlowAgg& a) { return ratio(a.bwd_header, a.fwd_header); }},
    {"Fwd packet Length: Total", [](const FlowAgg& a) { return a.fwd_len.total; }},
    {"Fwd packet Length: Max", [](const FlowAgg& a) { return a.fwd_len.max; }},
    {"Fwd packet Length: Mean", [](const FlowAgg& a) { return a.fwd_len.mean; }},
    {"Fwd packet Length: Std", [](const FlowAgg& a) { return a.fwd_len.std; }},
    {"Bwd packet Length: Total", [](const FlowAgg& a) { return a.bwd_len.total; }},
    {"Bwd packet Length: Max", [](const FlowAgg& a) { return a.bwd_len.max; }},
    {"Bwd packet Length: Mean", [](const FlowAgg& a) { return a.bwd_len.mean; }},
    {"Bwd packet Length: Std", [](const FlowAgg& a) { return a.bwd_len.std; }},
    {"Flow packet Length: Total", [](const FlowAgg& a) { return a.flow_len.total; }},
    {"Flow packet Length: Max", [](const FlowAgg& a) { return a.flow_len.max; }},
    {"Flow packet Length: Mean", [](const FlowAgg& a) { return a.flow_len.mean; }},
    {"Flow packet Length: Std", [](const FlowAgg& a) { return a.flow_len.std; }},
    {"Bwd/Fwd packet total length ratio",
     [](const FlowAgg& a) { return ratio(a.bwd_len.total, a.fwd_len.total); }},
    {"Fwd IAT: Min", [](const FlowAgg& a) { return a.fwd_iat.min; }},
    {"Fwd IAT: Max", [](const FlowAgg& a) { return a.fwd_iat.max; }},
    {"Fwd IAT: Mean", [](const FlowAgg& a) { return a.fwd_iat.mean; }},
    {"Fwd IAT: Std", [](const FlowAgg& a) { return a.fwd_iat.std; }},
    {"Bwd IAT: Max", [](const FlowAgg& a) { return a.bwd_iat.max; }},
    {"Bwd IAT: Mean", [](const FlowAgg& a) { return a.bwd_iat.mean; }},
    {"Flow IAT: Total", [](const FlowAgg& a) { return a.flow_iat.total; }},
    {"Flow IAT: Max", [](const FlowAgg& a) { return a.flow_iat.max; }},
    {"Flow IAT: Mean", [](const FlowAgg& a) { return a.flow_iat.mean; }},
    {"Fwd flag count: PSH", [](const FlowAgg& a) { return a.fwd_psh; }},
    {"Flow flag count: ACK", [](const FlowAgg& a) { return a.flow_ack; }},
    // candidate-set complements of the families above
    {"Flow duration", [](const FlowAgg& a) { return a.duration_s * 1e6; }},
    {"Fwd packet count: Total", [](const FlowAgg& a) { return a.fwd_count; }},
    {"Fwd packet count: Mean", [](const FlowAgg& a) { return ratio(a.fwd_count, a.duration_s); }},
    {"Fwd packet Length: Min", [](const FlowAgg& a) { return a.fwd_len.min; }},
    {"Bwd packet Length: Min", [](const FlowAgg& a) { return a.bwd_len.min; }},
    {"Flow packet Length: Min", [](const FlowAgg& a) { return a.flow_len.min; }},
    {"Fwd IAT: Total", [](const FlowAgg& a) { return a.fwd_iat.total; }},
    {"Bwd IAT: Total", [](const FlowAgg& a) { return a.bwd_iat.total; }},
    {"Bwd IAT: Min", [](const FlowAgg& a) { return a.bwd_iat.min; }},
    {"Bwd IAT: Std", [](const FlowAgg& a) { return a.bwd_iat.std; }},
    {"Flow IAT: Min", [](const FlowAgg& a) { return a.flow_iat.min; }},
    {"Flow IAT: Std", [](const FlowAgg& a) { return a.flow_iat.std; }},
    {"Fwd header Length: Max", [](const FlowAgg& a) { return a.fwd_hdr.max; }},
    {"Fwd header Length: Mean", [](const FlowAgg& a) { return a.fwd_hdr.mean; }},
    {"Bwd header Length: Max", [](const FlowAgg& a) { return a.bwd_hdr.max; }},
    {"Bwd header Length: Mean", [](const FlowAgg& a) { return a.bwd_hdr.mean; }},
    {"Flow bytes per second", [](const FlowAgg& a) { return ratio(a.flow_len.total, a.duration_s); }},
    {"Fwd bytes per second", [](const FlowAgg& a) { return ratio(a.fwd_len.total, a.duration_s); }},
    {"Bwd bytes per second", [](const FlowAgg& a) { return ratio(a.bwd_len.total, a.duration_s); }},
    {"Flow flag count: FIN", [](const FlowAgg& a) { return a.flow_fin; }},
    {"Flow flag count: SYN", [](const FlowAgg& a) { return a.flow_syn; }},
    {"Flow flag count: RST", [](const FlowAgg& a) { return a.flow_rst; }},
    {"Flow flag count: PSH", [](const FlowAgg& a) { return a.flow_psh; }},
    {"Flow flag count: URG", [](const FlowAgg& a) { return a.flow_urg; }},
    {"Bwd flag count: PSH", [](const FlowAgg& a) { return a.bwd_psh; }},
};

}  // namespace

double FeatureVector::at(const std::string& id) const {
  for (const auto& [k, v] : values) {
    if (k == id) return v;
  }
  throw PreconditionError("unknown feature id: " + id);
}

const std::vector<std::string>& feature_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const FeatureDef& d : kFeatureTable) v.emplace_back(d.id);
    return v;
  }();
  return ids;
}

FeatureVector compute_features(const FlowRecord& flow) {
  if (flow.packets.empty()) throw PreconditionError("flow has no packets");
  FlowAgg agg = aggregate(flow);
  FeatureVector fv;
  fv.values.reserve(std::size(kFeatureTable));
  for (const FeatureDef& d : kFeatureTable) fv.values.emplace_back(d.id, d.fn(agg));
  return fv;
}

std::vector<FeatureVector> compute_features(const std::vector<FlowRecord>& flows) {
  std::vector<FeatureVector> out(flows.size());
  parallel_for(flows.size(), [&](std::size_t i) { out[i] = compute_features(flows[i]); });
  return out;
}

std::string feature_manifest_path(const std::string& csv_path) {
  std::size_t dot = csv_path.find_last_of('.');
  std::size_t slash = csv_path.find_last_of("/\\");
  std::string stem = (dot == std::string::npos || (slash != std::string::npos && dot < slash))
                         ? csv_path
                         : csv_path.substr(0, dot);
  return stem + ".features.json";
}

void export_features(const std::vector<FeatureVector>& flows,
                     const std::vector<std::string>* labels, const std::string& path) {
  const auto& ids = feature_ids();
  std::vector<std::vector<double>> rows;
  rows.reserve(flows.size());
  for (const FeatureVector& fv : flows) {
    if (fv.size() != ids.size()) throw PreconditionError("feature vector width mismatch");
    std::vector<double> row;
    row.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (fv.values[i].first != ids[i]) throw PreconditionError("feature vector order mismatch");
      row.push_back(fv.values[i].second);
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, ids, rows, labels);

  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& id : ids) manifest.push_back(id);
  write_text_file(feature_manifest_path(path), manifest.dump(2) + "\n");
}

}  // namespace metauad

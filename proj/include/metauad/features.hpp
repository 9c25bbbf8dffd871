#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metauad/flow.hpp"

namespace metauad {

struct FeatureVector {
  std::vector<std::pair<std::string, double>> values;
  std::size_t size() const { return values.size(); }
  double at(const std::string& id) const;  // PreconditionError on unknown id
};

// Canonical id ordering of the candidate feature set. Every extraction run
// emits exactly these ids in exactly this order. Lengths are bytes, times
// microseconds, rates per second; packet length means payload bytes.
const std::vector<std::string>& feature_ids();

FeatureVector compute_features(const FlowRecord& flow);

// Parallel over flows; output order matches input order.
std::vector<FeatureVector> compute_features(const std::vector<FlowRecord>& flows);

// CSV with one row per vector plus a trailing label column when labels are
// given, and a sibling `<stem>.features.json` id manifest.
void export_features(const std::vector<FeatureVector>& flows,
                     const std::vector<std::string>* labels, const std::string& path);

std::string feature_manifest_path(const std::string& csv_path);

}  // namespace metauad

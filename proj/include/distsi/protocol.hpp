#pragma once

#include "distsi/selective.hpp"
#include "distsi/wire.hpp"

namespace distsi {

struct AggregationRule {
  enum class Kind { union_rule, grouped };
  Kind kind = Kind::union_rule;
  std::vector<IndexList> groups;  // full partition of [p] when grouped
  std::uint64_t seed = 0;

  bool is_general() const { return kind != Kind::union_rule; }
};

/// Merge the selected sets: sorted union, or one seeded uniform pick per
/// touched group under the grouped rule. Throws EmptyModelError when every
/// set is empty.
IndexList aggregate_models(const std::vector<IndexList>& sets,
                           const AggregationRule& rule);

struct TranscriptEntry {
  int exchange = 0;  // 0 = selection submissions, 1..4 per the algorithm
  int from_node = 0;
  int to_node = 0;  // -1 marks the central machine
  std::string frame;
};

struct AccessEvent {
  int node_id = 0;
  std::string phase;
};

struct Transcript {
  std::vector<TranscriptEntry> messages;
  int exchanges = 0;
  std::vector<AccessEvent> data_access;
};

struct ProtocolOptions {
  double alpha = 0.1;
  AggregationRule rule;
};

struct ProtocolResult {
  InferenceReport report;
  IndexList E;
  Vector beta_E;
  Matrix info_EE;         // aggregated obs-FI over E, dispersion-scaled
  double sigma2_hat = 1.0;
  int n = 0;
  std::vector<IndexList> E_sets;     // as announced by the local machines
  std::vector<Vector> lasso_values;  // nonzero lasso coefficients per node
  Transcript transcript;
};

/// Run the full exchange protocol. nodes[0] is the central holdout; every
/// flow between the coordinator and nodes 1..K passes through encoded
/// WireMessage frames recorded in the transcript. penalties holds either one
/// shared spec or one per local machine.
ProtocolResult run_protocol(const std::vector<Dataset>& nodes,
                            const FamilySpec& family,
                            const std::vector<PenaltySpec>& penalties,
                            const ProtocolOptions& options);

}  // namespace distsi

#pragma once

#include "distsi/common.hpp"

#include <string>
#include <string_view>
#include <variant>

namespace distsi {

// One-shot protocol message schema. Frames are canonical text:
//   DSI1 <kind> <node_id> <payload-length>\n<payload>\n
// with doubles printed at 17 significant digits and symmetric matrices as
// lower-triangular row-major blocks, so encoding is deterministic and the
// round trip is exact.

enum class MsgKind {
  SelectedSet,
  ModelBroadcast,
  LocalSummary,
  MleBroadcast,
  ResidualCompensation,
};

const char* msg_kind_name(MsgKind kind);

/// Step 1: local machine announces its lasso support and the nonzero
/// coefficient values (the optimizer's initial point at the central node).
struct SelectedSetBody {
  IndexList indices;
  Vector values;
};

/// Exchange 1: the aggregated model and, under a general rule, the support
/// superset over which information and subgradients must be reported.
struct ModelBroadcastBody {
  IndexList E;
  IndexList support;  // equals E under the union rule
  bool general_rule = false;
};

/// Exchange 2: local MLE, obs-FI over the broadcast support, penalty
/// subgradient over the support, and the residual second moment used for
/// pooled dispersion estimation. Size is O(|support|^2), independent of p.
struct LocalSummaryBody {
  Vector beta_E;
  Matrix info;
  Vector gamma;
  double yty = 0.0;
  int n_k = 0;
};

/// Exchange 3 (general rule): aggregated MLE shipped back out.
struct MleBroadcastBody {
  Vector beta_E;
};

/// Exchange 4 (general rule): unnormalized residual-score sums
/// X'_{support \ E} (A'(X_E beta_E) - y) on the node's rows.
struct ResidualCompensationBody {
  Vector values;
};

struct WireMessage {
  int schema_version = 1;
  MsgKind kind = MsgKind::SelectedSet;
  int node_id = 0;
  std::variant<SelectedSetBody, ModelBroadcastBody, LocalSummaryBody,
               MleBroadcastBody, ResidualCompensationBody>
      body;
};

std::string encode(const WireMessage& msg);
WireMessage decode(std::string_view frame);

}  // namespace distsi

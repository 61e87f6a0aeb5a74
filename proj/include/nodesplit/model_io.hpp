#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "nodesplit/graph.hpp"
#include "nodesplit/split.hpp"

namespace nodesplit {

// Text model format. Sections:
//
//   [nodes]
//   theta ~ Beta(0.5, 0.5) : unit
//   odds = theta / (1 - theta) : positive
//   [observations]
//   y ~ Binomial(10, theta) = 3
//   [blocks]
//   a, b
//   [split]
//   separator theta : logit
//   partition first : y
//   copy theta @ first : founder JeffreysProportion()
//   shared sigma
//   pairs all
//
// '#' starts a comment. Supports after ':' are optional on input.
struct ModelFile {
  ModelGraph graph;
  std::optional<SplitSpec> split;
};

ModelFile parse_model(std::string_view text);
ModelFile load_model(const std::string& path);

// Canonical form: nodes in canonical topological order, numbers in shortest
// round-trip notation. parse_model(serialize_model(m)) serialises identically.
std::string serialize_model(const ModelGraph& g, const std::optional<SplitSpec>& split = std::nullopt);

Expr parse_expr(std::string_view text);
std::string format_expr(const Expr& e);
std::string format_number(double v);
std::string format_distribution(const Distribution& d);

}  // namespace nodesplit

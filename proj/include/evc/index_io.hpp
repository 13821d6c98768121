#pragma once

#include <string>
#include <vector>

#include "evc/index_gen.hpp"

namespace evc {

/// Index tables as exchanged with other implementations (see docs/formats.md).
struct IndexExport {
  int n = 0;
  int order = 0;
  std::vector<FullPositionMatrix> fpms;                  // orders 1..order
  std::vector<ProgressiveComputationMatrices> pcms;      // orders 2..order
};

IndexExport export_indices(const IndexSet& set);

/// Compact JSON with a fixed key order and a trailing newline, so repeated
/// exports of the same (n, r) are byte-identical.
std::string to_json(const IndexExport& exported);

/// Throws FormatError on malformed input.
IndexExport parse_index_json(const std::string& text);

}  // namespace evc

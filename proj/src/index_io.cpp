#include "evc/index_io.hpp"

#include <json.hpp>

#include "evc/error.hpp"

namespace evc {
namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json rows_json(const PositionMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const auto row = m.row(k);
    rows.push_back(ordered_json(std::vector<Index>(row.begin(), row.end())));
  }
  return rows;
}

}  // namespace

IndexExport export_indices(const IndexSet& set) {
  IndexExport out{set.n(), set.order(), set.fpms(), {}};
  for (int j = 2; j <= set.order(); ++j) out.pcms.push_back(set.pcms(j));
  return out;
}

std::string to_json(const IndexExport& exported) {
  ordered_json doc;
  doc["n"] = exported.n;
  doc["order"] = exported.order;
  doc["fpm"] = ordered_json::array();
  for (const auto& fpm : exported.fpms) {
    ordered_json entry;
    entry["order"] = fpm.order;
    entry["rows"] = rows_json(fpm.rows);
    doc["fpm"].push_back(std::move(entry));
  }
  doc["pcms"] = ordered_json::array();
  for (const auto& pcm : exported.pcms) {
    ordered_json entry;
    entry["order"] = pcm.order;
    entry["variants"] = ordered_json::array();
    for (const auto& table : pcm.variants) {
      ordered_json pairs = ordered_json::array();
      for (std::size_t k = 0; k < table.size(); ++k) {
        pairs.push_back({table.position[k], table.prev_row[k]});
      }
      entry["variants"].push_back(std::move(pairs));
    }
    doc["pcms"].push_back(std::move(entry));
  }
  return doc.dump() + "\n";
}

IndexExport parse_index_json(const std::string& text) {
  try {
    const auto doc = ordered_json::parse(text);
    IndexExport out;
    out.n = doc.at("n").get<int>();
    out.order = doc.at("order").get<int>();
    for (const auto& entry : doc.at("fpm")) {
      FullPositionMatrix fpm;
      fpm.order = entry.at("order").get<int>();
      fpm.n = out.n;
      fpm.rows = PositionMatrix(static_cast<std::size_t>(fpm.order));
      for (const auto& row : entry.at("rows")) fpm.rows.append(row.get<std::vector<Index>>());
      out.fpms.push_back(std::move(fpm));
    }
    for (const auto& entry : doc.at("pcms")) {
      ProgressiveComputationMatrices pcm;
      pcm.order = entry.at("order").get<int>();
      pcm.n = out.n;
      for (const auto& pairs : entry.at("variants")) {
        PcmTable table;
        for (const auto& pair : pairs) {
          if (pair.size() != 2) throw FormatError("PCM entries must be [position, row] pairs");
          table.position.push_back(pair[0].get<Index>());
          table.prev_row.push_back(pair[1].get<Index>());
        }
        pcm.variants.push_back(std::move(table));
      }
      out.pcms.push_back(std::move(pcm));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("index JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("index JSON: ") + e.what());
  }
}

}  // namespace evc

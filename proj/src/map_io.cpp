#include "seq2d/map_io.hpp"

#include <fstream>

#include <json.hpp>

namespace seq2d {

using nlohmann::json;

namespace {

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const json& j, int row, int col) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError("cell (" + std::to_string(row) + "," + std::to_string(col) +
                         "): weight must be a non-empty array of rows",
                     row, col);
  const size_t cols = j[0].size();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ParseError("cell (" + std::to_string(row) + "," + std::to_string(col) +
                           "): ragged weight rows",
                       row, col);
    for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string serialize(const BlockMap& map) {
  json doc;
  doc["partition"] = map.partition().sizes();
  json post = json::array();
  for (int i = 0; i < map.blocks(); ++i) post.push_back(activation_name(map.post_act(i)));
  doc["post_act"] = std::move(post);

  json cells = json::array();
  for (int i = 0; i < map.blocks(); ++i) {
    for (int j = 0; j < map.blocks(); ++j) {
      const Cell& c = map.cell(i, j);
      if (c.is_zero()) continue;
      json jc;
      jc["row"] = i;
      jc["col"] = j;
      if (c.kind() == CellKind::scaled_identity) {
        jc["kind"] = "scaled_identity";
        jc["scale"] = c.scale();
      } else {
        jc["kind"] = "affine";
        jc["weight"] = matrix_to_json(c.weight());
        if (c.has_bias()) {
          json b = json::array();
          for (Eigen::Index k = 0; k < c.bias().size(); ++k) b.push_back(c.bias()(k));
          jc["bias"] = std::move(b);
        }
        jc["act"] = activation_name(c.act());
      }
      cells.push_back(std::move(jc));
    }
  }
  doc["cells"] = std::move(cells);
  return doc.dump();
}

BlockMap deserialize(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("map document is not valid JSON: ") + e.what());
  }

  if (!doc.contains("partition") || !doc["partition"].is_array())
    throw ParseError("map document is missing the partition array");

  std::vector<int> sizes;
  for (const auto& s : doc["partition"]) {
    if (!s.is_number_integer() || s.get<int>() < 1)
      throw ParseError("partition entries must be positive integers");
    sizes.push_back(s.get<int>());
  }
  BlockMap map{BlockPartition(sizes)};
  const int n = map.blocks();

  if (doc.contains("post_act")) {
    const auto& post = doc["post_act"];
    if (!post.is_array() || static_cast<int>(post.size()) != n)
      throw ParseError("post_act must list one activation per block row");
    for (int i = 0; i < n; ++i) {
      try {
        map.set_post_act(i, activation_from_name(post[i].get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("post_act: ") + e.what());
      }
    }
  }

  for (const auto& jc : doc.value("cells", json::array())) {
    if (!jc.contains("row") || !jc.contains("col"))
      throw ParseError("cell entry is missing row/col");
    const int row = jc["row"].get<int>();
    const int col = jc["col"].get<int>();
    const std::string at = "(" + std::to_string(row) + "," + std::to_string(col) + ")";
    if (row < 0 || col < 0 || row >= n || col >= n)
      throw ParseError("cell " + at + " is outside the grid", row, col);

    const std::string kind = jc.value("kind", "affine");
    Cell cell;
    if (kind == "zero") {
      cell = Cell::zero();
    } else if (kind == "scaled_identity") {
      if (!jc.contains("scale")) throw ParseError("cell " + at + ": missing scale", row, col);
      cell = Cell::scaled_identity(jc["scale"].get<double>());
    } else if (kind == "affine") {
      if (!jc.contains("weight")) throw ParseError("cell " + at + ": missing weight", row, col);
      Mat w = matrix_from_json(jc["weight"], row, col);
      Activation act = Activation::identity;
      if (jc.contains("act")) {
        try {
          act = activation_from_name(jc["act"].get<std::string>());
        } catch (const std::invalid_argument& e) {
          throw ParseError("cell " + at + ": " + e.what(), row, col);
        }
      }
      if (jc.contains("bias") && !jc["bias"].is_null()) {
        Vec b(static_cast<Eigen::Index>(jc["bias"].size()));
        for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = jc["bias"][static_cast<size_t>(k)].get<double>();
        if (b.size() != w.rows())
          throw ParseError("cell " + at + ": bias length does not match weight rows", row, col);
        cell = Cell::affine(std::move(w), std::move(b), act);
      } else {
        cell = Cell::affine(std::move(w), act);
      }
    } else {
      throw ParseError("cell " + at + ": unknown kind '" + kind + "'", row, col);
    }

    try {
      map.set_cell(row, col, std::move(cell));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string(e.what()), row, col);
    }
  }
  return map;
}

void save_map(const BlockMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << serialize(map);
}

BlockMap load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map document: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(text);
}

}  // namespace seq2d

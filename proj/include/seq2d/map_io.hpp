#pragma once

#include <stdexcept>
#include <string>

#include "seq2d/block_map.hpp"

namespace seq2d {

/// Malformed map document. Carries the grid coordinates of the offending
/// cell when they are known (row/col are -1 otherwise).
class ParseError : public std::runtime_error {
public:
  ParseError(std::string message, int row = -1, int col = -1)
      : std::runtime_error(std::move(message)), row_(row), col_(col) {}

  int row() const { return row_; }
  int col() const { return col_; }

private:
  int row_;
  int col_;
};

/// JSON map document. Weights survive the round trip bit-exactly; omitted
/// cells are Zero.
std::string serialize(const BlockMap& map);
BlockMap deserialize(const std::string& text);

void save_map(const BlockMap& map, const std::string& path);
BlockMap load_map(const std::string& path);

}  // namespace seq2d

#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dhf/hierarchy.hpp"
#include "dhf/mrdlm.hpp"

namespace dhf::io {

/// Fitted state written by `fit` and read by `forecast` and `reconcile`.
///
/// Layout: the 8 bytes "DHFCKPT\0", a u32 format version, then the fields
/// below in order. Integers are little-endian (u32/u64/i64), doubles are
/// IEEE-754 binary64 stored little-endian, strings and vectors are a u64
/// length followed by their elements, matrices are u64 rows, u64 cols and
/// column-major doubles.
struct Checkpoint {
  std::vector<Edge> edges;
  std::string config_json;
  std::vector<std::string> factor_ids;
  std::string last_time;
  long last_row = -1;
  Mrdlm model;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint_file(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace dhf::io

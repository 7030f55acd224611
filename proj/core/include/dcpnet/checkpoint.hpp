#pragma once

#include <optional>
#include <string>

#include "dcpnet/bank.hpp"
#include "dcpnet/model.hpp"

namespace dcpnet {

struct Checkpoint {
  ModelState state;
  int epoch = 0;
  std::optional<MemoryBank> bank;
};

/// Writes every parameter group and buffer, the encoder spec, the epoch counter
/// and (optionally) the bank. The file is a pure function of its inputs:
/// "DCPNETCK", a little-endian u64 header length, a JSON header, raw tensor bytes.
void save_checkpoint(const std::string& path, const ModelState& state, int epoch, const MemoryBank* bank = nullptr);

/// Throws StateError when the file is missing or malformed.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dcpnet

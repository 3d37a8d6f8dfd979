#pragma once

#include <string>

#include "gtaseg/params.hpp"
#include "gtaseg/synthdata.hpp"

namespace gtaseg {

// Checkpoint ("GTAS") layout, all little-endian:
//   magic "GTAS", version u16, entry count u32, then per entry:
//   name length u16, UTF-8 name, role u8, layer_index u16, ndim u8,
//   dims u32 each, raw float32 payload.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// Dataset ("GTAD") layout:
//   magic "GTAD", version u16, classes u16, image size u16,
//   labeled/unlabeled/heldout counts u32, then samples in that split order:
//   id u32, hidden-mask flag u8, image float32 payload, mask u8 payload.
void save_dataset(const DatasetSplit& data, const std::string& path);
DatasetSplit load_dataset(const std::string& path);

}  // namespace gtaseg

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dcpnet/dataset.hpp"
#include "dcpnet/image.hpp"

namespace dcpnet {

/// Reads binary (P5) or ASCII (P2) PGM, 8 or 16 bit, scaled to [0, 1] by maxval.
ImageChip read_pgm(const std::string& path);
/// Writes an 8-bit binary PGM.
void write_pgm(const std::string& path, const ImageChip& chip);

/// Loads every *.pgm in `directory` (filename-sorted), center-crops and resizes
/// to crop_size. With a labels.csv manifest (filename,label) the result is labeled;
/// labels may be integers or class names (names are indexed in sorted order).
/// Unreadable files are skipped with a warning on `warnings`.
ChipCollection ingest_directory(const std::string& directory, int crop_size, std::ostream& warnings);

}  // namespace dcpnet

#pragma once

#include <filesystem>

#include "mindreg/volume.hpp"

namespace mindreg {

/// MetaImage-style header/raw pair. The raw payload is little-endian and is
/// written next to the header as <stem>.raw.
enum class ElementType { Float, Short, UChar };

ScalarVolume read_volume(const std::filesystem::path& header);
void write_volume(const ScalarVolume& vol, const std::filesystem::path& header);

DisplacementField read_field(const std::filesystem::path& header);
void write_field(const DisplacementField& field, const std::filesystem::path& header);

/// Masks are stored as MET_UCHAR; reading accepts any element type and
/// treats nonzero values as foreground.
BinaryMask read_mask(const std::filesystem::path& header);
void write_mask(const BinaryMask& mask, const std::filesystem::path& header);

}  // namespace mindreg

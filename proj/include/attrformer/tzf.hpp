#pragma once

#include <filesystem>
#include <stdexcept>

#include "attrformer/tape.hpp"

namespace attrformer {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary matrix file: magic "TZF1", then three unsigned 32-bit
/// little-endian words (rows, cols, reserved 0), then rows*cols IEEE-754
/// 32-bit little-endian floats in row-major order.
void writeTzf(const std::filesystem::path& path, const Mat& m);

/// Reads a TZF1 file, widening the floats to 64-bit. Throws IoError for a
/// missing file or wrong magic and names the file in every diagnostic.
Mat readTzf(const std::filesystem::path& path);

/// Rounds every entry to its nearest float, so a later save/load through
/// the 32-bit file format reproduces the matrix bit for bit.
Mat quantizeToFloat(const Mat& m);

} // namespace attrformer

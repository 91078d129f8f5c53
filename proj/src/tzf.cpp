#include "attrformer/tzf.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace attrformer {

namespace {

constexpr char kMagic[4] = {'T', 'Z', 'F', '1'};

void putU32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t getU32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void writeTzf(const std::filesystem::path& path, const Mat& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    os.write(kMagic, 4);
    putU32(os, static_cast<std::uint32_t>(m.rows()));
    putU32(os, static_cast<std::uint32_t>(m.cols()));
    putU32(os, 0);
    std::vector<std::uint32_t> bits(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            bits[k++] = std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j)));
        }
    }
    for (std::uint32_t w : bits) {
        putU32(os, w);
    }
    if (!os) {
        throw IoError("write failed for " + path.string());
    }
}

Mat readTzf(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path.string());
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("bad magic in " + path.string() + " (expected TZF1)");
    }
    std::uint32_t rows = getU32(is);
    std::uint32_t cols = getU32(is);
    std::uint32_t reserved = getU32(is);
    if (!is || reserved != 0) {
        throw IoError("bad header in " + path.string() + " (reserved word must be 0)");
    }
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::uint32_t w = getU32(is);
            if (!is) {
                throw IoError("truncated data in " + path.string() + ": expected " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " floats");
            }
            m(i, j) = static_cast<double>(std::bit_cast<float>(w));
        }
    }
    is.peek();
    if (!is.eof()) {
        throw IoError("trailing bytes in " + path.string() + " after " + std::to_string(rows) +
                      "x" + std::to_string(cols) + " floats");
    }
    if (!m.allFinite()) {
        throw IoError("non-finite values in " + path.string());
    }
    return m;
}

Mat quantizeToFloat(const Mat& m) {
    Mat out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
        }
    }
    return out;
}

} // namespace attrformer

#pragma once

#include <vector>

#include "attrformer/tape.hpp"

namespace attrformer {

/// Corner coordinates of every grid cell in lattice units.
///
/// Cells are indexed row-major: cell i sits at (row i / nCols, col i % nCols).
/// v runs along columns (horizontal), t along rows (vertical).
struct GridLayout {
    Eigen::Index nRows = 0;
    Eigen::Index nCols = 0;
    std::vector<double> vMin, tMin, vMax, tMax;

    Eigen::Index cellCount() const { return nRows * nCols; }

    /// Degenerate unit boxes: cell (r, c) has both corners at (c, r), so
    /// every cell has width = height = 1.
    static GridLayout unitGrid(Eigen::Index rows, Eigen::Index cols);
};

struct CellBox {
    double vCen = 0.0;
    double tCen = 0.0;
    double width = 1.0;
    double height = 1.0;
};

/// Geometry MLP weights: 2 -> dG fully connected layer with bias, then a
/// dG -> 1 projection. Two ReLUs make the resulting bias nonnegative.
struct GeometryParams {
    Param fcWeight; // 2 x dG
    Param fcBias;   // 1 x dG
    Param wG;       // dG x 1
};

/// Center coordinates and box size of cell i.
CellBox centerAndSize(const GridLayout& layout, Eigen::Index i);

/// Two-component log-ratio relation between cells i and j. The absolute
/// center offset is clamped to clampEps before the logarithm so aligned
/// cells stay finite.
Eigen::Vector2d relativeGeometry(const GridLayout& layout, Eigen::Index i, Eigen::Index j,
                                 double clampEps);

/// All-pairs relative geometry, (HW*HW) x 2 with row k = i*HW + j.
/// Depends only on the layout, so it can be computed once and cached.
Mat relativeGeometryFeatures(const GridLayout& layout, double clampEps);

/// HW x HW nonnegative bias matrix; gradients flow into the params.
Var geometryMatrix(Tape& t, const GridLayout& layout, GeometryParams& params, double clampEps);

/// Same as geometryMatrix but from precomputed pair features.
Var geometryMatrixFromFeatures(Tape& t, Var pairFeatures, Eigen::Index cells,
                               GeometryParams& params);

} // namespace attrformer

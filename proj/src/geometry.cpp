#include "attrformer/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace attrformer {

GridLayout GridLayout::unitGrid(Eigen::Index rows, Eigen::Index cols) {
    GridLayout g;
    g.nRows = rows;
    g.nCols = cols;
    g.vMin.reserve(static_cast<std::size_t>(rows * cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            g.vMin.push_back(static_cast<double>(c));
            g.vMax.push_back(static_cast<double>(c));
            g.tMin.push_back(static_cast<double>(r));
            g.tMax.push_back(static_cast<double>(r));
        }
    }
    return g;
}

CellBox centerAndSize(const GridLayout& layout, Eigen::Index i) {
    if (i < 0 || i >= layout.cellCount()) {
        throw std::out_of_range("centerAndSize: cell " + std::to_string(i) + " out of range 0.." +
                                std::to_string(layout.cellCount() - 1));
    }
    auto k = static_cast<std::size_t>(i);
    CellBox box;
    box.vCen = 0.5 * (layout.vMin[k] + layout.vMax[k]);
    box.tCen = 0.5 * (layout.tMin[k] + layout.tMax[k]);
    box.width = layout.vMax[k] - layout.vMin[k] + 1.0;
    box.height = layout.tMax[k] - layout.tMin[k] + 1.0;
    return box;
}

Eigen::Vector2d relativeGeometry(const GridLayout& layout, Eigen::Index i, Eigen::Index j,
                                 double clampEps) {
    CellBox a = centerAndSize(layout, i);
    CellBox b = centerAndSize(layout, j);
    double dv = std::max(std::abs(a.vCen - b.vCen), clampEps);
    double dt = std::max(std::abs(a.tCen - b.tCen), clampEps);
    return {std::log(dv / a.width), std::log(dt / a.height)};
}

Mat relativeGeometryFeatures(const GridLayout& layout, double clampEps) {
    Eigen::Index n = layout.cellCount();
    Mat features(n * n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            features.row(i * n + j) = relativeGeometry(layout, i, j, clampEps).transpose();
        }
    }
    return features;
}

Var geometryMatrixFromFeatures(Tape& t, Var pairFeatures, Eigen::Index cells,
                               GeometryParams& params) {
    Var fcW = t.param(params.fcWeight);
    Var fcB = t.param(params.fcBias);
    Var wG = t.param(params.wG);
    Var hidden = relu(addRowVector(matmul(pairFeatures, fcW), fcB)); // (HW*HW) x dG
    Var column = relu(matmul(hidden, wG));                           // (HW*HW) x 1
    return reshape(column, cells, cells);
}

Var geometryMatrix(Tape& t, const GridLayout& layout, GeometryParams& params, double clampEps) {
    Var features = t.input(relativeGeometryFeatures(layout, clampEps));
    return geometryMatrixFromFeatures(t, features, layout.cellCount(), params);
}

} // namespace attrformer

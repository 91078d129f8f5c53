#include <doctest.h>

#include <cmath>

#include "attrformer/geometry.hpp"

using namespace attrformer;

TEST_CASE("unitGrid cells are row-major degenerate unit boxes") {
    GridLayout g = GridLayout::unitGrid(2, 3);
    CHECK(g.cellCount() == 6);
    // cell 4 = row 1, col 1
    CellBox b = centerAndSize(g, 4);
    CHECK(b.vCen == 1.0);
    CHECK(b.tCen == 1.0);
    CHECK(b.width == 1.0);
    CHECK(b.height == 1.0);
    CellBox last = centerAndSize(g, 5);
    CHECK(last.vCen == 2.0);
    CHECK(last.tCen == 1.0);
    CHECK_THROWS_AS(centerAndSize(g, 6), std::out_of_range);
}

TEST_CASE("relativeGeometry clamps aligned offsets and logs the rest") {
    GridLayout g = GridLayout::unitGrid(4, 4);
    // same cell: both offsets clamp to eps
    Eigen::Vector2d same = relativeGeometry(g, 5, 5, 1e-3);
    CHECK(same(0) == doctest::Approx(-6.907755278982137).epsilon(1e-12)); // log(1e-3)
    CHECK(same(1) == doctest::Approx(-6.907755278982137).epsilon(1e-12));

    // horizontally adjacent cells 0 and 1: |dv| = 1, |dt| clamps
    Eigen::Vector2d adj = relativeGeometry(g, 0, 1, 1e-3);
    CHECK(adj(0) == doctest::Approx(0.0).epsilon(1e-15)); // log(1/1)
    CHECK(adj(1) == doctest::Approx(-6.907755278982137).epsilon(1e-12));

    // two rows apart vertically: log 2 on the t component
    Eigen::Vector2d vert = relativeGeometry(g, 0, 8, 1e-3);
    CHECK(vert(0) == doctest::Approx(-6.907755278982137).epsilon(1e-12));
    CHECK(vert(1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // the relation is symmetric on a uniform grid
    CHECK(relativeGeometry(g, 3, 9, 1e-3) == relativeGeometry(g, 9, 3, 1e-3));
}

TEST_CASE("relativeGeometryFeatures rows follow k = i*HW + j") {
    GridLayout g = GridLayout::unitGrid(2, 2);
    Mat f = relativeGeometryFeatures(g, 1e-3);
    CHECK(f.rows() == 16);
    CHECK(f.cols() == 2);
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            Eigen::Vector2d r = relativeGeometry(g, i, j, 1e-3);
            CHECK(f(i * 4 + j, 0) == r(0));
            CHECK(f(i * 4 + j, 1) == r(1));
        }
    }
}

TEST_CASE("geometryMatrix is nonnegative with the right shape") {
    GridLayout g = GridLayout::unitGrid(3, 3);
    Rng rng(5);
    int dG = 8;
    GeometryParams params;
    Mat fc(2, dG), wg(dG, 1);
    for (int i = 0; i < fc.size(); ++i) fc.data()[i] = rng.normal();
    for (int i = 0; i < wg.size(); ++i) wg.data()[i] = rng.normal();
    params.fcWeight = Param("fc_w", fc);
    params.fcBias = Param("fc_b", Mat::Zero(1, dG));
    params.wG = Param("w_g", wg);

    Tape t;
    Mat gm = geometryMatrix(t, g, params, 1e-3).value();
    CHECK(gm.rows() == 9);
    CHECK(gm.cols() == 9);
    CHECK(gm.minCoeff() >= 0.0);

    // zero projection weights collapse the bias to zero
    GeometryParams zero;
    zero.fcWeight = Param("fc_w", fc);
    zero.fcBias = Param("fc_b", Mat::Zero(1, dG));
    zero.wG = Param("w_g", Mat::Zero(dG, 1));
    Tape t2;
    CHECK(geometryMatrix(t2, g, zero, 1e-3).value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("geometryMatrixFromFeatures agrees with geometryMatrix") {
    GridLayout g = GridLayout::unitGrid(2, 3);
    Rng rng(9);
    int dG = 6;
    GeometryParams params;
    Mat fc(2, dG), wg(dG, 1);
    for (int i = 0; i < fc.size(); ++i) fc.data()[i] = rng.normal();
    for (int i = 0; i < wg.size(); ++i) wg.data()[i] = rng.normal();
    params.fcWeight = Param("fc_w", fc);
    params.fcBias = Param("fc_b", Mat::Constant(1, dG, 0.1));
    params.wG = Param("w_g", wg);

    Tape t;
    Mat direct = geometryMatrix(t, g, params, 1e-3).value();
    Mat cached = geometryMatrixFromFeatures(t, t.input(relativeGeometryFeatures(g, 1e-3)),
                                            g.cellCount(), params)
                     .value();
    CHECK(direct == cached);
}

TEST_CASE("gradients flow through the geometry MLP") {
    GridLayout g = GridLayout::unitGrid(2, 2);
    Rng rng(13);
    int dG = 5;
    Mat fc(2, dG), wg(dG, 1);
    for (int i = 0; i < fc.size(); ++i) fc.data()[i] = rng.normal();
    // positive projection keeps both relus mostly active, away from kinks
    for (int i = 0; i < wg.size(); ++i) wg.data()[i] = std::abs(rng.normal()) + 0.5;
    GeometryParams params;
    params.fcWeight = Param("fc_w", fc);
    params.fcBias = Param("fc_b", Mat::Constant(1, dG, 0.7));
    params.wG = Param("w_g", wg);

    Param* ps[] = {&params.fcWeight, &params.fcBias, &params.wG};
    auto run = [&](bool withGrad) {
        Tape t;
        Var gm = geometryMatrix(t, g, params, 1e-3);
        Var loss = sumAll(mulElem(gm, gm));
        double v = loss.value()(0, 0);
        if (withGrad) t.backward(loss);
        return v;
    };
    CHECK(gradCheck(run, ps) < 1e-4);
}

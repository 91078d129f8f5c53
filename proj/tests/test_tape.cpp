#include <doctest.h>

#include <cmath>

#include "attrformer/tape.hpp"

using namespace attrformer;

namespace {

Mat mat22(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

} // namespace

TEST_CASE("matmul matches hand arithmetic") {
    Tape t;
    Mat a(2, 3), b(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    b << 7, 8, 9, 10, 11, 12;
    Mat y = matmul(t.input(a), t.input(b)).value();
    CHECK(y(0, 0) == 58.0);
    CHECK(y(0, 1) == 64.0);
    CHECK(y(1, 0) == 139.0);
    CHECK(y(1, 1) == 154.0);
}

TEST_CASE("elementwise ops compute expected values") {
    Tape t;
    Var a = t.input(mat22(1, 2, 3, 4));
    Var b = t.input(mat22(5, 6, 7, 8));
    CHECK(add(a, b).value() == mat22(6, 8, 10, 12));
    CHECK(sub(a, b).value() == mat22(-4, -4, -4, -4));
    CHECK(mulElem(a, b).value() == mat22(5, 12, 21, 32));
    CHECK(scale(a, -2.0).value() == mat22(-2, -4, -6, -8));
}

TEST_CASE("addRowVector broadcasts one row over all rows") {
    Tape t;
    Mat row(1, 2);
    row << 10, 20;
    Mat y = addRowVector(t.input(mat22(1, 2, 3, 4)), t.input(row)).value();
    CHECK(y == mat22(11, 22, 13, 24));

    // backward sums the row gradients
    Param p("row", row);
    Tape t2;
    Var loss = sumAll(addRowVector(t2.input(mat22(1, 2, 3, 4)), t2.param(p)));
    t2.backward(loss);
    CHECK(p.grad(0, 0) == 2.0);
    CHECK(p.grad(0, 1) == 2.0);
}

TEST_CASE("transpose and reshape keep entries in row-major order") {
    Tape t;
    Mat a(2, 3);
    a << 1, 2, 3, 4, 5, 6;
    Mat at = transpose(t.input(a)).value();
    CHECK(at.rows() == 3);
    CHECK(at(0, 1) == 4.0);
    CHECK(at(2, 0) == 3.0);

    Mat r = reshape(t.input(a), 3, 2).value();
    CHECK(r(0, 0) == 1.0); // row-major flattening: 1 2 / 3 4 / 5 6
    CHECK(r(0, 1) == 2.0);
    CHECK(r(1, 0) == 3.0);
    CHECK(r(2, 1) == 6.0);
    CHECK_THROWS_AS((void)reshape(t.input(a), 4, 2), DimensionError);
}

TEST_CASE("relu zeroes negatives and gates the gradient") {
    Param p("x", mat22(-1, 2, 0, -3));
    Tape t;
    Var y = relu(t.param(p));
    CHECK(y.value() == mat22(0, 2, 0, 0));
    t.backward(sumAll(y));
    // only the strictly positive entry passes gradient
    CHECK(p.grad == mat22(0, 1, 0, 0));
}

TEST_CASE("softmaxRows gives distributions and matches a hand case") {
    Tape t;
    Mat x(1, 3);
    x << 0, 1, 2;
    Mat y = softmaxRows(t.input(x)).value();
    CHECK(y(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(y(0, 1) == doctest::Approx(0.24472847105479764).epsilon(1e-12));
    CHECK(y(0, 2) == doctest::Approx(0.6652409557748219).epsilon(1e-12));
    CHECK(y.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));

    // invariant under a constant shift, even a huge one
    Mat shifted = x.array() + 1000.0;
    Mat y2 = softmaxRows(t.input(shifted)).value();
    CHECK((y - y2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(y2.allFinite());
}

TEST_CASE("logsumexpRows matches log(sum(exp)) and survives huge inputs") {
    Tape t;
    Mat x(2, 2);
    x << 1, 2, 1000, 1001;
    Mat y = logsumexpRows(t.input(x)).value();
    CHECK(y.rows() == 2);
    CHECK(y(0, 0) == doctest::Approx(2.3132616875182226).epsilon(1e-14));
    // = 1000 + log(1 + e)
    CHECK(y(1, 0) == doctest::Approx(1000.0 + 1.3132616875182226).epsilon(1e-14));

    // gradient of lse is the softmax of the row
    Param p("x", x.topRows(1));
    Tape t2;
    t2.backward(sumAll(logsumexpRows(t2.param(p))));
    CHECK(p.grad(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    CHECK(p.grad(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("reductions: rowSums, sumAll, rowwiseDot") {
    Tape t;
    Var a = t.input(mat22(1, 2, 3, 4));
    Var b = t.input(mat22(5, 6, 7, 8));
    Mat rs = rowSums(a).value();
    CHECK(rs(0, 0) == 3.0);
    CHECK(rs(1, 0) == 7.0);
    CHECK(sumAll(a).value()(0, 0) == 10.0);
    Mat rd = rowwiseDot(a, b).value();
    CHECK(rd(0, 0) == 17.0); // 1*5 + 2*6
    CHECK(rd(1, 0) == 53.0);
}

TEST_CASE("concatCols stitches blocks side by side and splits gradients back") {
    Param p1("a", mat22(1, 2, 3, 4));
    Param p2("b", Mat::Constant(2, 1, 9.0));
    Tape t;
    Var c = concatCols({t.param(p1), t.param(p2)});
    CHECK(c.cols() == 3);
    CHECK(c.value()(0, 2) == 9.0);
    CHECK(c.value()(1, 1) == 4.0);

    Mat w(3, 1);
    w << 1, 10, 100;
    t.backward(sumAll(matmul(c, t.input(w))));
    CHECK(p1.grad == mat22(1, 10, 1, 10));
    CHECK(p2.grad(0, 0) == 100.0);
    CHECK(p2.grad(1, 0) == 100.0);
}

TEST_CASE("dropout: identity when off, zero-or-rescaled when training") {
    Mat x = Mat::Constant(8, 8, 3.0);
    Rng rng(7);
    Tape t;
    Var in = t.input(x);
    CHECK(dropout(in, 0.0, rng, true).id == in.id);  // exact identity, no node
    CHECK(dropout(in, 0.5, rng, false).id == in.id); // eval mode

    Var d = dropout(in, 0.5, rng, true);
    bool sawZero = false, sawKept = false;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            double v = d.value()(i, j);
            CHECK((v == 0.0 || v == doctest::Approx(6.0))); // 3 / (1 - 0.5)
            (v == 0.0 ? sawZero : sawKept) = true;
        }
    }
    CHECK(sawZero);
    CHECK(sawKept);

    // same seed draws the same mask
    Rng r1(42), r2(42);
    Tape t2;
    Mat d1 = dropout(t2.input(x), 0.3, r1, true).value();
    Mat d2 = dropout(t2.input(x), 0.3, r2, true).value();
    CHECK(d1 == d2);

    CHECK_THROWS(dropout(in, 1.0, rng, true));
}

TEST_CASE("mse and sumSquares match hand values") {
    Tape t;
    Var a = t.input(mat22(1, 2, 3, 4));
    Var b = t.input(mat22(0, 0, 1, 1));
    CHECK(sumSquares(a, b).value()(0, 0) == 18.0);
    CHECK(mse(a, b).value()(0, 0) == 4.5);
}

TEST_CASE("layerNormRows standardizes each row") {
    Tape t;
    Mat x(2, 4);
    x << 1, 2, 3, 4, -10, 0, 10, 20;
    Mat y = layerNormRows(t.input(x)).value();
    for (Eigen::Index i = 0; i < 2; ++i) {
        CHECK(y.row(i).mean() == doctest::Approx(0.0).epsilon(1e-12));
        double var = (y.row(i).array() - y.row(i).mean()).square().sum() / 4.0;
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4)); // eps in the denominator
    }
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Param p("p", mat22(1, 2, 3, 4));
    Tape t;
    Var v = t.param(p);
    t.backward(sumAll(add(v, v)));
    CHECK(p.grad == mat22(2, 2, 2, 2));
}

TEST_CASE("gradCheck is near machine precision on a purely linear graph") {
    Rng rng(3);
    Mat a(2, 3), b(3, 2);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (int i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    Param pa("a", a), pb("b", b);
    Param* params[] = {&pa, &pb};
    auto run = [&](bool withGrad) {
        Tape t;
        Var loss = sumAll(matmul(t.param(pa), t.param(pb)));
        double v = loss.value()(0, 0);
        if (withGrad) t.backward(loss);
        return v;
    };
    CHECK(gradCheck(run, params) < 1e-8);
}

TEST_CASE("gradCheck passes on a composite nonlinear graph") {
    Rng rng(11);
    Mat w1(3, 4), w2(4, 2), x(2, 3);
    for (int i = 0; i < w1.size(); ++i) w1.data()[i] = rng.normal();
    for (int i = 0; i < w2.size(); ++i) w2.data()[i] = rng.normal();
    // keep activations away from the relu kink so finite differences are clean
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() + 3.0;
    Param p1("w1", w1), p2("w2", w2);
    Param* params[] = {&p1, &p2};
    auto run = [&](bool withGrad) {
        Tape t;
        Var h = relu(matmul(t.input(x), t.param(p1)));
        Var logits = matmul(h, t.param(p2));
        Var probs = softmaxRows(logits);
        Var lse = logsumexpRows(layerNormRows(logits));
        Var loss = add(sumAll(mulElem(probs, probs)), sumAll(lse));
        double v = loss.value()(0, 0);
        if (withGrad) t.backward(loss);
        return v;
    };
    CHECK(gradCheck(run, params) < 1e-6);
}

TEST_CASE("shape mismatches throw DimensionError") {
    Tape t;
    Var a = t.input(Mat::Zero(2, 3));
    Var b = t.input(Mat::Zero(2, 3));
    Var row = t.input(Mat::Zero(1, 2));
    CHECK_THROWS_AS((void)matmul(a, b), DimensionError);
    CHECK_THROWS_AS((void)add(a, t.input(Mat::Zero(3, 2))), DimensionError);
    CHECK_THROWS_AS((void)addRowVector(a, row), DimensionError);
    CHECK_THROWS_AS((void)rowwiseDot(a, t.input(Mat::Zero(3, 3))), DimensionError);
    CHECK_THROWS_AS((void)concatCols({a, t.input(Mat::Zero(3, 1))}), DimensionError);
    CHECK_THROWS_AS((void)mse(a, t.input(Mat::Zero(3, 2))), DimensionError);
}

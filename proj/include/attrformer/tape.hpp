#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attrformer/rng.hpp"

namespace attrformer {

/// Dense 64-bit matrix, row-major to match the on-disk layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A learnable weight matrix paired with its gradient accumulator.
struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param() = default;
    Param(std::string n, Mat v)
        : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zeroGrad() { grad.setZero(); }
};

class Tape;

/// Handle to one node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape over matrix-valued operations.
///
/// Every op records its output value plus a closure that routes the output
/// gradient to the parents. backward() seeds a 1x1 loss with 1 and replays
/// the closures in reverse creation order, accumulating into bound Params.
/// Values are immutable once recorded; a tape is built, differentiated and
/// discarded per step.
class Tape {
public:
    /// Leaf holding a constant; gradients stop here.
    Var input(Mat v);

    /// Leaf bound to an external Param; backward() adds into p.grad.
    Var param(Param& p);

    /// Record a node. `back` receives the node's output gradient.
    Var emplace(Mat value, std::function<void(Tape&, const Mat&)> back);

    /// Run reverse accumulation from a 1x1 loss node.
    void backward(Var loss);

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Mat& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Tape&, const Mat&)> back;
        Param* bound = nullptr;
    };
    std::vector<Node> nodes_;
};

// -- op free functions --------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mulElem(Var a, Var b);
Var scale(Var a, double c);
/// Adds a 1xC row vector to every row of a.
Var addRowVector(Var a, Var rowVec);
Var transpose(Var a);
Var relu(Var a);
/// Row-stable softmax; each output row is a distribution over the columns.
Var softmaxRows(Var a);
/// Nx1 column of log(sum(exp(row))), max-shifted for stability.
Var logsumexpRows(Var a);
/// Nx1 column of row sums.
Var rowSums(Var a);
/// 1x1 total sum of all entries.
Var sumAll(Var a);
/// Nx1 column of per-row dot products of two equally shaped matrices.
Var rowwiseDot(Var a, Var b);
/// Row-major reshape to rows x cols (entry count preserved).
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var concatCols(const std::vector<Var>& parts);
/// Zeroes entries with probability `rate` and scales survivors by 1/(1-rate)
/// while training; the identity in eval mode or at rate 0.
Var dropout(Var a, double rate, Rng& rng, bool training);
/// 1x1 mean of squared differences.
Var mse(Var a, Var b);
/// 1x1 sum of squared differences (squared L2 distance).
Var sumSquares(Var a, Var b);
/// Per-row standardization (zero mean, unit variance) without affine terms.
Var layerNormRows(Var a, double eps = 1e-6);

// -- gradient checking ---------------------------------------------------

/// Max relative error between analytic gradients and central differences.
///
/// `run(withGrad)` must rebuild the forward pass from the current Param
/// values, return the scalar loss, and populate every Param's grad when
/// withGrad is true. The function must be deterministic (dropout off).
double gradCheck(const std::function<double(bool withGrad)>& run,
                 std::span<Param* const> params, double epsilon = 1e-5);

} // namespace attrformer

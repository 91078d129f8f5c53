#pragma once

#include <span>
#include <vector>

#include "attrformer/tape.hpp"

namespace attrformer {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-class attribute signatures with the seen/unseen partition.
struct ClassAttributeMatrix {
    Mat z; // |C| x A
    std::vector<int> seenIds;
    std::vector<int> unseenIds;

    Eigen::Index classCount() const { return z.rows(); }
    Eigen::Index attributeCount() const { return z.cols(); }
    bool isUnseen(int classId) const;

    /// Checks the partition is disjoint and covers every class row.
    void validate() const;
};

/// Embedding matrix that maps attribute features into semantic space.
struct VsenParams {
    Param w; // dA x dModel
};

/// psi[a] = v_a . (W f_a): each attribute's own semantic vector scores its
/// own localized feature. Returns an A x 1 column.
Var embedPsi(Tape& t, Var f, Var vA, VsenParams& params);

/// Squared L2 distance between an attribute score vector and its target
/// signature (per sample; callers average over the batch).
Var lossAr(Var psi, Var zTrue);

/// Mean over the batch of the per-row squared L2 distance. psiBatch and
/// zBatch are n x A with matching rows.
Var lossArBatch(Var psiBatch, Var zBatch);

/// Cross-entropy over seen-class logits psi . z^c at the true label,
/// averaged over the batch. Labels must be seen class ids.
Var lossAce(Var psiBatch, std::span<const int> labels, const ClassAttributeMatrix& classes);

/// Self-calibration term: for every unseen class, the negative log of its
/// indicator-shifted probability over all classes, averaged over the batch.
/// The shift is +1 inside the exponent for unseen classes and -1 for seen.
Var lossSc(Var psiBatch, const ClassAttributeMatrix& classes);

struct LossWeights {
    double lambdaAr = 0.005;
    double lambdaSc = 0.3;
};

/// total = ace + lambdaAr * ar + lambdaSc * sc
Var lossTotal(Var ace, Var ar, Var sc, const LossWeights& weights);

/// Calibrated argmax over the candidate classes: score = psi . z^c +
/// gamma * (+1 unseen / -1 seen). Ties break to the smallest class id.
int predictClass(const Mat& psi, const ClassAttributeMatrix& classes,
                 std::span<const int> candidates, double gamma = 1.0);

} // namespace attrformer

#include "attrformer/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace attrformer {

bool ClassAttributeMatrix::isUnseen(int classId) const {
    return std::find(unseenIds.begin(), unseenIds.end(), classId) != unseenIds.end();
}

void ClassAttributeMatrix::validate() const {
    std::unordered_set<int> seen(seenIds.begin(), seenIds.end());
    std::unordered_set<int> unseen(unseenIds.begin(), unseenIds.end());
    for (int id : seenIds) {
        if (unseen.count(id) != 0) {
            throw ValidationError("class " + std::to_string(id) + " is both seen and unseen");
        }
    }
    if (static_cast<Eigen::Index>(seen.size() + unseen.size()) != z.rows()) {
        throw ValidationError("seen/unseen ids do not cover the " + std::to_string(z.rows()) +
                              " class rows exactly");
    }
    for (int id : seenIds) {
        if (id < 0 || id >= z.rows()) {
            throw ValidationError("seen class id " + std::to_string(id) + " out of range");
        }
    }
    for (int id : unseenIds) {
        if (id < 0 || id >= z.rows()) {
            throw ValidationError("unseen class id " + std::to_string(id) + " out of range");
        }
    }
}

Var embedPsi(Tape& t, Var f, Var vA, VsenParams& params) {
    if (f.rows() != vA.rows()) {
        throw DimensionError("embedPsi: feature rows " + std::to_string(f.rows()) +
                             " != attribute rows " + std::to_string(vA.rows()));
    }
    Var w = t.param(params.w);
    // F W^T is A x dA; pairing row a with v_a gives the diagonal of v_A W F.
    return rowwiseDot(vA, matmul(f, transpose(w)));
}

Var lossAr(Var psi, Var zTrue) { return sumSquares(psi, zTrue); }

Var lossArBatch(Var psiBatch, Var zBatch) {
    double n = static_cast<double>(psiBatch.rows());
    return scale(sumSquares(psiBatch, zBatch), 1.0 / n);
}

Var lossAce(Var psiBatch, std::span<const int> labels, const ClassAttributeMatrix& classes) {
    Eigen::Index n = psiBatch.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw DimensionError("lossAce: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " rows");
    }
    const auto& seen = classes.seenIds;
    Mat zSeenT(classes.attributeCount(), static_cast<Eigen::Index>(seen.size()));
    for (std::size_t c = 0; c < seen.size(); ++c) {
        zSeenT.col(static_cast<Eigen::Index>(c)) = classes.z.row(seen[c]).transpose();
    }
    Mat oneHot = Mat::Zero(n, static_cast<Eigen::Index>(seen.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = std::find(seen.begin(), seen.end(), labels[static_cast<std::size_t>(i)]);
        if (it == seen.end()) {
            throw ValidationError("lossAce: label " +
                                  std::to_string(labels[static_cast<std::size_t>(i)]) +
                                  " is not a seen class");
        }
        oneHot(i, static_cast<Eigen::Index>(it - seen.begin())) = 1.0;
    }
    Tape& t = *psiBatch.tape;
    Var logits = matmul(psiBatch, t.input(zSeenT)); // n x |Cs|
    Var trueLogit = rowSums(mulElem(logits, t.input(oneHot)));
    return scale(sumAll(sub(logsumexpRows(logits), trueLogit)), 1.0 / static_cast<double>(n));
}

Var lossSc(Var psiBatch, const ClassAttributeMatrix& classes) {
    if (classes.unseenIds.empty()) {
        throw ValidationError("lossSc: the unseen class set is empty");
    }
    Eigen::Index n = psiBatch.rows();
    Eigen::Index nc = classes.classCount();
    Mat indicator(1, nc);
    Mat unseenMask = Mat::Zero(n, nc);
    for (Eigen::Index c = 0; c < nc; ++c) {
        bool uns = classes.isUnseen(static_cast<int>(c));
        indicator(0, c) = uns ? 1.0 : -1.0;
        if (uns) {
            unseenMask.col(c).setOnes();
        }
    }
    Tape& t = *psiBatch.tape;
    Var logits = matmul(psiBatch, t.input(classes.z.transpose())); // n x |C|
    Var shifted = addRowVector(logits, t.input(indicator));
    double unseenCount = static_cast<double>(classes.unseenIds.size());
    Var lse = scale(sumAll(logsumexpRows(shifted)), unseenCount);
    Var unseenLogitSum = sumAll(mulElem(shifted, t.input(unseenMask)));
    return scale(sub(lse, unseenLogitSum), 1.0 / static_cast<double>(n));
}

Var lossTotal(Var ace, Var ar, Var sc, const LossWeights& weights) {
    return add(ace, add(scale(ar, weights.lambdaAr), scale(sc, weights.lambdaSc)));
}

int predictClass(const Mat& psi, const ClassAttributeMatrix& classes,
                 std::span<const int> candidates, double gamma) {
    if (candidates.empty()) {
        throw ValidationError("predictClass: empty candidate set");
    }
    if (psi.size() != classes.attributeCount()) {
        throw DimensionError("predictClass: psi has " + std::to_string(psi.size()) +
                             " scores for " + std::to_string(classes.attributeCount()) +
                             " attributes");
    }
    Eigen::Map<const Eigen::VectorXd> p(psi.data(), psi.size());
    int best = -1;
    double bestScore = 0.0;
    for (int c : candidates) {
        if (c < 0 || c >= classes.classCount()) {
            throw ValidationError("predictClass: candidate " + std::to_string(c) +
                                  " outside class range");
        }
        double score = classes.z.row(c).dot(p) + (classes.isUnseen(c) ? gamma : -gamma);
        if (best < 0 || score > bestScore || (score == bestScore && c < best)) {
            best = c;
            bestScore = score;
        }
    }
    return best;
}

} // namespace attrformer

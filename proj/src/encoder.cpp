#include "attrformer/encoder.hpp"

#include <cmath>

namespace attrformer {

Var embedInput(Tape& t, Var raw, EncoderParams& params, Rng& rng, bool training) {
    Var w = t.param(params.embedWeight);
    Var b = t.param(params.embedBias);
    Var u = relu(addRowVector(matmul(raw, w), b));
    return dropout(u, params.dropoutRate, rng, training);
}

EncodeResult encode(Tape& t, Var u, Var g, EncoderParams& params) {
    Eigen::Index hw = u.rows();
    if (g.rows() != hw || g.cols() != hw) {
        throw DimensionError("encode: geometry bias is " + std::to_string(g.rows()) + "x" +
                             std::to_string(g.cols()) + " but U has " + std::to_string(hw) +
                             " regions");
    }
    EncodeResult result{u, {}};
    for (EncoderLayerParams& layer : params.layers) {
        std::vector<Var> headOuts;
        headOuts.reserve(layer.heads.size());
        for (AttentionHeadParams& head : layer.heads) {
            Var q = matmul(result.output, t.param(head.wQ));
            Var k = matmul(result.output, t.param(head.wK));
            Var v = matmul(result.output, t.param(head.wV));
            double invScale = 1.0 / std::sqrt(static_cast<double>(head.wQ.value.cols()));
            Var logits = sub(scale(matmul(q, transpose(k)), invScale), g);
            Var attn = softmaxRows(logits);
            result.attention.push_back(attn);
            headOuts.push_back(matmul(attn, v));
        }
        Var zAug = headOuts.size() == 1 ? headOuts.front() : concatCols(headOuts);
        result.output = add(result.output, zAug);
    }
    return result;
}

EncodeResult bypassFa(Tape& t, Var u, EncoderParams& params) {
    Var zero = t.input(Mat::Zero(u.rows(), u.rows()));
    return encode(t, u, zero, params);
}

} // namespace attrformer

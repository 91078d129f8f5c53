#include "attrformer/decoder.hpp"

#include <cmath>

namespace attrformer {

DecodeResult decode(Tape& t, Var u, Var vA, DecoderParams& params) {
    DecodeResult result;
    Var queries = vA;
    for (DecoderLayerParams& layer : params.layers) {
        std::vector<Var> headOuts;
        headOuts.reserve(layer.heads.size());
        for (AttentionHeadParams& head : layer.heads) {
            Var q = matmul(queries, t.param(head.wQ));
            Var k = matmul(u, t.param(head.wK));
            Var v = matmul(u, t.param(head.wV));
            double invScale = 1.0 / std::sqrt(static_cast<double>(head.wQ.value.cols()));
            Var attn = softmaxRows(scale(matmul(q, transpose(k)), invScale));
            result.attention.push_back(attn);
            headOuts.push_back(matmul(attn, v));
        }
        Var concat = headOuts.size() == 1 ? headOuts.front() : concatCols(headOuts);
        Var attended = matmul(concat, t.param(layer.wO)); // A x dModel
        if (params.residual && queries.cols() == attended.cols()) {
            attended = layerNormRows(add(attended, queries));
        }
        Var hidden = relu(addRowVector(matmul(attended, t.param(layer.ffnW1)), t.param(layer.ffnB1)));
        Var out = addRowVector(matmul(hidden, t.param(layer.ffnW2)), t.param(layer.ffnB2));
        if (params.residual) {
            out = layerNormRows(add(out, attended));
        }
        result.features = out;
        queries = out;
    }
    return result;
}

Mat attributeAttention(const Mat& u, const Mat& vA, DecoderParams& params) {
    Tape t;
    DecodeResult r = decode(t, t.input(u), t.input(vA), params);
    return r.attention.front().value();
}

} // namespace attrformer

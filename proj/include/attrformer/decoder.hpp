#pragma once

#include <vector>

#include "attrformer/encoder.hpp"
#include "attrformer/tape.hpp"

namespace attrformer {

struct DecoderLayerParams {
    std::vector<AttentionHeadParams> heads; // wQ: queryDim x dK, wK/wV: dModel x dK
    Param wO;                               // (T*dK) x dModel
    Param ffnW1;                            // dModel x dFf
    Param ffnB1;                            // 1 x dFf
    Param ffnW2;                            // dFf x dModel
    Param ffnB2;                            // 1 x dModel
};

/// Cross-attention decoder that turns HW region features into one
/// locality-augmented feature per attribute. Queries come from the semantic
/// attribute matrix in the first layer and from the previous layer's output
/// afterwards; keys and values always come from the encoded regions.
struct DecoderParams {
    std::vector<DecoderLayerParams> layers;
    /// Off by default: the block is applied exactly as written. When set,
    /// adds the standard residual + row normalization where shapes permit.
    bool residual = false;
};

struct DecodeResult {
    Var features;               // A x dModel
    std::vector<Var> attention; // one A x HW map per (layer, head), layer-major
};

DecodeResult decode(Tape& t, Var u, Var vA, DecoderParams& params);

/// First-layer, first-head cross-attention rows (A x HW). Row a is the
/// spatial distribution of attribute a over the regions.
Mat attributeAttention(const Mat& u, const Mat& vA, DecoderParams& params);

} // namespace attrformer

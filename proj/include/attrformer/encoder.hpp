#pragma once

#include <vector>

#include "attrformer/tape.hpp"

namespace attrformer {

/// One attention head's projection weights.
struct AttentionHeadParams {
    Param wQ; // dModel x dK
    Param wK; // dModel x dK
    Param wV; // dModel x dV
};

struct EncoderLayerParams {
    std::vector<AttentionHeadParams> heads;
};

/// Input embedding plus the geometry-debiased self-attention stack.
///
/// The residual update requires each layer's concatenated value width to
/// equal dModel, so per-head wV is dModel x (dModel / heads).
struct EncoderParams {
    Param embedWeight; // dIn x dModel
    Param embedBias;   // 1 x dModel
    std::vector<EncoderLayerParams> layers;
    double dropoutRate = 0.1;
};

struct EncodeResult {
    Var output;                 // HW x dModel
    std::vector<Var> attention; // one HW x HW map per (layer, head), layer-major
};

/// U = dropout(relu(raw * embedWeight + embedBias)). Dropout is active only
/// while training.
Var embedInput(Tape& t, Var raw, EncoderParams& params, Rng& rng, bool training);

/// Self-attention with the geometry bias subtracted from the scaled logits,
/// followed by the residual update. `g` must be HW x HW.
EncodeResult encode(Tape& t, Var u, Var g, EncoderParams& params);

/// Ablation switch: encode with the geometry bias forced to zero.
EncodeResult bypassFa(Tape& t, Var u, EncoderParams& params);

} // namespace attrformer

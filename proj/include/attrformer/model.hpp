#pragma once

#include <filesystem>
#include <vector>

#include "attrformer/config.hpp"
#include "attrformer/decoder.hpp"
#include "attrformer/encoder.hpp"
#include "attrformer/geometry.hpp"
#include "attrformer/objectives.hpp"
#include "attrformer/rng.hpp"

namespace attrformer {

/// Every learnable tensor in one place. vA holds the semantic attribute
/// matrix; it joins the trainable set only when the config asks for it.
struct ModelParams {
    GeometryParams geometry;
    EncoderParams encoder;
    DecoderParams decoder;
    VsenParams vsen;
    Param vA; // A x dA
    bool trainVa = false;

    /// Every param in a fixed order (geometry, encoder, decoder, vsen, vA).
    std::vector<Param*> all();
    /// all() minus vA when it is frozen.
    std::vector<Param*> trainable();
};

/// Weight matrices drawn uniform in +-sqrt(6 / (fan_in + fan_out)), biases
/// zero. Draws happen in all() order so init is reproducible from the seed.
ModelParams initModel(const RunConfig& cfg, int dIn, const Mat& vAInit, Rng& rng);

/// Weights as one TZF1 file per param plus a model.json naming them.
void saveModel(const std::filesystem::path& dir, ModelParams& model);

/// Rebuilds the skeleton from the config, then restores every param from
/// the weight files, checking names and shapes.
ModelParams loadModel(const std::filesystem::path& dir, const RunConfig& cfg, int dIn, int attrs,
                      int dA);

/// One image through embed -> geometry-biased encode -> attribute decode ->
/// per-attribute semantic score. Ablation switches skip stages: without the
/// encoder the embedded grid feeds the decoder directly; with the decoder
/// off the grid features are mean-pooled into every attribute row.
struct ImageForward {
    Var psi;                           // A x 1
    std::vector<Var> encoderAttention; // empty when the encoder is skipped
    std::vector<Var> decoderAttention; // empty when the decoder is off
};

/// `g` is the shared geometry bias for this tape; pass nullptr when the
/// config skips the encoder or zeroes the bias.
ImageForward forwardImage(Tape& t, const Mat& features, const Var* g, ModelParams& model,
                          const RunConfig& cfg, Rng& rng, bool training);

/// Stacks per-image scores into an n x A batch matrix.
Var stackPsi(const std::vector<Var>& psis);

} // namespace attrformer

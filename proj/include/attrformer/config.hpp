#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace attrformer {

// Hyperparameters and switches for one run. JSON keys use snake_case field
// names; unknown keys are rejected so typos cannot silently fall back to
// defaults. d_k and d_ff of 0 mean "derive from d_model".
struct RunConfig {
    double lr = 1e-4;
    double momentum = 0.9;
    double weightDecay = 1e-4;
    int batchSize = 50;
    int epochs = 30;
    double lambdaAr = 0.005;
    double lambdaSc = 0.3;
    int dModel = 32;
    int dK = 0;   // 0 -> d_model
    int dG = 64;
    int dFf = 0;  // 0 -> 4 * d_model
    int heads = 1;
    int layers = 1;
    double dropoutRate = 0.1;
    double clampEps = 1e-3;
    double gamma = 1.0;
    std::uint64_t seed = 1;
    bool disableFae = false;      // skip the encoder, decode the embedded grid directly
    bool disableFa = false;       // encode with a zero geometry bias
    bool disableDec = false;      // mean-pool grid features instead of cross-attending
    bool trainVa = false;         // let the attribute vectors receive gradients
    bool decoderResidual = false; // residual + layer norm around decoder sublayers
    std::string datasetPath;
    std::string outputPath;

    int resolvedDk() const { return dK > 0 ? dK : dModel; }
    int resolvedDff() const { return dFf > 0 ? dFf : 4 * dModel; }
    void validate() const;
};

// Parses JSON text over the defaults. Throws ValidationError on unknown
// keys, wrong types, or out-of-range values. The `base` form layers the
// file's keys over an existing config (used for the env-var seed fallback).
RunConfig configFromJsonText(const std::string& text);
RunConfig configFromJsonText(const std::string& text, RunConfig base);
RunConfig loadConfig(const std::filesystem::path& path);
RunConfig loadConfig(const std::filesystem::path& path, RunConfig base);

std::string configToJsonText(const RunConfig& cfg);
// Persists the effective config (derived sizes resolved) so the run can be
// reproduced from the artifact directory alone.
void saveConfig(const std::filesystem::path& path, const RunConfig& cfg);

} // namespace attrformer

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attrformer/config.hpp"
#include "attrformer/dataset.hpp"
#include "attrformer/model.hpp"

namespace attrformer {

/// SGD with momentum and coupled weight decay:
///   v <- m*v + (grad + wd*param); param <- param - lr*v.
struct OptimizerState {
    double lr;
    double momentum;
    double weightDecay;
    std::vector<Mat> velocity; // one per param, zero-initialized

    OptimizerState(double lr, double momentum, double weightDecay,
                   std::span<Param* const> params);
};

/// Applies one update to every param and zeroes the grads. Aborts with the
/// param's name if its gradient is non-finite.
void sgdStep(std::span<Param* const> params, OptimizerState& opt);

/// Percentages. accCzsl restricts candidates to unseen classes; u/s/h come
/// from the calibrated all-class setting.
struct GzslMetrics {
    double accCzsl = 0.0;
    double u = 0.0;
    double s = 0.0;
    double h = 0.0;
};

/// 2us/(u+s), defined as 0 when u+s is 0.
double harmonicMean(double u, double s);

enum class EvalSetting { czsl, gzsl, both };

/// Top-1 accuracy per class, averaged over classes (never pooled over
/// samples). Throws when a split the setting needs is empty.
GzslMetrics evaluate(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg,
                     EvalSetting setting);

struct EpochStats {
    int epoch = 0; // 1-based
    double lossTotal = 0.0;
    double lossAce = 0.0;
    double lossAr = 0.0;
    double lossSc = 0.0;
    GzslMetrics metrics;
};

struct TrainResult {
    ModelParams model;
    std::vector<EpochStats> epochs;
};

/// Full training loop: shuffle, batch forward through every stage, combined
/// loss, backward, SGD step; evaluates both settings after each epoch.
/// Bit-deterministic given (dataset, config, seed).
TrainResult train(const ZslDataset& ds, const RunConfig& cfg);

/// CSV text: epoch,loss_total,loss_ace,loss_ar,loss_sc,acc,U,S,H.
std::string epochLogCsv(const std::vector<EpochStats>& epochs);
void writeEpochLog(const std::filesystem::path& path, const std::vector<EpochStats>& epochs);

/// Writes, per test image, the attribute attention (A x HW) and, when the
/// encoder ran, its self-attention (HW x HW) as TZF1 files, plus index.json
/// and an argmax.csv with one row per (image, attribute).
void dumpAttention(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg,
                   const std::filesystem::path& outDir);

/// Fraction of (test image, active attribute) pairs whose attribute
/// attention peaks at the cell the generator planted the attribute in.
double localizationAccuracy(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg);

} // namespace attrformer

#include "attrformer/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include <json.hpp>

#include "attrformer/tzf.hpp"

namespace attrformer {

OptimizerState::OptimizerState(double lr_, double momentum_, double weightDecay_,
                               std::span<Param* const> params)
    : lr(lr_), momentum(momentum_), weightDecay(weightDecay_) {
    velocity.reserve(params.size());
    for (Param* p : params) {
        velocity.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void sgdStep(std::span<Param* const> params, OptimizerState& opt) {
    if (params.size() != opt.velocity.size()) {
        throw DimensionError("sgdStep: " + std::to_string(params.size()) + " params but " +
                             std::to_string(opt.velocity.size()) + " velocity slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        if (!p.grad.allFinite()) {
            throw std::runtime_error("non-finite gradient in " + p.name + "; step aborted");
        }
        opt.velocity[i] = opt.momentum * opt.velocity[i] + (p.grad + opt.weightDecay * p.value);
        p.value -= opt.lr * opt.velocity[i];
        p.zeroGrad();
    }
}

double harmonicMean(double u, double s) {
    double sum = u + s;
    if (sum == 0.0) return 0.0;
    return 2.0 * u * s / sum;
}

namespace {

// psi for one image with no gradient bookkeeping kept afterwards.
Mat evalPsi(ModelParams& model, const Mat& features, const Mat& pairFeatures,
            const RunConfig& cfg) {
    Tape t;
    Rng noDropout(0); // eval never samples dropout
    const bool needG = !cfg.disableFae && !cfg.disableFa;
    Var g;
    if (needG) {
        g = geometryMatrixFromFeatures(t, t.input(pairFeatures),
                                       static_cast<Eigen::Index>(features.rows()),
                                       model.geometry);
    }
    ImageForward fw =
        forwardImage(t, features, needG ? &g : nullptr, model, cfg, noDropout, false);
    return fw.psi.value();
}

// Top-1 accuracy per class over `split`, averaged across `classIds`.
double perClassAccuracy(ModelParams& model, const std::vector<LabeledExample>& split,
                        const Mat& pairFeatures, const RunConfig& cfg,
                        const ClassAttributeMatrix& classes, std::span<const int> candidates,
                        const std::vector<int>& classIds) {
    std::vector<int> hits(classes.classCount(), 0);
    std::vector<int> totals(classes.classCount(), 0);
    for (const LabeledExample& ex : split) {
        Mat psi = evalPsi(model, ex.features, pairFeatures, cfg);
        int pred = predictClass(psi, classes, candidates, cfg.gamma);
        totals[ex.label] += 1;
        if (pred == ex.label) hits[ex.label] += 1;
    }
    double acc = 0.0;
    int counted = 0;
    for (int c : classIds) {
        if (totals[c] == 0) continue;
        acc += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
        counted += 1;
    }
    if (counted == 0) {
        throw ValidationError("no test examples for any of the requested classes");
    }
    return 100.0 * acc / static_cast<double>(counted);
}

} // namespace

GzslMetrics evaluate(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg,
                     EvalSetting setting) {
    GzslMetrics m;
    Mat pairFeatures;
    if (!cfg.disableFae && !cfg.disableFa) {
        pairFeatures = relativeGeometryFeatures(ds.layout, cfg.clampEps);
    }
    bool needCzsl = setting != EvalSetting::gzsl;
    bool needGzsl = setting != EvalSetting::czsl;
    if (needCzsl) {
        if (ds.testUnseen.empty()) {
            throw ValidationError("czsl evaluation needs a test_unseen split");
        }
        m.accCzsl = perClassAccuracy(model, ds.testUnseen, pairFeatures, cfg, ds.classes,
                                     ds.classes.unseenIds, ds.classes.unseenIds);
    }
    if (needGzsl) {
        if (ds.testUnseen.empty() || ds.testSeen.empty()) {
            throw ValidationError("gzsl evaluation needs both test splits");
        }
        std::vector<int> allIds(ds.classes.classCount());
        std::iota(allIds.begin(), allIds.end(), 0);
        m.u = perClassAccuracy(model, ds.testUnseen, pairFeatures, cfg, ds.classes, allIds,
                               ds.classes.unseenIds);
        m.s = perClassAccuracy(model, ds.testSeen, pairFeatures, cfg, ds.classes, allIds,
                               ds.classes.seenIds);
        m.h = harmonicMean(m.u, m.s);
    }
    return m;
}

TrainResult train(const ZslDataset& ds, const RunConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.train.empty()) {
        throw ValidationError("training needs a non-empty train split");
    }

    Rng rng(cfg.seed);
    TrainResult res{initModel(cfg, ds.featureDim(), ds.vA, rng), {}};
    std::vector<Param*> params = res.model.trainable();
    OptimizerState opt(cfg.lr, cfg.momentum, cfg.weightDecay, params);

    const bool needG = !cfg.disableFae && !cfg.disableFa;
    Mat pairFeatures;
    if (needG) {
        pairFeatures = relativeGeometryFeatures(ds.layout, cfg.clampEps);
    }
    Eigen::Index cells = ds.layout.cellCount();
    int n = static_cast<int>(ds.train.size());
    LossWeights weights{cfg.lambdaAr, cfg.lambdaSc};

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::vector<int>> batches = batchIndices(n, cfg.batchSize, rng);
        double sumTotal = 0.0, sumAce = 0.0, sumAr = 0.0, sumSc = 0.0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const std::vector<int>& batch = batches[b];
            Tape t;
            Var g;
            if (needG) {
                g = geometryMatrixFromFeatures(t, t.input(pairFeatures), cells,
                                               res.model.geometry);
            }

            std::vector<Var> psis;
            std::vector<int> labels;
            Mat zBatch(static_cast<Eigen::Index>(batch.size()), ds.classes.attributeCount());
            psis.reserve(batch.size());
            labels.reserve(batch.size());
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const LabeledExample& ex = ds.train[static_cast<std::size_t>(batch[k])];
                ImageForward fw =
                    forwardImage(t, ex.features, needG ? &g : nullptr, res.model, cfg, rng, true);
                psis.push_back(fw.psi);
                labels.push_back(ex.label);
                zBatch.row(static_cast<Eigen::Index>(k)) = ds.classes.z.row(ex.label);
            }

            Var psiBatch = stackPsi(psis);
            Var ace = lossAce(psiBatch, labels, ds.classes);
            Var ar = lossArBatch(psiBatch, t.input(zBatch));
            Var sc = lossSc(psiBatch, ds.classes);
            Var total = lossTotal(ace, ar, sc, weights);

            double lt = total.value()(0, 0);
            if (!std::isfinite(lt)) {
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(b));
            }
            t.backward(total);
            sgdStep(params, opt);

            double w = static_cast<double>(batch.size());
            sumTotal += w * lt;
            sumAce += w * ace.value()(0, 0);
            sumAr += w * ar.value()(0, 0);
            sumSc += w * sc.value()(0, 0);
        }

        EpochStats st;
        st.epoch = epoch;
        st.lossTotal = sumTotal / n;
        st.lossAce = sumAce / n;
        st.lossAr = sumAr / n;
        st.lossSc = sumSc / n;
        st.metrics = evaluate(res.model, ds, cfg, EvalSetting::both);
        res.epochs.push_back(st);
    }
    return res;
}

std::string epochLogCsv(const std::vector<EpochStats>& epochs) {
    std::string out = "epoch,loss_total,loss_ace,loss_ar,loss_sc,acc,U,S,H\n";
    char buf[256];
    for (const EpochStats& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.4f,%.4f,%.4f,%.4f\n",
                      e.epoch, e.lossTotal, e.lossAce, e.lossAr, e.lossSc, e.metrics.accCzsl,
                      e.metrics.u, e.metrics.s, e.metrics.h);
        out += buf;
    }
    return out;
}

void writeEpochLog(const std::filesystem::path& path, const std::vector<EpochStats>& epochs) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << epochLogCsv(epochs);
}

namespace {

struct AttentionMaps {
    Mat decoder;          // A x HW, final layer averaged over heads
    Mat encoder;          // HW x HW, first layer, first head; empty if skipped
};

AttentionMaps attentionFor(ModelParams& model, const Mat& features, const Mat& pairFeatures,
                           const RunConfig& cfg) {
    Tape t;
    Rng noDropout(0);
    const bool needG = !cfg.disableFae && !cfg.disableFa;
    Var g;
    if (needG) {
        g = geometryMatrixFromFeatures(t, t.input(pairFeatures),
                                       static_cast<Eigen::Index>(features.rows()),
                                       model.geometry);
    }
    ImageForward fw =
        forwardImage(t, features, needG ? &g : nullptr, model, cfg, noDropout, false);
    AttentionMaps maps;
    if (fw.decoderAttention.empty()) {
        throw ValidationError("the decoder is disabled; no attribute attention available");
    }
    // Maps are stored layer-major, one per (layer, head); summarize the
    // final layer by averaging its heads (still a row-stochastic matrix).
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t first = fw.decoderAttention.size() - heads;
    maps.decoder = fw.decoderAttention[first].value();
    for (std::size_t h = 1; h < heads; ++h) {
        maps.decoder += fw.decoderAttention[first + h].value();
    }
    maps.decoder /= static_cast<double>(heads);
    if (!fw.encoderAttention.empty()) {
        maps.encoder = fw.encoderAttention[0].value();
    }
    return maps;
}

void checkRowsSumToOne(const Mat& m, const std::string& what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).sum() - 1.0) > 1e-9) {
            throw ValidationError(what + ": attention row " + std::to_string(i) +
                                  " does not sum to 1");
        }
    }
}

} // namespace

void dumpAttention(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg,
                   const std::filesystem::path& outDir) {
    if (cfg.disableDec) {
        throw ValidationError("the decoder is disabled; nothing to dump");
    }
    std::filesystem::create_directories(outDir);
    Mat pairFeatures;
    if (!cfg.disableFae && !cfg.disableFa) {
        pairFeatures = relativeGeometryFeatures(ds.layout, cfg.clampEps);
    }

    nlohmann::json index;
    index["version"] = 1;
    nlohmann::json images = nlohmann::json::array();
    std::string csv = "image_id,attribute_id,argmax_cell,max_weight\n";

    int imageId = 0;
    char buf[160];
    auto dumpSplit = [&](const std::vector<LabeledExample>& split, const char* splitName) {
        for (const LabeledExample& ex : split) {
            AttentionMaps maps = attentionFor(model, ex.features, pairFeatures, cfg);
            checkRowsSumToOne(maps.decoder, "image " + std::to_string(imageId));

            std::snprintf(buf, sizeof(buf), "decoder_%05d.bin", imageId);
            std::string decFile = buf;
            writeTzf(outDir / decFile, maps.decoder);

            nlohmann::json entry = {{"image_id", imageId},
                                    {"split", splitName},
                                    {"label", ex.label},
                                    {"decoder_file", decFile}};
            if (maps.encoder.size() != 0) {
                checkRowsSumToOne(maps.encoder, "image " + std::to_string(imageId));
                std::snprintf(buf, sizeof(buf), "encoder_%05d.bin", imageId);
                std::string encFile = buf;
                writeTzf(outDir / encFile, maps.encoder);
                entry["encoder_file"] = encFile;
            }
            images.push_back(entry);

            for (Eigen::Index a = 0; a < maps.decoder.rows(); ++a) {
                Eigen::Index cell = 0;
                double best = maps.decoder.row(a).maxCoeff(&cell);
                std::snprintf(buf, sizeof(buf), "%d,%lld,%lld,%.10g\n", imageId,
                              static_cast<long long>(a), static_cast<long long>(cell), best);
                csv += buf;
            }
            imageId += 1;
        }
    };
    dumpSplit(ds.testSeen, "test_seen");
    dumpSplit(ds.testUnseen, "test_unseen");

    index["images"] = images;
    std::ofstream os(outDir / "index.json");
    if (!os) {
        throw IoError("cannot write " + (outDir / "index.json").string());
    }
    os << index.dump(2) << "\n";
    std::ofstream cs(outDir / "argmax.csv");
    if (!cs) {
        throw IoError("cannot write " + (outDir / "argmax.csv").string());
    }
    cs << csv;
}

double localizationAccuracy(ModelParams& model, const ZslDataset& ds, const RunConfig& cfg) {
    if (cfg.disableDec) {
        throw ValidationError("the decoder is disabled; no attribute attention to score");
    }
    if (ds.plantedCells.empty()) {
        throw ValidationError("dataset carries no planted-cell ground truth");
    }
    Mat pairFeatures;
    if (!cfg.disableFae && !cfg.disableFa) {
        pairFeatures = relativeGeometryFeatures(ds.layout, cfg.clampEps);
    }
    long long hits = 0;
    long long total = 0;
    for (const auto* split : {&ds.testSeen, &ds.testUnseen}) {
        for (const LabeledExample& ex : *split) {
            AttentionMaps maps = attentionFor(model, ex.features, pairFeatures, cfg);
            for (int a = 0; a < ds.attributeCount(); ++a) {
                if (ds.classes.z(ex.label, a) <= 0.0) continue;
                Eigen::Index cell = 0;
                maps.decoder.row(a).maxCoeff(&cell);
                total += 1;
                if (cell == ds.plantedCells[static_cast<std::size_t>(a)]) hits += 1;
            }
        }
    }
    if (total == 0) {
        throw ValidationError("no active (image, attribute) pairs to score");
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace attrformer

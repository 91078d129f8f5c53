#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "attrformer/config.hpp"
#include "attrformer/dataset.hpp"
#include "attrformer/model.hpp"
#include "attrformer/train.hpp"

namespace {

using namespace attrformer;

bool seedFromEnv(std::uint64_t& out) {
    const char* s = std::getenv("ATTRFORMER_SEED");
    if (s == nullptr || *s == '\0') return false;
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') {
        throw ValidationError(std::string("ATTRFORMER_SEED is not a number: ") + s);
    }
    out = v;
    return true;
}

std::string metricsLine(const GzslMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "acc=%.1f U=%.1f S=%.1f H=%.1f", m.accCzsl, m.u, m.s, m.h);
    return buf;
}

GzslMetrics trainAndWrite(const ZslDataset& ds, const RunConfig& cfg) {
    TrainResult res = train(ds, cfg);
    std::filesystem::path out = cfg.outputPath;
    std::filesystem::create_directories(out);
    saveConfig(out / "config.json", cfg);
    saveModel(out, res.model);
    writeEpochLog(out / "epochs.csv", res.epochs);
    if (!res.epochs.empty()) {
        return res.epochs.back().metrics;
    }
    return evaluate(res.model, ds, cfg, EvalSetting::both);
}

// Training config assembled from file, env seed and flags, in rising
// priority: defaults < ATTRFORMER_SEED < config file < command line.
struct TrainArgs {
    std::string configPath;
    std::string dataset;
    std::string out;
    std::uint64_t seed = 1;
    int epochs = 0;
    double lr = 0.0;
    double lambdaAr = 0.0;
    double lambdaSc = 0.0;
    int batchSize = 0;
    bool disableFae = false;
    bool disableFa = false;
    bool disableDec = false;

    CLI::Option* seedOpt = nullptr;
    CLI::Option* epochsOpt = nullptr;
    CLI::Option* lrOpt = nullptr;
    CLI::Option* lambdaArOpt = nullptr;
    CLI::Option* lambdaScOpt = nullptr;
    CLI::Option* batchOpt = nullptr;

    RunConfig resolve() const {
        RunConfig base;
        seedFromEnv(base.seed);
        RunConfig cfg = configPath.empty() ? base : loadConfig(configPath, base);
        if (!dataset.empty()) cfg.datasetPath = dataset;
        if (!out.empty()) cfg.outputPath = out;
        if (seedOpt->count() > 0) cfg.seed = seed;
        if (epochsOpt->count() > 0) cfg.epochs = epochs;
        if (lrOpt->count() > 0) cfg.lr = lr;
        if (lambdaArOpt->count() > 0) cfg.lambdaAr = lambdaAr;
        if (lambdaScOpt->count() > 0) cfg.lambdaSc = lambdaSc;
        if (batchOpt->count() > 0) cfg.batchSize = batchSize;
        if (disableFae) cfg.disableFae = true;
        if (disableFa) cfg.disableFa = true;
        if (disableDec) cfg.disableDec = true;
        cfg.validate();
        if (cfg.datasetPath.empty()) {
            throw ValidationError("no dataset: pass --dataset or set dataset_path in the config");
        }
        return cfg;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", configPath, "JSON config file");
        cmd->add_option("--dataset", dataset, "dataset directory");
        cmd->add_option("--out", out, "artifact output directory");
        seedOpt = cmd->add_option("--seed", seed, "RNG seed");
        epochsOpt = cmd->add_option("--epochs", epochs, "training epochs");
        lrOpt = cmd->add_option("--lr", lr, "learning rate");
        lambdaArOpt = cmd->add_option("--lambda-ar", lambdaAr, "regression loss weight");
        lambdaScOpt = cmd->add_option("--lambda-sc", lambdaSc, "calibration loss weight");
        batchOpt = cmd->add_option("--batch-size", batchSize, "batch size");
        cmd->add_flag("--disable-fae", disableFae, "skip the encoder");
        cmd->add_flag("--disable-fa", disableFa, "zero the geometry bias");
        cmd->add_flag("--disable-dec", disableDec, "mean-pool instead of decoding");
    }
};

int runGenerate(SyntheticSpec spec, bool seedGiven, const std::string& outDir) {
    if (!seedGiven) {
        seedFromEnv(spec.seed);
    }
    ZslDataset ds = generateSynthetic(spec);
    saveDataset(outDir, ds);
    std::cout << "wrote " << (ds.train.size() + ds.testSeen.size() + ds.testUnseen.size())
              << " examples to " << outDir << "\n";
    return 0;
}

int runTrain(const TrainArgs& args) {
    RunConfig cfg = args.resolve();
    if (cfg.outputPath.empty()) {
        throw ValidationError("no output dir: pass --out or set output_path in the config");
    }
    ZslDataset ds = loadDataset(cfg.datasetPath);
    GzslMetrics m = trainAndWrite(ds, cfg);
    std::cout << metricsLine(m) << "\n";
    return 0;
}

int runEval(const std::string& modelDir, const std::string& datasetDir,
            const std::string& setting) {
    RunConfig cfg = loadConfig(std::filesystem::path(modelDir) / "config.json");
    std::string dsPath = datasetDir.empty() ? cfg.datasetPath : datasetDir;
    if (dsPath.empty()) {
        throw ValidationError("no dataset: pass --dataset or train with dataset_path set");
    }
    ZslDataset ds = loadDataset(dsPath);
    ModelParams model = loadModel(modelDir, cfg, ds.featureDim(), ds.attributeCount(),
                                  static_cast<int>(ds.vA.cols()));

    char buf[128];
    if (setting == "czsl") {
        GzslMetrics m = evaluate(model, ds, cfg, EvalSetting::czsl);
        std::snprintf(buf, sizeof(buf), "acc=%.1f", m.accCzsl);
    } else if (setting == "gzsl") {
        GzslMetrics m = evaluate(model, ds, cfg, EvalSetting::gzsl);
        std::snprintf(buf, sizeof(buf), "U=%.1f S=%.1f H=%.1f", m.u, m.s, m.h);
    } else {
        GzslMetrics m = evaluate(model, ds, cfg, EvalSetting::both);
        std::snprintf(buf, sizeof(buf), "acc=%.1f U=%.1f S=%.1f H=%.1f", m.accCzsl, m.u, m.s,
                      m.h);
    }
    std::cout << buf << "\n";
    return 0;
}

int runDump(const std::string& modelDir, const std::string& datasetDir,
            const std::string& outDir) {
    RunConfig cfg = loadConfig(std::filesystem::path(modelDir) / "config.json");
    std::string dsPath = datasetDir.empty() ? cfg.datasetPath : datasetDir;
    if (dsPath.empty()) {
        throw ValidationError("no dataset: pass --dataset or train with dataset_path set");
    }
    ZslDataset ds = loadDataset(dsPath);
    ModelParams model = loadModel(modelDir, cfg, ds.featureDim(), ds.attributeCount(),
                                  static_cast<int>(ds.vA.cols()));
    dumpAttention(model, ds, cfg, outDir);
    std::cout << "wrote attention maps to " << outDir << "\n";
    return 0;
}

int runAblate(const TrainArgs& args, const std::string& which) {
    RunConfig full = args.resolve();
    RunConfig ablated = full;
    if (which == "no_fae") {
        ablated.disableFae = true;
    } else if (which == "no_fa") {
        ablated.disableFa = true;
    } else if (which == "no_dec") {
        ablated.disableDec = true;
    } else if (which == "no_sc") {
        ablated.lambdaSc = 0.0;
    } else if (which == "no_ar") {
        ablated.lambdaAr = 0.0;
    } else {
        throw ValidationError("unknown ablation '" + which + "'");
    }

    ZslDataset ds = loadDataset(full.datasetPath);
    TrainResult fullRun = train(ds, full);
    TrainResult ablatedRun = train(ds, ablated);
    GzslMetrics fm = fullRun.epochs.empty()
                         ? evaluate(fullRun.model, ds, full, EvalSetting::both)
                         : fullRun.epochs.back().metrics;
    GzslMetrics am = ablatedRun.epochs.empty()
                         ? evaluate(ablatedRun.model, ds, ablated, EvalSetting::both)
                         : ablatedRun.epochs.back().metrics;
    std::cout << "full " << metricsLine(fm) << "\n";
    std::cout << which << " " << metricsLine(am) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attribute-guided transformer for zero-shot learning"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
    SyntheticSpec spec;
    std::string genOut;
    gen->add_option("--out", genOut, "output directory")->required();
    gen->add_option("--n-seen", spec.nSeen, "seen classes");
    gen->add_option("--n-unseen", spec.nUnseen, "unseen classes");
    gen->add_option("--attributes", spec.attributes, "attribute count");
    gen->add_option("--grid-rows", spec.gridRows, "grid rows");
    gen->add_option("--grid-cols", spec.gridCols, "grid columns");
    gen->add_option("--d-in", spec.dIn, "raw feature width");
    gen->add_option("--d-a", spec.dA, "semantic vector width");
    gen->add_option("--per-class", spec.examplesPerClass, "examples per class");
    gen->add_option("--mu", spec.mu, "planted signal strength");
    gen->add_option("--sigma", spec.sigma, "noise level");
    auto* genSeed = gen->add_option("--seed", spec.seed, "RNG seed");

    auto* tr = app.add_subcommand("train", "train a model and write its artifacts");
    TrainArgs trainArgs;
    trainArgs.attach(tr);

    auto* ev = app.add_subcommand("eval", "evaluate a trained model");
    std::string evModel, evDataset, evSetting = "both";
    ev->add_option("--model", evModel, "model directory")->required();
    ev->add_option("--dataset", evDataset, "dataset directory (defaults to the training one)");
    ev->add_option("--setting", evSetting, "czsl, gzsl or both")
        ->check(CLI::IsMember({"czsl", "gzsl", "both"}));

    auto* dump = app.add_subcommand("dump-attention", "write attention maps for test images");
    std::string duModel, duDataset, duOut;
    dump->add_option("--model", duModel, "model directory")->required();
    dump->add_option("--dataset", duDataset, "dataset directory (defaults to the training one)");
    dump->add_option("--out", duOut, "output directory")->required();

    auto* ab = app.add_subcommand("ablate", "train full and ablated models, print both");
    TrainArgs ablateArgs;
    ablateArgs.attach(ab);
    std::string which;
    ab->add_option("--which", which, "no_fae, no_fa, no_dec, no_sc or no_ar")
        ->required()
        ->check(CLI::IsMember({"no_fae", "no_fa", "no_dec", "no_sc", "no_ar"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return runGenerate(spec, genSeed->count() > 0, genOut);
        if (tr->parsed()) return runTrain(trainArgs);
        if (ev->parsed()) return runEval(evModel, evDataset, evSetting);
        if (dump->parsed()) return runDump(duModel, duDataset, duOut);
        if (ab->parsed()) return runAblate(ablateArgs, which);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

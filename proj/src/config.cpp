#include "attrformer/config.hpp"

#include <fstream>

#include <json.hpp>

#include "attrformer/objectives.hpp"
#include "attrformer/tzf.hpp"

namespace attrformer {

namespace {

using nlohmann::json;

template <typename T>
void pick(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config key '") + key + "' has the wrong type");
    }
}

const char* const kKeys[] = {
    "lr",          "momentum",     "weight_decay", "batch_size",   "epochs",
    "lambda_ar",   "lambda_sc",    "d_model",      "d_k",          "d_g",
    "d_ff",        "heads",        "layers",       "dropout_rate", "clamp_eps",
    "gamma",       "seed",         "disable_fae",  "disable_fa",   "disable_dec",
    "train_vA",    "decoder_residual", "dataset_path", "output_path"};

} // namespace

void RunConfig::validate() const {
    auto bad = [](const std::string& what) { throw ValidationError("config: " + what); };
    if (!(lr > 0.0)) bad("lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) bad("momentum must be in [0, 1)");
    if (weightDecay < 0.0) bad("weight_decay must be non-negative");
    if (batchSize < 1) bad("batch_size must be >= 1");
    if (epochs < 0) bad("epochs must be >= 0");
    if (lambdaAr < 0.0 || lambdaSc < 0.0) bad("loss weights must be non-negative");
    if (dModel < 1 || dG < 1) bad("d_model and d_g must be >= 1");
    if (dK < 0 || dFf < 0) bad("d_k and d_ff must be >= 0 (0 derives from d_model)");
    if (heads < 1 || layers < 1) bad("heads and layers must be >= 1");
    if (dModel % heads != 0) bad("heads must divide d_model");
    if (dropoutRate < 0.0 || dropoutRate >= 1.0) bad("dropout_rate must be in [0, 1)");
    if (!(clampEps > 0.0)) bad("clamp_eps must be positive");
}

RunConfig configFromJsonText(const std::string& text) {
    return configFromJsonText(text, RunConfig{});
}

RunConfig configFromJsonText(const std::string& text, RunConfig base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("config must be a JSON object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : kKeys) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ValidationError("unknown config key '" + item.key() + "'");
        }
    }
    RunConfig c = base;
    pick(j, "lr", c.lr);
    pick(j, "momentum", c.momentum);
    pick(j, "weight_decay", c.weightDecay);
    pick(j, "batch_size", c.batchSize);
    pick(j, "epochs", c.epochs);
    pick(j, "lambda_ar", c.lambdaAr);
    pick(j, "lambda_sc", c.lambdaSc);
    pick(j, "d_model", c.dModel);
    pick(j, "d_k", c.dK);
    pick(j, "d_g", c.dG);
    pick(j, "d_ff", c.dFf);
    pick(j, "heads", c.heads);
    pick(j, "layers", c.layers);
    pick(j, "dropout_rate", c.dropoutRate);
    pick(j, "clamp_eps", c.clampEps);
    pick(j, "gamma", c.gamma);
    pick(j, "seed", c.seed);
    pick(j, "disable_fae", c.disableFae);
    pick(j, "disable_fa", c.disableFa);
    pick(j, "disable_dec", c.disableDec);
    pick(j, "train_vA", c.trainVa);
    pick(j, "decoder_residual", c.decoderResidual);
    pick(j, "dataset_path", c.datasetPath);
    pick(j, "output_path", c.outputPath);
    c.validate();
    return c;
}

RunConfig loadConfig(const std::filesystem::path& path) {
    return loadConfig(path, RunConfig{});
}

RunConfig loadConfig(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot open config " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return configFromJsonText(text, base);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string configToJsonText(const RunConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weightDecay;
    j["batch_size"] = cfg.batchSize;
    j["epochs"] = cfg.epochs;
    j["lambda_ar"] = cfg.lambdaAr;
    j["lambda_sc"] = cfg.lambdaSc;
    j["d_model"] = cfg.dModel;
    j["d_k"] = cfg.resolvedDk();
    j["d_g"] = cfg.dG;
    j["d_ff"] = cfg.resolvedDff();
    j["heads"] = cfg.heads;
    j["layers"] = cfg.layers;
    j["dropout_rate"] = cfg.dropoutRate;
    j["clamp_eps"] = cfg.clampEps;
    j["gamma"] = cfg.gamma;
    j["seed"] = cfg.seed;
    j["disable_fae"] = cfg.disableFae;
    j["disable_fa"] = cfg.disableFa;
    j["disable_dec"] = cfg.disableDec;
    j["train_vA"] = cfg.trainVa;
    j["decoder_residual"] = cfg.decoderResidual;
    j["dataset_path"] = cfg.datasetPath;
    j["output_path"] = cfg.outputPath;
    return j.dump(2) + "\n";
}

void saveConfig(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write config " + path.string());
    }
    os << configToJsonText(cfg);
}

} // namespace attrformer

#include "attrformer/model.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "attrformer/tzf.hpp"

namespace attrformer {

namespace {

Mat xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.uniform(-limit, limit);
        }
    }
    return m;
}

std::string weightFileName(const std::string& paramName) {
    std::string f = paramName;
    for (char& c : f) {
        if (c == '.') c = '_';
    }
    return f + ".bin";
}

} // namespace

std::vector<Param*> ModelParams::all() {
    std::vector<Param*> out = {&geometry.fcWeight, &geometry.fcBias, &geometry.wG,
                               &encoder.embedWeight, &encoder.embedBias};
    for (EncoderLayerParams& layer : encoder.layers) {
        for (AttentionHeadParams& h : layer.heads) {
            out.push_back(&h.wQ);
            out.push_back(&h.wK);
            out.push_back(&h.wV);
        }
    }
    for (DecoderLayerParams& layer : decoder.layers) {
        for (AttentionHeadParams& h : layer.heads) {
            out.push_back(&h.wQ);
            out.push_back(&h.wK);
            out.push_back(&h.wV);
        }
        out.push_back(&layer.wO);
        out.push_back(&layer.ffnW1);
        out.push_back(&layer.ffnB1);
        out.push_back(&layer.ffnW2);
        out.push_back(&layer.ffnB2);
    }
    out.push_back(&vsen.w);
    out.push_back(&vA);
    return out;
}

std::vector<Param*> ModelParams::trainable() {
    std::vector<Param*> out = all();
    if (!trainVa) {
        out.pop_back(); // vA is last in all()
    }
    return out;
}

ModelParams initModel(const RunConfig& cfg, int dIn, const Mat& vAInit, Rng& rng) {
    cfg.validate();
    if (dIn < 1 || vAInit.rows() < 1 || vAInit.cols() < 1) {
        throw ValidationError("initModel: empty input or attribute dimensions");
    }
    int dModel = cfg.dModel;
    int dK = cfg.resolvedDk();
    int dFf = cfg.resolvedDff();
    int dA = static_cast<int>(vAInit.cols());
    int dV = dModel / cfg.heads; // concatenated heads must restore dModel

    ModelParams m;
    m.trainVa = cfg.trainVa;

    m.geometry.fcWeight = Param("geometry.fc_weight", xavier(2, cfg.dG, rng));
    m.geometry.fcBias = Param("geometry.fc_bias", Mat::Zero(1, cfg.dG));
    m.geometry.wG = Param("geometry.w_g", xavier(cfg.dG, 1, rng));

    m.encoder.embedWeight = Param("encoder.embed_weight", xavier(dIn, dModel, rng));
    m.encoder.embedBias = Param("encoder.embed_bias", Mat::Zero(1, dModel));
    m.encoder.dropoutRate = cfg.dropoutRate;
    for (int l = 0; l < cfg.layers; ++l) {
        EncoderLayerParams layer;
        for (int h = 0; h < cfg.heads; ++h) {
            std::string base = "encoder.l" + std::to_string(l) + ".h" + std::to_string(h);
            AttentionHeadParams head;
            head.wQ = Param(base + ".w_q", xavier(dModel, dK, rng));
            head.wK = Param(base + ".w_k", xavier(dModel, dK, rng));
            head.wV = Param(base + ".w_v", xavier(dModel, dV, rng));
            layer.heads.push_back(std::move(head));
        }
        m.encoder.layers.push_back(std::move(layer));
    }

    m.decoder.residual = cfg.decoderResidual;
    for (int l = 0; l < cfg.layers; ++l) {
        DecoderLayerParams layer;
        int queryDim = l == 0 ? dA : dModel;
        for (int h = 0; h < cfg.heads; ++h) {
            std::string base = "decoder.l" + std::to_string(l) + ".h" + std::to_string(h);
            AttentionHeadParams head;
            head.wQ = Param(base + ".w_q", xavier(queryDim, dK, rng));
            head.wK = Param(base + ".w_k", xavier(dModel, dK, rng));
            head.wV = Param(base + ".w_v", xavier(dModel, dK, rng));
            layer.heads.push_back(std::move(head));
        }
        std::string base = "decoder.l" + std::to_string(l);
        layer.wO = Param(base + ".w_o", xavier(cfg.heads * dK, dModel, rng));
        layer.ffnW1 = Param(base + ".ffn_w1", xavier(dModel, dFf, rng));
        layer.ffnB1 = Param(base + ".ffn_b1", Mat::Zero(1, dFf));
        layer.ffnW2 = Param(base + ".ffn_w2", xavier(dFf, dModel, rng));
        layer.ffnB2 = Param(base + ".ffn_b2", Mat::Zero(1, dModel));
        m.decoder.layers.push_back(std::move(layer));
    }

    m.vsen.w = Param("vsen.w", xavier(dA, dModel, rng));
    m.vA = Param("vA", vAInit);
    return m;
}

void saveModel(const std::filesystem::path& dir, ModelParams& model) {
    std::filesystem::create_directories(dir / "weights");
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["train_vA"] = model.trainVa;
    nlohmann::json list = nlohmann::json::array();
    for (Param* p : model.all()) {
        std::string file = weightFileName(p->name);
        writeTzf(dir / "weights" / file, p->value);
        list.push_back({{"name", p->name},
                        {"file", "weights/" + file},
                        {"rows", p->value.rows()},
                        {"cols", p->value.cols()}});
    }
    manifest["params"] = list;
    std::ofstream os(dir / "model.json");
    if (!os) {
        throw IoError("cannot write " + (dir / "model.json").string());
    }
    os << manifest.dump(2) << "\n";
}

ModelParams loadModel(const std::filesystem::path& dir, const RunConfig& cfg, int dIn, int attrs,
                      int dA) {
    std::ifstream is(dir / "model.json");
    if (!is) {
        throw IoError("missing model manifest: " + (dir / "model.json").string());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError((dir / "model.json").string() + " is not valid JSON: " + e.what());
    }

    Rng rng(0); // shapes only; every value is overwritten below
    ModelParams m = initModel(cfg, dIn, Mat::Zero(attrs, dA), rng);

    std::unordered_map<std::string, std::string> files;
    try {
        for (const nlohmann::json& e : manifest.at("params")) {
            files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError((dir / "model.json").string() + ": " + e.what());
    }

    for (Param* p : m.all()) {
        auto it = files.find(p->name);
        if (it == files.end()) {
            throw ValidationError("model.json lists no weights for param " + p->name);
        }
        Mat w = readTzf(dir / it->second);
        if (w.rows() != p->value.rows() || w.cols() != p->value.cols()) {
            throw ValidationError("param " + p->name + " is " + std::to_string(w.rows()) + "x" +
                                  std::to_string(w.cols()) + " on disk but the config implies " +
                                  std::to_string(p->value.rows()) + "x" +
                                  std::to_string(p->value.cols()));
        }
        p->value = std::move(w);
        files.erase(it);
    }
    if (!files.empty()) {
        throw ValidationError("model.json lists unknown param " + files.begin()->first);
    }
    return m;
}

ImageForward forwardImage(Tape& t, const Mat& features, const Var* g, ModelParams& model,
                          const RunConfig& cfg, Rng& rng, bool training) {
    ImageForward out;
    Var raw = t.input(features);
    Var u = embedInput(t, raw, model.encoder, rng, training);

    if (!cfg.disableFae) {
        EncodeResult enc;
        if (cfg.disableFa) {
            enc = bypassFa(t, u, model.encoder);
        } else {
            if (g == nullptr) {
                throw ValidationError("forwardImage: geometry bias required but not provided");
            }
            enc = encode(t, u, *g, model.encoder);
        }
        u = enc.output;
        out.encoderAttention = std::move(enc.attention);
    }

    Var vA = model.trainVa ? t.param(model.vA) : t.input(model.vA.value);
    Var f;
    if (cfg.disableDec) {
        // Mean over the regions, copied to one row per attribute.
        Eigen::Index hw = u.rows();
        Mat pool = Mat::Constant(model.vA.value.rows(), hw, 1.0 / static_cast<double>(hw));
        f = matmul(t.input(pool), u);
    } else {
        DecodeResult dec = decode(t, u, vA, model.decoder);
        f = dec.features;
        out.decoderAttention = std::move(dec.attention);
    }

    out.psi = embedPsi(t, f, vA, model.vsen);
    return out;
}

Var stackPsi(const std::vector<Var>& psis) {
    if (psis.empty()) {
        throw ValidationError("stackPsi: empty batch");
    }
    return transpose(concatCols(psis));
}

} // namespace attrformer

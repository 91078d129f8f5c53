#include "attrformer/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include <json.hpp>

#include "attrformer/tzf.hpp"

namespace attrformer {

namespace {

using nlohmann::json;

void checkSplit(const std::vector<LabeledExample>& split, const char* name,
                const std::vector<int>& allowed, Eigen::Index cells, Eigen::Index dIn) {
    std::unordered_set<int> ok(allowed.begin(), allowed.end());
    for (const LabeledExample& ex : split) {
        if (ok.count(ex.label) == 0) {
            throw ValidationError(std::string(name) + " split contains class " +
                                  std::to_string(ex.label) + " outside its allowed ids");
        }
        if (ex.features.rows() != cells || ex.features.cols() != dIn) {
            throw ValidationError(std::string(name) + " split has a " +
                                  std::to_string(ex.features.rows()) + "x" +
                                  std::to_string(ex.features.cols()) + " feature grid, expected " +
                                  std::to_string(cells) + "x" + std::to_string(dIn));
        }
        if (!ex.features.allFinite()) {
            throw ValidationError(std::string(name) + " split contains non-finite features");
        }
    }
}

void checkCoverage(const std::vector<LabeledExample>& split, const char* name,
                   const std::vector<int>& ids) {
    std::unordered_set<int> present;
    for (const LabeledExample& ex : split) {
        present.insert(ex.label);
    }
    for (int id : ids) {
        if (present.count(id) == 0) {
            throw ValidationError("class " + std::to_string(id) + " has no example in the " +
                                  name + " split");
        }
    }
}

// Random unit rows, mutually orthogonal while the dimension allows it
// (Gram-Schmidt over Gaussian draws). Orthogonality keeps per-attribute
// signals from leaking into each other's readouts, which matters a lot at
// these small sizes; once rows exceed cols the extra rows are just unit.
Mat orthonormalRows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double norm = 0.0;
        do {
            for (Eigen::Index j = 0; j < cols; ++j) {
                m(i, j) = rng.normal();
            }
            // Only the first `cols` rows can be mutually orthogonal; later
            // rows would project to zero, so they stay as plain unit draws.
            for (Eigen::Index k = 0; i < cols && k < i; ++k) {
                m.row(i) -= m.row(i).dot(m.row(k)) * m.row(k);
            }
            norm = m.row(i).norm();
        } while (norm < 1e-6);
        m.row(i) /= norm;
    }
    return m;
}

} // namespace

int ZslDataset::featureDim() const {
    if (!train.empty()) return static_cast<int>(train[0].features.cols());
    if (!testSeen.empty()) return static_cast<int>(testSeen[0].features.cols());
    if (!testUnseen.empty()) return static_cast<int>(testUnseen[0].features.cols());
    return 0;
}

void ZslDataset::validate() const {
    classes.validate();
    Eigen::Index a = classes.attributeCount();
    if (vA.rows() != a) {
        throw ValidationError("attribute vectors: " + std::to_string(vA.rows()) + " rows for " +
                              std::to_string(a) + " attributes");
    }
    if (!vA.allFinite() || !classes.z.allFinite()) {
        throw ValidationError("non-finite attribute data");
    }
    Eigen::Index cells = layout.cellCount();
    if (cells < 1) {
        throw ValidationError("grid has no cells");
    }
    Eigen::Index dIn = featureDim();
    checkSplit(train, "train", classes.seenIds, cells, dIn);
    checkSplit(testSeen, "test_seen", classes.seenIds, cells, dIn);
    checkSplit(testUnseen, "test_unseen", classes.unseenIds, cells, dIn);
    checkCoverage(testSeen, "test_seen", classes.seenIds);
    checkCoverage(testUnseen, "test_unseen", classes.unseenIds);
    if (!plantedCells.empty()) {
        if (static_cast<Eigen::Index>(plantedCells.size()) != a) {
            throw ValidationError("planted cell list length != attribute count");
        }
        for (int cell : plantedCells) {
            if (cell < 0 || cell >= cells) {
                throw ValidationError("planted cell " + std::to_string(cell) + " outside grid");
            }
        }
    }
}

ZslDataset generateSynthetic(const SyntheticSpec& spec) {
    if (spec.nSeen < 2) {
        throw ValidationError("need at least 2 seen classes");
    }
    if (spec.nUnseen < 1) {
        throw ValidationError("need at least 1 unseen class");
    }
    int cells = spec.gridRows * spec.gridCols;
    if (spec.attributes < 1 || spec.attributes > cells) {
        throw ValidationError("attribute count " + std::to_string(spec.attributes) +
                              " must be in [1, " + std::to_string(cells) +
                              "] so each attribute gets its own cell");
    }
    if (spec.dIn < 1 || spec.dA < 1 || spec.examplesPerClass < 1 || spec.gridRows < 1 ||
        spec.gridCols < 1) {
        throw ValidationError("synthetic sizes must be positive");
    }
    if (spec.sigma < 0.0) {
        throw ValidationError("noise sigma must be non-negative");
    }

    Rng rng(spec.seed);
    int nClasses = spec.nSeen + spec.nUnseen;

    ZslDataset ds;
    ds.layout = GridLayout::unitGrid(spec.gridRows, spec.gridCols);

    // Each attribute claims a distinct cell.
    std::vector<int> perm(cells);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    ds.plantedCells.assign(perm.begin(), perm.begin() + spec.attributes);

    Mat u = orthonormalRows(spec.attributes, spec.dIn, rng);
    // Snapped to the on-disk 32-bit grid like the features, so a loaded
    // copy trains bit-identically to the in-memory original.
    ds.vA = quantizeToFloat(orthonormalRows(spec.attributes, spec.dA, rng));

    // Distinct half-active binary signatures. Seen classes draw theirs at
    // random; unseen classes then take the novel combinations that lie
    // closest to the span of the seen signatures, so knowledge learned on
    // seen classes actually reaches them (pure extrapolation directions are
    // unlearnable from the training split no matter the model).
    int active = std::max(1, spec.attributes / 2);
    double combos = 1.0;
    for (int i = 0; i < active; ++i) {
        combos *= static_cast<double>(spec.attributes - i) / static_cast<double>(i + 1);
    }
    if (combos < static_cast<double>(nClasses)) {
        throw ValidationError("only " + std::to_string(static_cast<long long>(combos)) +
                              " distinct signatures available for " + std::to_string(nClasses) +
                              " classes");
    }
    std::set<std::vector<int>> used;
    ds.classes.z = Mat::Zero(nClasses, spec.attributes);
    for (int c = 0; c < spec.nSeen; ++c) {
        std::vector<int> picks;
        do {
            std::vector<int> pool(spec.attributes);
            std::iota(pool.begin(), pool.end(), 0);
            rng.shuffle(pool);
            picks.assign(pool.begin(), pool.begin() + active);
            std::sort(picks.begin(), picks.end());
        } while (!used.insert(picks).second);
        for (int a : picks) {
            ds.classes.z(c, a) = 1.0;
        }
    }
    {
        Mat seenZ = ds.classes.z.topRows(spec.nSeen);
        auto spanResidual = [&](const Mat& v) {
            Mat coef = seenZ.transpose().colPivHouseholderQr().solve(v.transpose());
            return (seenZ.transpose() * coef - v.transpose()).norm();
        };
        // Enumerate every k-active signature in lexicographic order and keep
        // the unused ones closest to the seen span (ties resolved by order).
        std::vector<int> comb(active);
        std::iota(comb.begin(), comb.end(), 0);
        std::vector<std::pair<double, std::vector<int>>> candidates;
        for (;;) {
            if (used.count(comb) == 0) {
                Mat v = Mat::Zero(1, spec.attributes);
                for (int a : comb) v(0, a) = 1.0;
                candidates.emplace_back(spanResidual(v), comb);
            }
            int i = active - 1;
            while (i >= 0 && comb[i] == spec.attributes - active + i) --i;
            if (i < 0) break;
            ++comb[i];
            for (int j = i + 1; j < active; ++j) comb[j] = comb[j - 1] + 1;
        }
        if (candidates.size() < static_cast<std::size_t>(spec.nUnseen)) {
            throw ValidationError("not enough novel signatures for the unseen classes");
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (int c = 0; c < spec.nUnseen; ++c) {
            for (int a : candidates[c].second) {
                ds.classes.z(spec.nSeen + c, a) = 1.0;
            }
        }
    }
    for (int c = 0; c < spec.nSeen; ++c) ds.classes.seenIds.push_back(c);
    for (int c = spec.nSeen; c < nClasses; ++c) ds.classes.unseenIds.push_back(c);

    auto makeExample = [&](int classId) {
        Mat f(cells, spec.dIn);
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            for (Eigen::Index j = 0; j < f.cols(); ++j) {
                f(i, j) = spec.sigma * rng.normal();
            }
        }
        for (int a = 0; a < spec.attributes; ++a) {
            f.row(ds.plantedCells[a]) += spec.mu * ds.classes.z(classId, a) * u.row(a);
        }
        // Snap to the 32-bit grid the on-disk format uses, so save/load
        // reproduces the dataset exactly.
        return LabeledExample{quantizeToFloat(f), classId};
    };

    int testPerSeen = std::max(1, spec.examplesPerClass / 5);
    for (int c : ds.classes.seenIds) {
        for (int i = 0; i < spec.examplesPerClass; ++i) ds.train.push_back(makeExample(c));
        for (int i = 0; i < testPerSeen; ++i) ds.testSeen.push_back(makeExample(c));
    }
    for (int c : ds.classes.unseenIds) {
        for (int i = 0; i < spec.examplesPerClass; ++i) ds.testUnseen.push_back(makeExample(c));
    }

    ds.validate();
    return ds;
}

namespace {

json splitToJson(const std::filesystem::path& dir, const std::string& name,
                 const std::vector<LabeledExample>& split) {
    json arr = json::array();
    for (std::size_t i = 0; i < split.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "features/%s_%05zu.bin", name.c_str(), i);
        writeTzf(dir / buf, split[i].features);
        arr.push_back({{"feature_file", std::string(buf)}, {"label", split[i].label}});
    }
    return arr;
}

std::vector<LabeledExample> splitFromJson(const std::filesystem::path& dir, const json& arr,
                                          const std::string& name, int nClasses) {
    if (!arr.is_array()) {
        throw ValidationError("manifest split '" + name + "' is not a list");
    }
    std::vector<LabeledExample> split;
    split.reserve(arr.size());
    for (const json& e : arr) {
        std::string file = e.at("feature_file").get<std::string>();
        int label = e.at("label").get<int>();
        if (label < 0 || label >= nClasses) {
            throw ValidationError("label " + std::to_string(label) + " for " + file +
                                  " is outside the " + std::to_string(nClasses) + " classes");
        }
        split.push_back({readTzf(dir / file), label});
    }
    return split;
}

} // namespace

void saveDataset(const std::filesystem::path& dir, const ZslDataset& ds) {
    std::filesystem::create_directories(dir / "features");
    writeTzf(dir / "Z.bin", ds.classes.z);
    writeTzf(dir / "vA.bin", ds.vA);

    json m;
    m["version"] = 1;
    m["n_classes"] = static_cast<int>(ds.classes.classCount());
    m["n_seen"] = static_cast<int>(ds.classes.seenIds.size());
    m["A"] = ds.attributeCount();
    m["grid_rows"] = ds.layout.nRows;
    m["grid_cols"] = ds.layout.nCols;
    m["d_in"] = ds.featureDim();
    m["d_a"] = static_cast<int>(ds.vA.cols());
    m["seen_ids"] = ds.classes.seenIds;
    m["splits"] = {{"train", splitToJson(dir, "train", ds.train)},
                   {"test_seen", splitToJson(dir, "test_seen", ds.testSeen)},
                   {"test_unseen", splitToJson(dir, "test_unseen", ds.testUnseen)}};

    std::ofstream os(dir / "manifest");
    if (!os) {
        throw IoError("cannot write " + (dir / "manifest").string());
    }
    os << m.dump(2) << "\n";

    if (!ds.plantedCells.empty()) {
        json p;
        p["cells"] = ds.plantedCells;
        std::ofstream ps(dir / "planted.json");
        if (!ps) {
            throw IoError("cannot write " + (dir / "planted.json").string());
        }
        ps << p.dump(2) << "\n";
    }
}

ZslDataset loadDataset(const std::filesystem::path& dir) {
    std::filesystem::path manifestPath = dir / "manifest";
    std::ifstream is(manifestPath);
    if (!is) {
        throw IoError("missing manifest: " + manifestPath.string());
    }
    json m;
    try {
        m = json::parse(is);
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + manifestPath.string() + " is not valid JSON: " +
                              e.what());
    }

    ZslDataset ds;
    try {
        if (m.at("version").get<int>() != 1) {
            throw ValidationError("unsupported dataset version " + m.at("version").dump());
        }
        int nClasses = m.at("n_classes").get<int>();
        int nSeen = m.at("n_seen").get<int>();
        int attrs = m.at("A").get<int>();
        int gridRows = m.at("grid_rows").get<int>();
        int gridCols = m.at("grid_cols").get<int>();
        int dIn = m.at("d_in").get<int>();
        int dA = m.at("d_a").get<int>();
        if (nClasses < 1 || nSeen < 1 || nSeen >= nClasses || attrs < 1 || gridRows < 1 ||
            gridCols < 1 || dIn < 1 || dA < 1) {
            throw ValidationError("manifest sizes are inconsistent in " + manifestPath.string());
        }

        ds.layout = GridLayout::unitGrid(gridRows, gridCols);
        ds.classes.z = readTzf(dir / "Z.bin");
        if (ds.classes.z.rows() != nClasses || ds.classes.z.cols() != attrs) {
            throw ValidationError("Z.bin is " + std::to_string(ds.classes.z.rows()) + "x" +
                                  std::to_string(ds.classes.z.cols()) + " but manifest declares " +
                                  std::to_string(nClasses) + " classes x " +
                                  std::to_string(attrs) + " attributes");
        }
        ds.vA = readTzf(dir / "vA.bin");
        if (ds.vA.rows() != attrs || ds.vA.cols() != dA) {
            throw ValidationError("vA.bin is " + std::to_string(ds.vA.rows()) + "x" +
                                  std::to_string(ds.vA.cols()) + " but manifest declares " +
                                  std::to_string(attrs) + " attributes x " + std::to_string(dA));
        }

        std::vector<int> seenIds = m.at("seen_ids").get<std::vector<int>>();
        if (static_cast<int>(seenIds.size()) != nSeen) {
            throw ValidationError("seen_ids length != n_seen in " + manifestPath.string());
        }
        std::unordered_set<int> seenSet(seenIds.begin(), seenIds.end());
        if (seenSet.size() != seenIds.size()) {
            throw ValidationError("duplicate seen_ids in " + manifestPath.string());
        }
        ds.classes.seenIds = seenIds;
        for (int c = 0; c < nClasses; ++c) {
            if (seenSet.count(c) == 0) {
                ds.classes.unseenIds.push_back(c);
            }
        }

        const json& splits = m.at("splits");
        ds.train = splitFromJson(dir, splits.at("train"), "train", nClasses);
        ds.testSeen = splitFromJson(dir, splits.at("test_seen"), "test_seen", nClasses);
        ds.testUnseen = splitFromJson(dir, splits.at("test_unseen"), "test_unseen", nClasses);

        for (const auto* split : {&ds.train, &ds.testSeen, &ds.testUnseen}) {
            for (const LabeledExample& ex : *split) {
                if (ex.features.rows() != gridRows * gridCols || ex.features.cols() != dIn) {
                    throw ValidationError(
                        "feature grid does not match manifest grid_rows*grid_cols x d_in");
                }
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + manifestPath.string() + ": " + e.what());
    }

    std::filesystem::path plantedPath = dir / "planted.json";
    if (std::filesystem::exists(plantedPath)) {
        std::ifstream ps(plantedPath);
        json p;
        try {
            p = json::parse(ps);
            ds.plantedCells = p.at("cells").get<std::vector<int>>();
        } catch (const json::exception& e) {
            throw ValidationError(plantedPath.string() + ": " + e.what());
        }
    }

    ds.validate();
    return ds;
}

std::vector<std::vector<int>> batchIndices(int n, int batchSize, Rng& rng) {
    if (batchSize < 1) {
        throw ValidationError("batch size must be >= 1");
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batchSize) {
        int stop = std::min(n, start + batchSize);
        out.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return out;
}

} // namespace attrformer

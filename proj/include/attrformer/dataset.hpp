#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "attrformer/geometry.hpp"
#include "attrformer/objectives.hpp"
#include "attrformer/rng.hpp"
#include "attrformer/tape.hpp"

namespace attrformer {

// One image: a grid of region feature vectors plus its class id.
struct LabeledExample {
    Mat features;  // (rows*cols) x dIn, cell-major over the grid
    int label = -1;
};

struct ZslDataset {
    std::vector<LabeledExample> train;  // seen classes only
    std::vector<LabeledExample> testSeen;
    std::vector<LabeledExample> testUnseen;
    ClassAttributeMatrix classes;
    Mat vA;  // one semantic vector per attribute, A x dA
    GridLayout layout;
    // Synthetic ground truth: attribute -> grid cell carrying its signal.
    // Empty for datasets without planted structure.
    std::vector<int> plantedCells;

    int attributeCount() const { return static_cast<int>(classes.z.cols()); }
    int featureDim() const;
    void validate() const;
};

struct SyntheticSpec {
    int nSeen = 8;
    int nUnseen = 4;
    int attributes = 12;
    int gridRows = 4;
    int gridCols = 4;
    int dIn = 64;
    int dA = 16;
    int examplesPerClass = 50;
    double mu = 3.0;     // planted signal strength
    double sigma = 1.0;  // background noise
    std::uint64_t seed = 1;
};

// Each attribute owns one grid cell and one unit direction in feature space.
// An image of class c carries mu * z[c][a] * u_a plus noise in cell(a) and
// pure noise everywhere else, so attention has a ground-truth target.
// Seen and unseen classes use distinct half-active binary signatures.
ZslDataset generateSynthetic(const SyntheticSpec& spec);

void saveDataset(const std::filesystem::path& dir, const ZslDataset& ds);
ZslDataset loadDataset(const std::filesystem::path& dir);

// Shuffled index batches over n examples; the final short batch is kept.
std::vector<std::vector<int>> batchIndices(int n, int batchSize, Rng& rng);

} // namespace attrformer

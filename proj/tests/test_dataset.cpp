#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "attrformer/dataset.hpp"
#include "attrformer/tzf.hpp"

using namespace attrformer;
namespace fs = std::filesystem;

namespace {

fs::path freshDir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("attrformer_test_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SyntheticSpec smallSpec() {
    SyntheticSpec s;
    s.nSeen = 3;
    s.nUnseen = 2;
    s.attributes = 4;
    s.gridRows = 2;
    s.gridCols = 3;
    s.dIn = 8;
    s.dA = 5;
    s.examplesPerClass = 10;
    s.seed = 7;
    return s;
}

} // namespace

TEST_CASE("tzf files round-trip exactly at float precision") {
    fs::path dir = freshDir("tzf");
    Rng rng(3);
    Mat m(5, 7);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();

    writeTzf(dir / "m.bin", m);
    Mat back = readTzf(dir / "m.bin");
    CHECK(back == quantizeToFloat(m)); // exact on the 32-bit grid

    // writing the read-back matrix reproduces the file byte for byte
    writeTzf(dir / "m2.bin", back);
    CHECK(slurp(dir / "m.bin") == slurp(dir / "m2.bin"));

    // quantization is idempotent
    CHECK(quantizeToFloat(back) == back);
}

TEST_CASE("tzf reader rejects malformed files") {
    fs::path dir = freshDir("tzf_bad");
    CHECK_THROWS_AS((void)readTzf(dir / "missing.bin"), IoError);

    spit(dir / "magic.bin", std::string("XXXX") + std::string(12, '\0'));
    CHECK_THROWS_AS((void)readTzf(dir / "magic.bin"), IoError);

    // reserved word must be zero
    std::string hdr = "TZF1";
    auto u32 = [](std::uint32_t v) {
        std::string s(4, '\0');
        for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>(v >> (8 * i));
        return s;
    };
    spit(dir / "reserved.bin", hdr + u32(1) + u32(1) + u32(5) + u32(0));
    CHECK_THROWS_AS((void)readTzf(dir / "reserved.bin"), IoError);

    // declares 2x2 but carries one float
    spit(dir / "short.bin", hdr + u32(2) + u32(2) + u32(0) + u32(0x3f800000));
    CHECK_THROWS_AS((void)readTzf(dir / "short.bin"), IoError);

    // trailing garbage after the payload
    spit(dir / "long.bin", hdr + u32(1) + u32(1) + u32(0) + u32(0x3f800000) + "z");
    CHECK_THROWS_AS((void)readTzf(dir / "long.bin"), IoError);

    // NaN payload
    spit(dir / "nan.bin", hdr + u32(1) + u32(1) + u32(0) + u32(0x7fc00000));
    CHECK_THROWS_AS((void)readTzf(dir / "nan.bin"), IoError);
}

TEST_CASE("generation is deterministic in the seed") {
    SyntheticSpec s = smallSpec();
    ZslDataset a = generateSynthetic(s);
    ZslDataset b = generateSynthetic(s);
    CHECK(a.classes.z == b.classes.z);
    CHECK(a.vA == b.vA);
    CHECK(a.plantedCells == b.plantedCells);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].features == b.train[i].features);
        CHECK(a.train[i].label == b.train[i].label);
    }

    s.seed = 8;
    ZslDataset c = generateSynthetic(s);
    CHECK(a.train[0].features != c.train[0].features);
}

TEST_CASE("generated datasets have the documented shape") {
    ZslDataset ds = generateSynthetic(smallSpec());
    CHECK(ds.train.size() == 30);     // 10 per seen class
    CHECK(ds.testSeen.size() == 6);   // a fifth of the train rate
    CHECK(ds.testUnseen.size() == 20);
    CHECK(ds.featureDim() == 8);
    CHECK(ds.layout.cellCount() == 6);
    CHECK(ds.classes.classCount() == 5);
    CHECK(ds.classes.seenIds == std::vector<int>{0, 1, 2});
    CHECK(ds.classes.unseenIds == std::vector<int>{3, 4});
    CHECK(ds.vA.rows() == 4);
    CHECK(ds.vA.cols() == 5);
    CHECK_NOTHROW(ds.validate());

    // half the attributes are active per class, all signatures distinct
    std::set<std::vector<double>> rows;
    for (Eigen::Index c = 0; c < 5; ++c) {
        CHECK(ds.classes.z.row(c).sum() == 2.0);
        std::vector<double> row(ds.classes.z.row(c).begin(), ds.classes.z.row(c).end());
        CHECK(rows.insert(row).second);
    }

    // each attribute owns a distinct grid cell
    std::set<int> cells(ds.plantedCells.begin(), ds.plantedCells.end());
    CHECK(cells.size() == 4);
    for (int c : ds.plantedCells) {
        CHECK(c >= 0);
        CHECK(c < 6);
    }

    // attribute query vectors are orthonormal (on the 32-bit storage grid)
    Mat gram = ds.vA * ds.vA.transpose();
    CHECK((gram - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("with no noise the planted rows carry exactly the signal") {
    SyntheticSpec s = smallSpec();
    s.sigma = 0.0;
    s.mu = 3.0;
    ZslDataset ds = generateSynthetic(s);
    for (const LabeledExample& ex : ds.train) {
        std::set<int> planted(ds.plantedCells.begin(), ds.plantedCells.end());
        for (int cell = 0; cell < 6; ++cell) {
            if (planted.count(cell) == 0) {
                CHECK(ex.features.row(cell).norm() == 0.0);
            }
        }
        for (int a = 0; a < 4; ++a) {
            double norm = ex.features.row(ds.plantedCells[static_cast<std::size_t>(a)]).norm();
            if (ds.classes.z(ex.label, a) > 0.0) {
                CHECK(norm == doctest::Approx(3.0).epsilon(1e-6)); // mu, unit direction
            } else {
                CHECK(norm == 0.0);
            }
        }
    }

    // the planted directions are shared across classes and orthogonal
    const Mat& f0 = ds.train[0].features;            // class 0
    const Mat& fLast = ds.testUnseen.back().features; // class 4
    for (int a = 0; a < 4; ++a) {
        int cell = ds.plantedCells[static_cast<std::size_t>(a)];
        if (ds.classes.z(0, a) > 0.0 && ds.classes.z(4, a) > 0.0) {
            CHECK((f0.row(cell) - fLast.row(cell)).norm() < 1e-6);
        }
        for (int b = a + 1; b < 4; ++b) {
            int cellB = ds.plantedCells[static_cast<std::size_t>(b)];
            if (ds.classes.z(0, a) > 0.0 && ds.classes.z(0, b) > 0.0) {
                CHECK(std::abs(f0.row(cell).dot(f0.row(cellB))) < 1e-5);
            }
        }
    }
}

TEST_CASE("generator rejects impossible requests") {
    SyntheticSpec s = smallSpec();
    s.attributes = 7; // only 6 cells
    CHECK_THROWS_AS((void)generateSynthetic(s), ValidationError);
    s = smallSpec();
    s.nSeen = 1;
    CHECK_THROWS_AS((void)generateSynthetic(s), ValidationError);
    s = smallSpec();
    s.sigma = -1.0;
    CHECK_THROWS_AS((void)generateSynthetic(s), ValidationError);
    s = smallSpec();
    s.attributes = 2; // one active each -> 2 signatures for 5 classes
    CHECK_THROWS_AS((void)generateSynthetic(s), ValidationError);
}

TEST_CASE("dataset directories round-trip through save and load") {
    fs::path dir = freshDir("ds_rt");
    ZslDataset ds = generateSynthetic(smallSpec());
    saveDataset(dir, ds);
    ZslDataset back = loadDataset(dir);

    CHECK(back.classes.z == ds.classes.z);
    CHECK(back.vA == ds.vA);
    CHECK(back.classes.seenIds == ds.classes.seenIds);
    CHECK(back.classes.unseenIds == ds.classes.unseenIds);
    CHECK(back.layout.nRows == ds.layout.nRows);
    CHECK(back.layout.nCols == ds.layout.nCols);
    CHECK(back.plantedCells == ds.plantedCells);
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.testSeen.size() == ds.testSeen.size());
    REQUIRE(back.testUnseen.size() == ds.testUnseen.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].features == ds.train[i].features);
        CHECK(back.train[i].label == ds.train[i].label);
    }

    // saving the loaded dataset reproduces every byte
    fs::path dir2 = freshDir("ds_rt2");
    saveDataset(dir2, back);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        fs::path rel = fs::relative(entry.path(), dir);
        CHECK(slurp(dir2 / rel) == slurp(entry.path()));
    }
}

TEST_CASE("loader rejects inconsistent directories") {
    CHECK_THROWS_AS((void)loadDataset(freshDir("ds_missing")), IoError);

    fs::path dir = freshDir("ds_badjson");
    spit(dir / "manifest", "{ not json");
    CHECK_THROWS_AS((void)loadDataset(dir), ValidationError);

    // signature matrix disagreeing with the manifest
    fs::path dir2 = freshDir("ds_badz");
    ZslDataset ds = generateSynthetic(smallSpec());
    saveDataset(dir2, ds);
    writeTzf(dir2 / "Z.bin", Mat::Zero(2, 2));
    CHECK_THROWS_AS((void)loadDataset(dir2), ValidationError);

    // a label outside the class range
    fs::path dir3 = freshDir("ds_badlabel");
    saveDataset(dir3, ds);
    std::string manifest = slurp(dir3 / "manifest");
    auto pos = manifest.find("\"label\": 0");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 10, "\"label\": 99");
    spit(dir3 / "manifest", manifest);
    CHECK_THROWS_AS((void)loadDataset(dir3), ValidationError);
}

TEST_CASE("batchIndices partitions the index range") {
    Rng rng(5);
    auto batches = batchIndices(10, 3, rng);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 3);
    CHECK(batches[1].size() == 3);
    CHECK(batches[2].size() == 3);
    CHECK(batches[3].size() == 1);
    std::set<int> all;
    for (const auto& b : batches) all.insert(b.begin(), b.end());
    CHECK(all.size() == 10);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 9);

    Rng r1(9), r2(9);
    CHECK(batchIndices(20, 7, r1) == batchIndices(20, 7, r2));

    Rng r3(1);
    CHECK(batchIndices(4, 100, r3).size() == 1);
    CHECK_THROWS_AS((void)batchIndices(4, 0, r3), ValidationError);
}

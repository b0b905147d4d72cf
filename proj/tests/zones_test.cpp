#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "irrisched/zones.hpp"

using namespace irrisched;
using namespace irrisched::zones;

namespace {

Matrix blobs(const std::vector<Eigen::RowVectorXd>& centers, int per_blob, double spread, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, spread);
    const auto d = centers.front().size();
    Matrix x(per_blob * static_cast<int>(centers.size()), d);
    for (std::size_t b = 0; b < centers.size(); ++b) {
        for (int i = 0; i < per_blob; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) x(b * per_blob + i, j) = centers[b](j) + n(rng);
        }
    }
    return x;
}

double brute_wcss(const Matrix& x, const KMeansResult& r) {
    double w = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) w += (x.row(i) - r.centroids.row(r.labels[i])).squaredNorm();
    return w;
}

}  // namespace

TEST(Normalize, MapsColumnsToUnitInterval) {
    Matrix x(3, 2);
    x << 1, 5, 2, 5, 3, 5;
    const Matrix n = normalize(x);
    EXPECT_DOUBLE_EQ(n(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(n(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(n(2, 0), 1.0);
    EXPECT_EQ(n.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(KMeans, RecoversSeparatedBlobCenters) {
    std::vector<Eigen::RowVectorXd> c(3, Eigen::RowVectorXd(2));
    c[0] << 0, 0;
    c[1] << 5, 5;
    c[2] << 0, 5;
    const Matrix x = blobs(c, 100, 0.2, 1);
    const auto r = kmeans_best(x, 3, 42);
    for (const auto& center : c) {
        double best = 1e9;
        for (int k = 0; k < 3; ++k) best = std::min(best, (r.centroids.row(k) - center).norm());
        EXPECT_LT(best, 0.1);
    }
    EXPECT_NEAR(r.wcss, brute_wcss(x, r), 1e-9 * r.wcss);
}

TEST(KMeans, OneClusterPerPointHasZeroWcss) {
    const Matrix x = Matrix::Random(12, 3);
    EXPECT_NEAR(kmeans(x, 12, 3).wcss, 0.0, 1e-24);
}

TEST(KMeans, WcssNeverIncreasesAcrossIterations) {
    std::vector<Eigen::RowVectorXd> c(4, Eigen::RowVectorXd::Zero(3));
    for (int i = 0; i < 4; ++i) c[i](i % 3) = i;
    const Matrix x = blobs(c, 60, 0.8, 9);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto r = kmeans(x, 4, s);
        for (std::size_t i = 1; i < r.wcss_history.size(); ++i) {
            EXPECT_LE(r.wcss_history[i], r.wcss_history[i - 1] * (1 + 1e-12));
        }
    }
}

TEST(KMeans, RejectsBadArguments) {
    const Matrix x = Matrix::Random(4, 2);
    EXPECT_THROW(kmeans(x, 0, 1), InvalidArgument);
    EXPECT_THROW(kmeans(x, 5, 1), InvalidArgument);
}

TEST(KMeans, ConcurrentRestartsMatchSequential) {
    const Matrix x = Matrix::Random(200, 6);
    const auto a = kmeans_best(x, 4, 11, 10, false);
    const auto b = kmeans_best(x, 4, 11, 10, true);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.wcss, b.wcss);
}

TEST(Elbow, ThreeSeparatedBlobs) {
    std::vector<Eigen::RowVectorXd> c(3, Eigen::RowVectorXd::Zero(6));
    c[1](0) = 1.0;
    c[2](1) = 1.0;
    c[2](4) = 1.0;
    const Matrix x = blobs(c, 80, 0.03, 5);
    EXPECT_EQ(elbow_select(x, 8, 42), 3);
}

TEST(Elbow, SingleBlobStaysWhole) {
    // Splitting an isotropic d-dimensional Gaussian gains about 2/(pi d) of
    // its scatter, below the 10% threshold once d >= 7.
    const Matrix x = blobs({Eigen::RowVectorXd::Zero(8)}, 400, 1.0, 2);
    EXPECT_EQ(elbow_select(x, 8, 42), 1);
}

TEST(Elbow, InvariantToRowDuplication) {
    std::vector<Eigen::RowVectorXd> c(3, Eigen::RowVectorXd::Zero(6));
    c[1](2) = 1.0;
    c[2](3) = 1.0;
    const Matrix x = blobs(c, 50, 0.03, 8);
    Matrix twice(2 * x.rows(), x.cols());
    twice << x, x;
    EXPECT_EQ(elbow_select(x, 6, 42), elbow_select(twice, 6, 42));
}

TEST(Elbow, RejectsTinyKmax) { EXPECT_THROW(elbow_select(Matrix::Random(5, 2), 1, 0), InvalidArgument); }

TEST(Delineate, RecoversSyntheticQuadrantPopulations) {
    std::vector<int> truth;
    const auto g = synthetic_quadrant({24, 90}, 3, &truth);
    const auto zm = delineate(g, 8, 42);
    ASSERT_EQ(zm.k, 3);
    // best label permutation
    std::vector<int> perm{1, 2, 3};
    double best = 0.0;
    do {
        int hit = 0;
        for (std::size_t i = 0; i < g.cells.size(); ++i) {
            hit += perm[zm.assignments.at(g.cells[i].cell_id) - 1] == truth[i];
        }
        best = std::max(best, double(hit) / g.cells.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_GE(best, 0.95);
}

TEST(Delineate, IdenticalCellsGiveOneZone) {
    AttributeGrid g;
    for (int i = 0; i < 30; ++i) g.cells.push_back({i, "wheat", 888.0, {0.05, 0.43, 1.3, 1.32, 0.25}});
    const auto zm = delineate(g, 8, 1);
    EXPECT_EQ(zm.k, 1);
    for (const auto& [id, z] : zm.assignments) EXPECT_EQ(z, 1);
}

TEST(Delineate, CropLabelsNeverShareZones) {
    AttributeGrid g;
    for (int i = 0; i < 40; ++i) g.cells.push_back({i, i < 20 ? "wheat" : "canola", 888.0, {0.05, 0.43, 1.3, 1.32, 0.25}});
    const auto zm = delineate(g, 8, 1);
    EXPECT_EQ(zm.k, 2);
    std::set<int> wheat, canola;
    for (int i = 0; i < 40; ++i) (i < 20 ? wheat : canola).insert(zm.assignments.at(i));
    for (int z : wheat) EXPECT_FALSE(canola.count(z));
    EXPECT_EQ(zm.zone_crop[0], "wheat");
    EXPECT_EQ(zm.zone_crop[1], "canola");
}

TEST(Delineate, ZoneIdsAreContiguous) {
    const auto g = synthetic_quadrant({12, 45}, 4);
    const auto zm = delineate(g, 6, 7);
    std::set<int> ids;
    for (const auto& [id, z] : zm.assignments) ids.insert(z);
    EXPECT_EQ(*ids.begin(), 1);
    EXPECT_EQ(*ids.rbegin(), zm.k);
    EXPECT_EQ(static_cast<int>(ids.size()), zm.k);
    EXPECT_EQ(static_cast<int>(zm.centroids.size()), zm.k);
}

TEST(MapToPivot, IdentityAtSameResolution) {
    const auto g = synthetic_quadrant({12, 45}, 4);
    const auto zm = delineate(g, 6, 7);
    const auto mapped = map_to_pivot(zm, {12, 45}, {12, 45});
    EXPECT_EQ(mapped.assignments, zm.assignments);
}

TEST(MapToPivot, MajorityWithLowerIndexTieBreak) {
    ZoneMap zm;
    zm.k = 2;
    // fine 2x2 onto pivot 1x1: two votes each
    zm.assignments = {{0, 2}, {1, 1}, {2, 2}, {3, 1}};
    EXPECT_EQ(map_to_pivot(zm, {2, 2}, {1, 1}).assignments.at(0), 1);
    zm.assignments[3] = 2;
    EXPECT_EQ(map_to_pivot(zm, {2, 2}, {1, 1}).assignments.at(0), 2);
}

TEST(MapToPivot, KeepsZoneSetAndRejectsEmptyCells) {
    const auto g = synthetic_quadrant({24, 90}, 4);
    const auto zm = delineate(g, 6, 7);
    const auto mapped = map_to_pivot(zm, {24, 90}, {12, 45});
    EXPECT_EQ(mapped.assignments.size(), 12u * 45u);
    for (const auto& [id, z] : mapped.assignments) {
        EXPECT_GE(z, 1);
        EXPECT_LE(z, zm.k);
    }
    EXPECT_THROW(map_to_pivot(mapped, {12, 45}, {24, 90}), InvalidArgument);
}

TEST(ZoneIo, CsvAndJsonRoundTrip) {
    const auto g = synthetic_quadrant({6, 9}, 4);
    std::stringstream csv;
    write_attribute_csv(csv, g);
    const auto back = read_attribute_csv(csv);
    ASSERT_EQ(back.cells.size(), g.cells.size());
    EXPECT_NEAR(back.cells[7].hydraulics.alpha, g.cells[7].hydraulics.alpha, 1e-9);

    const auto zm = delineate(g, 4, 1);
    const auto again = zone_map_from_json(nlohmann::json::parse(to_json(zm).dump()));
    EXPECT_EQ(again.assignments, zm.assignments);
    EXPECT_EQ(again.k, zm.k);
    EXPECT_NEAR(again.centroids[0](0), zm.centroids[0](0), 1e-12);
}

TEST(ZoneIo, MalformedCsvReportsLine) {
    std::stringstream bad("cell_id,crop,elev,theta_r,theta_s,alpha,n,ks\n0,wheat,888,0.05,0.43,1.3,1.32,0.25\n1,wheat,x\n");
    try {
        read_attribute_csv(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

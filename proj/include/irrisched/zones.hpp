/**
 * @file zones.hpp
 * @brief Management zone delineation: crop split, k-means on normalized
 *        attributes with elbow selection, mapping onto pivot resolution
 */

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "agrohydro.hpp"
#include "errors.hpp"

namespace irrisched::zones {

using Matrix = Eigen::MatrixXd;

/// Polar layout of a pivot quadrant; cell id = ring * azimuthal + sector.
struct PolarGeometry {
    int radial = 12;
    int azimuthal = 45;

    int cell_count() const { return radial * azimuthal; }
};

struct AttributeCell {
    std::int64_t cell_id = 0;
    std::string crop;
    double elevation = 0.0;
    agrohydro::SoilHydraulicParams hydraulics;
};

struct AttributeGrid {
    std::vector<AttributeCell> cells;
    PolarGeometry geometry;
};

inline constexpr int kAttributeCount = 6;
inline const std::array<std::string, kAttributeCount> kAttributeNames{"elev", "theta_r", "theta_s",
                                                                      "alpha", "n", "ks"};

inline Eigen::RowVectorXd attribute_vector(const AttributeCell& c) {
    Eigen::RowVectorXd v(kAttributeCount);
    v << c.elevation, c.hydraulics.theta_r, c.hydraulics.theta_s, c.hydraulics.alpha, c.hydraulics.n,
        c.hydraulics.k_s;
    return v;
}

struct ZoneMap {
    std::map<std::int64_t, int> assignments;  ///< cell id -> zone (1-based)
    std::vector<Eigen::RowVectorXd> centroids;  ///< per zone, denormalized attributes
    std::vector<std::string> zone_crop;         ///< crop label of each zone
    int k = 0;
};

// ---------------------------------------------------------------------------

/// Column-wise min-max scaling to [0, 1]; constant columns map to 0.
struct MinMaxScaler {
    Eigen::RowVectorXd min;
    Eigen::RowVectorXd range;

    static MinMaxScaler fit(const Matrix& x) {
        if (x.rows() < 1) throw InvalidArgument("normalize: need at least one row");
        MinMaxScaler s;
        s.min = x.colwise().minCoeff();
        s.range = x.colwise().maxCoeff() - s.min;
        return s;
    }

    Matrix transform(const Matrix& x) const {
        Matrix out(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (range(j) > 0.0) {
                out.col(j) = (x.col(j).array() - min(j)) / range(j);
            } else {
                out.col(j).setZero();
            }
        }
        return out;
    }

    Eigen::RowVectorXd inverse(const Eigen::RowVectorXd& v) const {
        return (v.array() * range.array() + min.array()).matrix();
    }
};

inline Matrix normalize(const Matrix& features) { return MinMaxScaler::fit(features).transform(features); }

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;  ///< k x d
    double wcss = 0.0;
    int iterations = 0;
    std::vector<double> wcss_history;  ///< after each assignment step
};

namespace detail {

inline int nearest(const Matrix& centroids, const Eigen::RowVectorXd& x, double& d2) {
    int best = 0;
    d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - x).squaredNorm();
        if (d < d2) {
            d2 = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline Matrix kmeanspp_seed(const Matrix& data, int k, std::mt19937_64& rng) {
    const Eigen::Index n = data.rows();
    Matrix c(k, data.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    c.row(0) = data.row(first(rng));
    std::vector<double> d2(n);
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double d;
            nearest(c.topRows(j), data.row(i), d);
            d2[i] = d;
            total += d;
        }
        if (total <= 0.0) {
            c.row(j) = data.row(first(rng));
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng), acc = 0.0;
        Eigen::Index pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= target) {
                pick = i;
                break;
            }
        }
        c.row(j) = data.row(pick);
    }
    return c;
}

}  // namespace detail

/// Lloyd k-means with k-means++ seeding. Stops when the largest centroid
/// shift drops below 1e-9 or after 300 iterations. An emptied cluster is
/// re-seeded at the point farthest from its current centroid.
inline KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, int max_iterations = 300,
                           double shift_tolerance = 1e-9) {
    if (k < 1) throw InvalidArgument("kmeans: k must be positive");
    if (data.rows() < k) throw InvalidArgument("kmeans: fewer rows than clusters");
    const Eigen::Index n = data.rows();
    std::mt19937_64 rng(seed);
    KMeansResult r;
    r.centroids = detail::kmeanspp_seed(data, k, rng);
    r.labels.assign(n, 0);
    std::vector<double> dist(n);

    auto assign = [&]() {
        double w = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            r.labels[i] = detail::nearest(r.centroids, data.row(i), dist[i]);
            w += dist[i];
        }
        return w;
    };

    r.wcss = assign();
    r.wcss_history.push_back(r.wcss);
    for (int it = 0; it < max_iterations; ++it) {
        Matrix next = Matrix::Zero(k, data.cols());
        std::vector<int> count(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            next.row(r.labels[i]) += data.row(i);
            ++count[r.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) {
                next.row(c) /= count[c];
            } else {
                const auto far = std::distance(dist.begin(), std::max_element(dist.begin(), dist.end()));
                next.row(c) = data.row(far);
                dist[far] = 0.0;
            }
        }
        const double shift = (next - r.centroids).rowwise().norm().maxCoeff();
        r.centroids = std::move(next);
        r.wcss = assign();
        r.wcss_history.push_back(r.wcss);
        r.iterations = it + 1;
        if (shift < shift_tolerance) break;
    }
    return r;
}

/// Best of `restarts` seeded runs (seeds seed, seed+1, ...). Ties in wcss go
/// to the lower seed, so the concurrent and sequential reductions agree.
inline KMeansResult kmeans_best(const Matrix& data, int k, std::uint64_t seed, int restarts = 10,
                                bool concurrent = false) {
    std::vector<KMeansResult> runs(restarts);
    if (concurrent) {
        std::vector<std::future<KMeansResult>> tasks;
        for (int r = 0; r < restarts; ++r) {
            tasks.push_back(std::async(std::launch::async, [&, r] { return kmeans(data, k, seed + r); }));
        }
        for (int r = 0; r < restarts; ++r) runs[r] = tasks[r].get();
    } else {
        for (int r = 0; r < restarts; ++r) runs[r] = kmeans(data, k, seed + r);
    }
    int best = 0;
    for (int r = 1; r < restarts; ++r) {
        if (runs[r].wcss < runs[best].wcss) best = r;
    }
    return std::move(runs[best]);
}

/// wcss(k) for k = 1..k_max (best of 10 restarts each).
inline std::vector<double> wcss_curve(const Matrix& data, int k_max, std::uint64_t seed) {
    std::vector<double> w;
    const int top = std::min<int>(k_max, static_cast<int>(data.rows()));
    for (int k = 1; k <= top; ++k) w.push_back(kmeans_best(data, k, seed).wcss);
    return w;
}

/// Elbow rule: the largest k whose relative improvement
/// (wcss(k-1) - wcss(k)) / wcss(k-1) exceeds `threshold`; 1 if none does.
inline int elbow_select(const Matrix& data, int k_max, std::uint64_t seed, double threshold = 0.10) {
    if (k_max < 2) throw InvalidArgument("elbow_select: k_max must be at least 2");
    const auto w = wcss_curve(data, k_max, seed);
    int chosen = 1;
    for (std::size_t k = 1; k < w.size(); ++k) {
        if (w[k - 1] <= 0.0) break;
        if ((w[k - 1] - w[k]) / w[k - 1] > threshold) chosen = static_cast<int>(k) + 1;
    }
    return chosen;
}

/// Stage 1 + 2: split by crop label (in order of first appearance), then
/// cluster each partition on its min-max normalized attributes.
inline ZoneMap delineate(const AttributeGrid& grid, int k_max, std::uint64_t seed) {
    if (grid.cells.empty()) throw InvalidArgument("delineate: empty attribute grid");
    std::vector<std::string> crops;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < grid.cells.size(); ++i) {
        const auto& crop = grid.cells[i].crop;
        if (!members.count(crop)) crops.push_back(crop);
        members[crop].push_back(i);
    }
    {
        std::map<std::int64_t, int> seen;
        for (const auto& c : grid.cells) {
            if (seen[c.cell_id]++) throw InvalidArgument("delineate: duplicate cell id");
        }
    }

    ZoneMap zm;
    int offset = 0;
    for (const auto& crop : crops) {
        const auto& idx = members[crop];
        Matrix x(static_cast<Eigen::Index>(idx.size()), kAttributeCount);
        for (std::size_t r = 0; r < idx.size(); ++r) x.row(r) = attribute_vector(grid.cells[idx[r]]);
        const auto scaler = MinMaxScaler::fit(x);
        const Matrix xn = scaler.transform(x);
        const int k = idx.size() < 2 ? 1 : elbow_select(xn, std::max(2, k_max), seed);
        const auto km = kmeans_best(xn, k, seed);
        // number clusters by first appearance so zone ids are stable
        std::vector<int> order(k, -1);
        int next = 0;
        for (int lab : km.labels) {
            if (order[lab] < 0) order[lab] = next++;
        }
        std::vector<int> inverse(next);
        for (int c = 0; c < k; ++c) {
            if (order[c] >= 0) inverse[order[c]] = c;
        }
        for (std::size_t r = 0; r < idx.size(); ++r) {
            zm.assignments[grid.cells[idx[r]].cell_id] = offset + order[km.labels[r]] + 1;
        }
        for (int z = 0; z < next; ++z) {
            // mean of the raw attributes of the members
            Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(kAttributeCount);
            int count = 0;
            for (std::size_t r = 0; r < idx.size(); ++r) {
                if (km.labels[r] == inverse[z]) {
                    mean += x.row(r);
                    ++count;
                }
            }
            zm.centroids.push_back(mean / count);
            zm.zone_crop.push_back(crop);
        }
        offset += next;
    }
    zm.k = offset;
    return zm;
}

/// Stage 3: majority vote of fine cells inside each pivot cell; ties go to the
/// lower zone index.
inline ZoneMap map_to_pivot(const ZoneMap& zmap, const PolarGeometry& fine, const PolarGeometry& pivot) {
    if (pivot.radial < 1 || pivot.azimuthal < 1) throw InvalidArgument("map_to_pivot: empty pivot layout");
    std::vector<std::map<int, int>> votes(pivot.cell_count());
    for (const auto& [id, zone] : zmap.assignments) {
        if (id < 0 || id >= fine.cell_count()) throw InvalidArgument("map_to_pivot: cell id outside layout");
        const int ring = static_cast<int>(id / fine.azimuthal);
        const int sector = static_cast<int>(id % fine.azimuthal);
        const int pr = ring * pivot.radial / fine.radial;
        const int pa = sector * pivot.azimuthal / fine.azimuthal;
        ++votes[pr * pivot.azimuthal + pa][zone];
    }
    ZoneMap out;
    out.centroids = zmap.centroids;
    out.zone_crop = zmap.zone_crop;
    out.k = zmap.k;
    for (int cell = 0; cell < pivot.cell_count(); ++cell) {
        if (votes[cell].empty()) {
            throw InvalidArgument("map_to_pivot: pivot cell " + std::to_string(cell) + " covers no fine cell");
        }
        int best_zone = 0, best_count = -1;
        for (const auto& [zone, count] : votes[cell]) {  // ascending zone order
            if (count > best_count) {
                best_zone = zone;
                best_count = count;
            }
        }
        out.assignments[cell] = best_zone;
    }
    return out;
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

/// Reads `cell_id,crop,elev,theta_r,theta_s,alpha,n,ks`.
inline AttributeGrid read_attribute_csv(std::istream& in) {
    AttributeGrid g;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    ++lineno;
    if (line.rfind("cell_id,crop,elev,theta_r,theta_s,alpha,n,ks", 0) != 0) {
        throw ParseError("unexpected header '" + line + "'", lineno);
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 8) throw ParseError("expected 8 fields", lineno);
        AttributeCell c;
        try {
            c.cell_id = std::stoll(f[0]);
            c.crop = f[1];
            c.elevation = std::stod(f[2]);
            c.hydraulics = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7])};
        } catch (const std::exception&) {
            throw ParseError("non-numeric field", lineno);
        }
        if (!c.hydraulics.valid()) throw ParseError("invalid hydraulic parameters", lineno);
        g.cells.push_back(std::move(c));
    }
    return g;
}

inline AttributeGrid read_attribute_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    return read_attribute_csv(in);
}

inline void write_attribute_csv(std::ostream& out, const AttributeGrid& g) {
    out << "cell_id,crop,elev,theta_r,theta_s,alpha,n,ks\n";
    out.precision(10);
    for (const auto& c : g.cells) {
        out << c.cell_id << ',' << c.crop << ',' << c.elevation << ',' << c.hydraulics.theta_r << ','
            << c.hydraulics.theta_s << ',' << c.hydraulics.alpha << ',' << c.hydraulics.n << ','
            << c.hydraulics.k_s << '\n';
    }
}

inline nlohmann::json to_json(const ZoneMap& zm) {
    nlohmann::json j;
    j["k"] = zm.k;
    j["attributes"] = kAttributeNames;
    auto& a = j["assignments"] = nlohmann::json::object();
    for (const auto& [id, zone] : zm.assignments) a[std::to_string(id)] = zone;
    auto& zs = j["zones"] = nlohmann::json::array();
    for (std::size_t z = 0; z < zm.centroids.size(); ++z) {
        std::vector<double> c(zm.centroids[z].data(), zm.centroids[z].data() + zm.centroids[z].size());
        zs.push_back({{"zone", z + 1}, {"crop", z < zm.zone_crop.size() ? zm.zone_crop[z] : ""}, {"centroid", c}});
    }
    return j;
}

inline ZoneMap zone_map_from_json(const nlohmann::json& j) {
    ZoneMap zm;
    try {
        zm.k = j.at("k").get<int>();
        for (const auto& [key, val] : j.at("assignments").items()) zm.assignments[std::stoll(key)] = val.get<int>();
        for (const auto& z : j.at("zones")) {
            const auto c = z.at("centroid").get<std::vector<double>>();
            zm.centroids.push_back(Eigen::Map<const Eigen::RowVectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
            zm.zone_crop.push_back(z.value("crop", std::string{}));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("zone map: ") + e.what(), 0);
    }
    return zm;
}

/// Synthetic stand-in for a pivot quadrant: three populations (loam at
/// 889 m, loam at 888 m, sandy clay loam at 888.5 m) laid out in angular
/// bands on a fine polar grid, with small attribute noise.
inline AttributeGrid synthetic_quadrant(const PolarGeometry& fine, std::uint64_t seed,
                                        std::vector<int>* truth = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    struct Pop {
        double elev;
        agrohydro::SoilHydraulicParams p;
    };
    const Pop pops[3] = {{889.0, {0.05, 0.43, 1.3, 1.32, 0.25}},
                         {888.0, {0.05, 0.43, 1.4, 1.31, 0.30}},
                         {888.5, {0.08, 0.40, 1.0, 1.28, 0.31}}};
    AttributeGrid g;
    g.geometry = fine;
    for (int r = 0; r < fine.radial; ++r) {
        for (int a = 0; a < fine.azimuthal; ++a) {
            // outer rings of the first third are the high ground
            int pop = a < fine.azimuthal / 3 ? 0 : (a < 2 * fine.azimuthal / 3 ? 1 : 2);
            if (pop == 1 && r >= 2 * fine.radial / 3) pop = 0;
            const auto& base = pops[pop];
            AttributeCell c;
            c.cell_id = static_cast<std::int64_t>(r) * fine.azimuthal + a;
            c.crop = "wheat";
            c.elevation = base.elev + 0.08 * noise(rng);
            c.hydraulics = base.p;
            c.hydraulics.theta_r += 0.002 * noise(rng);
            c.hydraulics.theta_s += 0.004 * noise(rng);
            c.hydraulics.alpha *= 1.0 + 0.02 * noise(rng);
            c.hydraulics.n += 0.004 * noise(rng);
            c.hydraulics.k_s *= 1.0 + 0.03 * noise(rng);
            g.cells.push_back(c);
            if (truth) truth->push_back(pop + 1);
        }
    }
    return g;
}

}  // namespace irrisched::zones

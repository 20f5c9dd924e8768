#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddk/random.hpp"

namespace ddk {

struct ClassRepresentation {
    int class_id = 0;
    std::vector<double> vector;
};

// Partition of C fine-grained classes into K super-classes. Every class maps
// to exactly one super-class and no super-class is empty after construction.
struct Taxonomy {
    int num_classes = 0;        // C
    int num_superclasses = 0;   // K
    std::vector<int> assignment;                 // size C, values in [0,K)
    std::vector<std::vector<double>> centroids;  // K x D
    std::vector<std::vector<int>> members;       // per super-class class lists

    int superclass_of(int class_id) const { return assignment.at(class_id); }

    void rebuild_members() {
        members.assign(num_superclasses, {});
        for (int c = 0; c < num_classes; ++c) {
            const int k = assignment[c];
            if (k < 0 || k >= num_superclasses)
                throw std::invalid_argument("Taxonomy: assignment value out of range");
            members[k].push_back(c);
        }
    }

    void validate() const {
        if (static_cast<int>(assignment.size()) != num_classes)
            throw std::invalid_argument("Taxonomy: assignment size != C");
        std::size_t total = 0;
        for (const auto& m : members) {
            if (m.empty()) throw std::invalid_argument("Taxonomy: empty super-class");
            total += m.size();
        }
        if (total != static_cast<std::size_t>(num_classes))
            throw std::invalid_argument("Taxonomy: member lists do not partition the classes");
    }
};

// Element-wise mean of each class's sample vectors.
inline std::vector<ClassRepresentation> class_representations(
    const std::vector<std::vector<std::vector<double>>>& samples) {
    std::vector<ClassRepresentation> reps;
    reps.reserve(samples.size());
    std::size_t dim = 0;
    for (std::size_t c = 0; c < samples.size(); ++c) {
        if (samples[c].empty())
            throw std::invalid_argument("class_representations: class " + std::to_string(c) + " has no samples");
        if (c == 0) dim = samples[c][0].size();
        std::vector<double> mean(dim, 0.0);
        for (const auto& v : samples[c]) {
            if (v.size() != dim)
                throw std::invalid_argument("class_representations: dimension mismatch in class " +
                                            std::to_string(c));
            for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
        }
        for (double& m : mean) m /= static_cast<double>(samples[c].size());
        reps.push_back({static_cast<int>(c), std::move(mean)});
    }
    return reps;
}

struct KMeansResult {
    std::vector<int> assignment;
    std::vector<std::vector<double>> centroids;
    // Within-cluster sum of squared distances recorded after each assignment
    // step; non-increasing across iterations.
    std::vector<double> objective_history;
    int iterations = 0;
};

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// k-means++ seeding: first center uniform, later centers drawn with
// probability proportional to squared distance from the nearest chosen one.
inline std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& points,
                                                      int k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    centers.push_back(points[rng.uniform_index(n)]);
    std::vector<double> dist2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& ctr : centers) best = std::min(best, squared_distance(points[i], ctr));
            dist2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_index(n);  // all points coincide with a center
        }
        centers.push_back(points[pick]);
    }
    return centers;
}

}  // namespace detail

// Lloyd's algorithm with seeded k-means++ initialization. Stops when the
// assignment is unchanged or max_iters is reached. Empty clusters steal the
// point farthest from its centroid in the largest cluster, which keeps the
// objective non-increasing (the stolen point's distance drops to zero).
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                           std::uint64_t seed, int max_iters = 100) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("kmeans: K must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans: K exceeds number of points");
    if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");

    Rng rng(seed);
    KMeansResult res;
    res.centroids = detail::kmeanspp_init(points, k, rng);
    res.assignment.assign(n, -1);

    const std::size_t dim = points.empty() ? 0 : points[0].size();
    std::vector<double> point_dist2(n, 0.0);

    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_k = 0;
            for (int c = 0; c < k; ++c) {
                const double d = detail::squared_distance(points[i], res.centroids[c]);
                if (d < best) {
                    best = d;
                    best_k = c;
                }
            }
            if (res.assignment[i] != best_k) {
                res.assignment[i] = best_k;
                changed = true;
            }
            point_dist2[i] = best;
            objective += best;
        }

        // Repair empty clusters before the update step.
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) counts[res.assignment[i]]++;
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            int donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            int steal = -1;
            double far = -1.0;
            for (int i = 0; i < n; ++i) {
                if (res.assignment[i] == donor && point_dist2[i] > far) {
                    far = point_dist2[i];
                    steal = i;
                }
            }
            res.assignment[steal] = c;
            res.centroids[c] = points[steal];
            objective -= point_dist2[steal];
            point_dist2[steal] = 0.0;
            counts[donor]--;
            counts[c]++;
            changed = true;
        }

        res.objective_history.push_back(objective);
        res.iterations = iter + 1;
        if (!changed) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> sizes(k, 0);
        for (int i = 0; i < n; ++i) {
            const int c = res.assignment[i];
            sizes[c]++;
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;  // cannot happen after repair
            for (std::size_t d = 0; d < dim; ++d) res.centroids[c][d] = sums[c][d] / sizes[c];
        }
    }
    return res;
}

inline Taxonomy build_taxonomy(const std::vector<ClassRepresentation>& reps, int k, std::uint64_t seed) {
    std::vector<std::vector<double>> points;
    points.reserve(reps.size());
    for (const auto& r : reps) points.push_back(r.vector);
    KMeansResult km = kmeans(points, k, seed);

    Taxonomy tax;
    tax.num_classes = static_cast<int>(reps.size());
    tax.num_superclasses = k;
    tax.assignment = std::move(km.assignment);
    tax.centroids = std::move(km.centroids);
    tax.rebuild_members();
    tax.validate();
    return tax;
}

inline nlohmann::json taxonomy_to_json(const Taxonomy& tax) {
    nlohmann::json j;
    j["C"] = tax.num_classes;
    j["K"] = tax.num_superclasses;
    j["D"] = tax.centroids.empty() ? 0 : static_cast<int>(tax.centroids[0].size());
    j["assignment"] = tax.assignment;
    j["centroids"] = tax.centroids;
    return j;
}

inline Taxonomy taxonomy_from_json(const nlohmann::json& j) {
    Taxonomy tax;
    tax.num_classes = j.at("C").get<int>();
    tax.num_superclasses = j.at("K").get<int>();
    tax.assignment = j.at("assignment").get<std::vector<int>>();
    tax.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    tax.rebuild_members();
    tax.validate();
    return tax;
}

inline void save_taxonomy(const std::string& path, const Taxonomy& tax) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_taxonomy: cannot open " + path);
    os << taxonomy_to_json(tax).dump(2) << "\n";
}

inline Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_taxonomy: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("load_taxonomy: " + path + ": " + e.what());
    }
    return taxonomy_from_json(j);
}

}  // namespace ddk

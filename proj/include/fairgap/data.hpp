#ifndef FAIRGAP_DATA_HPP
#define FAIRGAP_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fairgap/matrix.hpp"

namespace fairgap {

struct Dataset {
    Matrix features;                      // N x F
    Matrix labels;                        // N x G, entries 0/1
    std::vector<std::string> group_names; // G unique non-empty names

    std::size_t n_samples() const { return features.rows(); }
    std::size_t feature_dim() const { return features.cols(); }
    std::size_t n_groups() const { return labels.cols(); }
    void validate() const;

    Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct SyntheticSpec {
    std::size_t n_samples = 0;
    std::size_t feature_dim = 0;
    std::vector<double> base_rates;       // per group, strictly inside (0,1)
    double separability = 1.0;            // prototype scale; 0 means pure noise
    double noise_scale = 1.0;
    double correlation = 0.0;             // in [0,1]; shared-latent row mixing
    std::size_t prototype_dim = 0;        // 0: full feature_dim; smaller values
                                          // force prototype overlap and make
                                          // groups interfere
    std::uint64_t seed = 0;
    std::vector<std::string> group_names; // optional; defaults to g0..g{G-1}

    std::size_t n_groups() const { return base_rates.size(); }
    void validate() const;
};

// Per-group Bernoulli labels; features are the sum of the positive groups'
// fixed unit prototypes scaled by separability, plus isotropic Gaussian
// noise. With correlation > 0 a row may draw all its labels from one shared
// uniform variate, which preserves marginals while producing many-group rows.
Dataset generate(const SyntheticSpec& spec);

enum class DatasetFormat { Csv };

// Header: f0,...,f{F-1},g:<name0>,...,g:<name{G-1}>. Features round-trip
// bit-exactly; label cells must be exactly 0 or 1.
Dataset load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::Csv);
void save_dataset(const Dataset& d, const std::string& path,
                  DatasetFormat format = DatasetFormat::Csv);

struct SplitIndices {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::vector<std::string> warnings;
};

// Stratifies on the exact label combination with largest-remainder
// apportionment, so per-group positive rates carry over to both splits.
SplitIndices stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed);

struct ClassWeight {
    double pos = 1.0;
    double neg = 1.0;
    bool defined = true; // false when the group lacks positives or negatives
};

// w_pos = N/(2*n_pos), w_neg = N/(2*n_neg) per group.
std::vector<ClassWeight> class_weights(const Dataset& d);

struct PrevalenceStats {
    std::vector<std::string> group_names;
    std::vector<std::int64_t> positives_per_group;
    std::vector<std::int64_t> labels_per_row_histogram; // index 0..G
    std::size_t n_samples = 0;
};

PrevalenceStats prevalence_stats(const Dataset& d);

std::string prevalence_to_json(const PrevalenceStats& stats, int indent = 2);

} // namespace fairgap

#endif // FAIRGAP_DATA_HPP

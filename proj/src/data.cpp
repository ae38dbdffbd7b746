#include "fairgap/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fairgap/errors.hpp"
#include "fairgap/rng.hpp"

namespace fairgap {

using ordered_json = nlohmann::ordered_json;

void Dataset::validate() const {
    if (n_samples() == 0 || feature_dim() == 0 || n_groups() == 0)
        throw IngestError("dataset: N, F and G must all be >= 1");
    if (labels.rows() != features.rows())
        throw IngestError("dataset: feature and label row counts disagree");
    if (group_names.size() != n_groups())
        throw IngestError("dataset: one group name per label column required");
    std::unordered_set<std::string> seen;
    for (const auto& name : group_names) {
        if (name.empty()) throw IngestError("dataset: empty group name");
        if (!seen.insert(name).second) throw IngestError("dataset: duplicate group name " + name);
    }
    if (!features.all_finite()) throw IngestError("dataset: non-finite feature entry");
    for (std::size_t i = 0; i < labels.rows(); ++i)
        for (std::size_t g = 0; g < labels.cols(); ++g)
            if (labels(i, g) != 0.0 && labels(i, g) != 1.0)
                throw IngestError("dataset: non-binary label at row " + std::to_string(i) +
                                  ", group " + group_names[g]);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.group_names = group_names;
    out.features = Matrix(indices.size(), feature_dim());
    out.labels = Matrix(indices.size(), n_groups());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t src = indices[r];
        if (src >= n_samples()) throw ShapeError("subset: index out of range");
        for (std::size_t c = 0; c < feature_dim(); ++c) out.features(r, c) = features(src, c);
        for (std::size_t g = 0; g < n_groups(); ++g) out.labels(r, g) = labels(src, g);
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (base_rates.empty()) throw ConfigError("synthetic: base_rates must be non-empty");
    for (double r : base_rates)
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("synthetic: base rates must lie in (0,1)");
    if (n_samples < n_groups() * 10)
        throw ConfigError("synthetic: n_samples must be at least 10 per group");
    if (feature_dim == 0) throw ConfigError("synthetic: feature_dim must be >= 1");
    if (!(separability >= 0.0) || !std::isfinite(separability))
        throw ConfigError("synthetic: separability must be finite and >= 0");
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale))
        throw ConfigError("synthetic: noise_scale must be finite and positive");
    if (!(correlation >= 0.0 && correlation <= 1.0))
        throw ConfigError("synthetic: correlation must lie in [0,1]");
    if (prototype_dim > feature_dim)
        throw ConfigError("synthetic: prototype_dim cannot exceed feature_dim");
    if (!group_names.empty() && group_names.size() != n_groups())
        throw ConfigError("synthetic: group_names must match base_rates");
}

Dataset generate(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n_samples;
    const std::size_t f_dim = spec.feature_dim;
    const std::size_t g_count = spec.n_groups();

    Dataset d;
    d.group_names = spec.group_names;
    if (d.group_names.empty())
        for (std::size_t g = 0; g < g_count; ++g) d.group_names.push_back("g" + std::to_string(g));

    // Fixed unit prototype per group. With prototype_dim < feature_dim the
    // prototypes are drawn inside a shared random subspace, so groups overlap
    // and interfere; the remaining coordinates carry only noise.
    const std::size_t proto_dim =
        spec.prototype_dim == 0 ? f_dim : std::min(spec.prototype_dim, f_dim);
    std::vector<std::vector<double>> prototypes(g_count, std::vector<double>(f_dim, 0.0));
    {
        auto rng = make_rng(spec.seed, 0x7072);
        std::normal_distribution<double> gauss(0.0, 1.0);
        // Random orthonormal basis of the prototype subspace (Gram-Schmidt on
        // Gaussian draws).
        std::vector<std::vector<double>> basis;
        while (basis.size() < proto_dim) {
            std::vector<double> v(f_dim);
            for (double& x : v) x = gauss(rng);
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t c = 0; c < f_dim; ++c) dot += v[c] * b[c];
                for (std::size_t c = 0; c < f_dim; ++c) v[c] -= dot * b[c];
            }
            double norm_sq = 0.0;
            for (double x : v) norm_sq += x * x;
            if (norm_sq < 1e-12) continue;
            const double norm = std::sqrt(norm_sq);
            for (double& x : v) x /= norm;
            basis.push_back(std::move(v));
        }
        for (auto& proto : prototypes) {
            std::vector<double> coeff(proto_dim);
            double norm_sq = 0.0;
            for (double& c : coeff) {
                c = gauss(rng);
                norm_sq += c * c;
            }
            const double norm = std::sqrt(norm_sq);
            for (std::size_t k = 0; k < proto_dim; ++k)
                for (std::size_t c = 0; c < f_dim; ++c)
                    proto[c] += (coeff[k] / norm) * basis[k][c];
        }
    }

    d.labels = Matrix(n, g_count);
    {
        auto rng = make_rng(spec.seed, 0x6c61);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            const bool shared_row = spec.correlation > 0.0 && unif(rng) < spec.correlation;
            if (shared_row) {
                // One shared variate for the whole row: marginals are kept,
                // groups become comonotone, so many-group rows appear.
                const double u = unif(rng);
                for (std::size_t g = 0; g < g_count; ++g)
                    d.labels(i, g) = u < spec.base_rates[g] ? 1.0 : 0.0;
            } else {
                for (std::size_t g = 0; g < g_count; ++g)
                    d.labels(i, g) = unif(rng) < spec.base_rates[g] ? 1.0 : 0.0;
            }
        }
    }

    d.features = Matrix(n, f_dim);
    {
        auto rng = make_rng(spec.seed, 0x6e6f);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < f_dim; ++c)
                d.features(i, c) = spec.noise_scale * gauss(rng);
            for (std::size_t g = 0; g < g_count; ++g) {
                if (d.labels(i, g) == 0.0) continue;
                for (std::size_t c = 0; c < f_dim; ++c)
                    d.features(i, c) += spec.separability * prototypes[g][c];
            }
        }
    }

    d.validate();
    return d;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

} // namespace

void save_dataset(const Dataset& d, const std::string& path, DatasetFormat format) {
    if (format != DatasetFormat::Csv) throw ConfigError("save_dataset: unsupported format");
    d.validate();
    std::ofstream out(path, std::ios::binary); // binary: LF endings everywhere
    if (!out) throw IngestError("save_dataset: cannot open " + path);
    for (std::size_t c = 0; c < d.feature_dim(); ++c) {
        if (c > 0) out << ',';
        out << 'f' << c;
    }
    for (const auto& name : d.group_names) out << ",g:" << name;
    out << '\n';
    for (std::size_t i = 0; i < d.n_samples(); ++i) {
        for (std::size_t c = 0; c < d.feature_dim(); ++c) {
            if (c > 0) out << ',';
            out << format_double(d.features(i, c));
        }
        for (std::size_t g = 0; g < d.n_groups(); ++g)
            out << ',' << (d.labels(i, g) != 0.0 ? '1' : '0');
        out << '\n';
    }
    if (!out) throw IngestError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
    if (format != DatasetFormat::Csv) throw ConfigError("load_dataset: unsupported format");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("load_dataset: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw IngestError("load_dataset: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    std::size_t f_dim = 0;
    std::vector<std::string> group_names;
    for (const auto& cell : header) {
        if (cell.rfind("g:", 0) == 0) {
            group_names.push_back(cell.substr(2));
        } else {
            if (!group_names.empty())
                throw IngestError("load_dataset: feature column after label columns in header");
            ++f_dim;
        }
    }
    if (f_dim == 0 || group_names.empty())
        throw IngestError("load_dataset: header must declare feature and g:-prefixed label columns");

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::vector<double>> label_rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = split_line(line);
        if (cells.size() != f_dim + group_names.size())
            throw IngestError("load_dataset: row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(f_dim + group_names.size()));
        std::vector<double> feats(f_dim);
        for (std::size_t c = 0; c < f_dim; ++c) {
            const auto& cell = cells[c];
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), feats[c]);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                throw IngestError("load_dataset: bad feature at row " + std::to_string(row) +
                                  ", column f" + std::to_string(c));
        }
        std::vector<double> labs(group_names.size());
        for (std::size_t g = 0; g < group_names.size(); ++g) {
            const auto& cell = cells[f_dim + g];
            if (cell == "0") {
                labs[g] = 0.0;
            } else if (cell == "1") {
                labs[g] = 1.0;
            } else {
                throw IngestError("load_dataset: non-binary label '" + cell + "' at row " +
                                  std::to_string(row) + ", group " + group_names[g]);
            }
        }
        feature_rows.push_back(std::move(feats));
        label_rows.push_back(std::move(labs));
    }

    Dataset d;
    d.features = Matrix::from_rows(feature_rows);
    d.labels = Matrix::from_rows(label_rows);
    d.group_names = group_names;
    d.validate();
    return d;
}

SplitIndices stratified_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
    d.validate();
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("stratified_split: test_fraction must lie in (0,1)");

    const std::size_t n = d.n_samples();
    const std::size_t g_count = d.n_groups();

    // Strata are the exact label combinations, keyed for deterministic order.
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) {
        std::string key(g_count, '0');
        for (std::size_t g = 0; g < g_count; ++g)
            if (d.labels(i, g) != 0.0) key[g] = '1';
        strata[key].push_back(i);
    }

    SplitIndices split;
    for (std::size_t g = 0; g < g_count; ++g) {
        std::int64_t positives = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (d.labels(i, g) != 0.0) ++positives;
        if (positives > 0 && positives < static_cast<std::int64_t>(strata.size()))
            split.warnings.push_back("group '" + d.group_names[g] + "' has fewer positives (" +
                                     std::to_string(positives) + ") than strata (" +
                                     std::to_string(strata.size()) +
                                     "); stratification is best-effort for it");
    }

    // Largest-remainder apportionment of the test quota across strata.
    const std::size_t test_target =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    std::vector<std::size_t> base_alloc;
    std::vector<std::pair<double, std::size_t>> remainders; // (-remainder, stratum idx)
    std::size_t allocated = 0;
    std::size_t idx = 0;
    for (const auto& [key, members] : strata) {
        const double quota = test_fraction * static_cast<double>(members.size());
        const auto base = static_cast<std::size_t>(std::floor(quota));
        base_alloc.push_back(base);
        allocated += base;
        remainders.emplace_back(-(quota - std::floor(quota)), idx++);
    }
    std::sort(remainders.begin(), remainders.end());
    std::size_t leftover = test_target > allocated ? test_target - allocated : 0;
    for (const auto& [neg_rem, stratum_idx] : remainders) {
        if (leftover == 0) break;
        ++base_alloc[stratum_idx];
        --leftover;
    }

    auto rng = make_rng(seed, 0x7370);
    idx = 0;
    for (auto& [key, members] : strata) {
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t take = std::min(base_alloc[idx++], members.size());
        for (std::size_t k = 0; k < members.size(); ++k)
            (k < take ? split.test_indices : split.train_indices).push_back(members[k]);
    }
    std::sort(split.test_indices.begin(), split.test_indices.end());
    std::sort(split.train_indices.begin(), split.train_indices.end());
    return split;
}

std::vector<ClassWeight> class_weights(const Dataset& d) {
    d.validate();
    const auto n = static_cast<double>(d.n_samples());
    std::vector<ClassWeight> weights(d.n_groups());
    for (std::size_t g = 0; g < d.n_groups(); ++g) {
        std::int64_t positives = 0;
        for (std::size_t i = 0; i < d.n_samples(); ++i)
            if (d.labels(i, g) != 0.0) ++positives;
        const std::int64_t negatives = static_cast<std::int64_t>(d.n_samples()) - positives;
        if (positives == 0 || negatives == 0) {
            weights[g].defined = false;
            continue;
        }
        weights[g].pos = n / (2.0 * static_cast<double>(positives));
        weights[g].neg = n / (2.0 * static_cast<double>(negatives));
    }
    return weights;
}

PrevalenceStats prevalence_stats(const Dataset& d) {
    d.validate();
    PrevalenceStats stats;
    stats.group_names = d.group_names;
    stats.n_samples = d.n_samples();
    stats.positives_per_group.assign(d.n_groups(), 0);
    stats.labels_per_row_histogram.assign(d.n_groups() + 1, 0);
    for (std::size_t i = 0; i < d.n_samples(); ++i) {
        std::size_t row_positives = 0;
        for (std::size_t g = 0; g < d.n_groups(); ++g) {
            if (d.labels(i, g) != 0.0) {
                ++stats.positives_per_group[g];
                ++row_positives;
            }
        }
        ++stats.labels_per_row_histogram[row_positives];
    }
    return stats;
}

std::string prevalence_to_json(const PrevalenceStats& stats, int indent) {
    ordered_json doc;
    doc["n_samples"] = stats.n_samples;
    ordered_json per_group = ordered_json::object();
    for (std::size_t g = 0; g < stats.group_names.size(); ++g)
        per_group[stats.group_names[g]] = stats.positives_per_group[g];
    doc["positives_per_group"] = per_group;
    doc["labels_per_row_histogram"] = stats.labels_per_row_histogram;
    return doc.dump(indent);
}

} // namespace fairgap

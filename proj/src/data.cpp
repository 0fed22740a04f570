#include "fedgkd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fedgkd/errors.hpp"
#include "fedgkd/rng.hpp"

namespace fedgkd {

void Dataset::validate() const {
    if (ys.empty()) throw DataError("dataset has no examples");
    if (xs.rows() != ys.size())
        throw DataError("dataset has " + std::to_string(xs.rows()) + " feature rows but " +
                        std::to_string(ys.size()) + " labels");
    for (int y : ys)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : ys) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.xs = Matrix(indices.size(), ds.feature_width());
    out.ys.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = ds.xs.row(indices[r]);
        std::copy(src.begin(), src.end(), out.xs.row(r).begin());
        out.ys.push_back(ds.ys[indices[r]]);
    }
    return out;
}

void PartitionSpec::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("partition.alpha", "must be > 0");
    if (num_clients < 1) throw ConfigError("federation.num_clients", "must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ConfigError("partition.val_fraction", "must be in [0, 1)");
}

int quadrant_label(double x, double y) noexcept {
    if (x >= 0.0) return y >= 0.0 ? 0 : 3;
    return y >= 0.0 ? 1 : 2;
}

Dataset gen_toy_dataset(std::size_t n, std::uint64_t seed) {
    if (n < 4) throw DataError("toy dataset needs n >= 4");
    Rng rng = make_rng(seed, Stream::toy_train);
    std::uniform_real_distribution<double> coord(-4.0, 4.0);
    auto draw = [&] {
        double v = coord(rng);
        while (v == -4.0) v = coord(rng);  // keep the interval open
        return v;
    };
    Dataset ds;
    ds.num_classes = 4;
    ds.xs = Matrix(n, 2);
    ds.ys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.xs(i, 0) = draw();
        ds.xs(i, 1) = draw();
        ds.ys[i] = quadrant_label(ds.xs(i, 0), ds.xs(i, 1));
    }
    return ds;
}

namespace {

std::vector<double> sample_dirichlet(double alpha, std::size_t k, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double total = 0.0;
    for (double& v : p) {
        v = gamma(rng);
        total += v;
    }
    if (!(total > 0.0)) {
        // Every draw underflowed (tiny alpha): put all mass on one client.
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::fill(p.begin(), p.end(), 0.0);
        p[pick(rng)] = 1.0;
        return p;
    }
    for (double& v : p) v /= total;
    return p;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& p, std::size_t total) {
    const std::size_t k = p.size();
    std::vector<std::size_t> counts(k);
    std::vector<double> rem(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = p[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    // Guard against floor overshoot from rounding in p.
    while (assigned > total) {
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[order[r % k]];
    return counts;
}

}  // namespace

std::vector<ClientShard> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
    spec.validate();
    ds.validate();
    const std::size_t k = spec.num_clients;
    if (k > ds.size())
        throw ConfigError("federation.num_clients", std::to_string(k) + " clients but only " +
                                                   std::to_string(ds.size()) + " examples");

    Rng rng = make_rng(spec.seed, Stream::partition);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (static_cast<std::size_t>(ds.ys[i]) == c) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto props = sample_dirichlet(spec.alpha, k, rng);
        if (idx.empty()) continue;
        const auto counts = largest_remainder(props, idx.size());
        std::size_t next = 0;
        for (std::size_t client = 0; client < k; ++client)
            for (std::size_t m = 0; m < counts[client]; ++m) members[client].push_back(idx[next++]);
    }

    for (std::size_t client = 0; client < k; ++client) {
        if (!members[client].empty()) continue;
        auto donor = std::max_element(members.begin(), members.end(),
                                      [](const auto& a, const auto& b) { return a.size() < b.size(); });
        members[client].push_back(donor->back());
        donor->pop_back();
    }

    std::vector<ClientShard> shards(k);
    for (std::size_t client = 0; client < k; ++client) {
        auto& idx = members[client];
        std::sort(idx.begin(), idx.end());
        shards[client].client_id = client;
        shards[client].train = subset(ds, idx);
        shards[client].train_indices = std::move(idx);
        if (spec.val_fraction > 0.0)
            shards[client] = train_val_split(shards[client], spec.val_fraction,
                                             derive_seed(spec.seed, Stream::split, {client}));
    }
    return shards;
}

ClientShard train_val_split(const ClientShard& shard, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw ConfigError("partition.val_fraction", "must be in [0, 1)");
    if (fraction == 0.0) return shard;
    const std::size_t n = shard.num_samples();
    // The small slack keeps 0.1 * 100 from becoming 11 through representation error.
    const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (n_val >= n)
        throw DataError("client " + std::to_string(shard.client_id) + ": validation fraction " +
                        std::to_string(fraction) + " leaves no training examples (n_k = " + std::to_string(n) + ")");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> val_pos(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_pos(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    std::sort(val_pos.begin(), val_pos.end());
    std::sort(train_pos.begin(), train_pos.end());

    ClientShard out;
    out.client_id = shard.client_id;
    out.train = subset(shard.train, train_pos);
    out.val = subset(shard.train, val_pos);
    const bool have_src = shard.train_indices.size() == n;
    for (std::size_t p : train_pos) out.train_indices.push_back(have_src ? shard.train_indices[p] : p);
    for (std::size_t p : val_pos) out.val_indices.push_back(have_src ? shard.train_indices[p] : p);
    return out;
}

namespace {

double parse_double(std::string_view field, std::size_t line_no) {
    // Trim spaces; std::from_chars does not accept a leading '+'.
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
        throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "' as a number");
    return v;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    std::vector<double> features;
    std::vector<int> labels;
    std::size_t width = 0;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        std::vector<std::string_view> fields;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() < 2)
            throw DataError("line " + std::to_string(line_no) + ": need at least one feature and a label");
        if (width == 0) width = fields.size() - 1;
        if (fields.size() - 1 != width)
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " features, found " + std::to_string(fields.size() - 1));

        for (std::size_t f = 0; f < width; ++f) features.push_back(parse_double(fields[f], line_no));
        const double label = parse_double(fields.back(), line_no);
        if (label != std::floor(label) || label < 0.0 || label >= static_cast<double>(num_classes))
            throw DataError("line " + std::to_string(line_no) + ": label " + std::string(fields.back()) +
                            " outside [0, " + std::to_string(num_classes) + ")");
        labels.push_back(static_cast<int>(label));
    }
    if (labels.empty()) throw DataError(path.string() + ": no examples");

    Dataset ds;
    ds.num_classes = num_classes;
    ds.xs = Matrix(labels.size(), width);
    ds.xs.values() = std::move(features);
    ds.ys = std::move(labels);
    return ds;
}

}  // namespace fedgkd

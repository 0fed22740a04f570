#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fedgkd/data.hpp"
#include "fedgkd/errors.hpp"
#include "test_util.hpp"

using namespace fedgkd;

TEST_CASE("quadrant labelling rule") {
    CHECK(quadrant_label(1, 1) == 0);
    CHECK(quadrant_label(-1, 1) == 1);
    CHECK(quadrant_label(-1, -1) == 2);
    CHECK(quadrant_label(1, -1) == 3);
}

TEST_CASE("toy dataset: open square, quadrant labels, balanced, deterministic") {
    const Dataset ds = gen_toy_dataset(4000, 7);
    CHECK(ds.size() == 4000);
    CHECK(ds.num_classes == 4);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.xs(i, 0) > -4.0);
        CHECK(ds.xs(i, 0) < 4.0);
        CHECK(ds.xs(i, 1) > -4.0);
        CHECK(ds.xs(i, 1) < 4.0);
        CHECK(ds.ys[i] == quadrant_label(ds.xs(i, 0), ds.xs(i, 1)));
    }
    for (std::size_t count : ds.class_counts()) CHECK(std::abs(static_cast<double>(count) - 1000.0) <= 4.0 * std::sqrt(4000.0));
    CHECK(gen_toy_dataset(50, 3).xs == gen_toy_dataset(50, 3).xs);
    CHECK_FALSE(gen_toy_dataset(50, 3).xs == gen_toy_dataset(50, 4).xs);
    CHECK_THROWS(gen_toy_dataset(3, 1));
}

namespace {

Dataset balanced(std::size_t per_class, std::size_t classes) {
    Dataset ds;
    ds.num_classes = classes;
    ds.xs = Matrix(per_class * classes, 1);
    for (std::size_t i = 0; i < per_class * classes; ++i) {
        ds.xs(i, 0) = static_cast<double>(i);
        ds.ys.push_back(static_cast<int>(i % classes));
    }
    return ds;
}

bool is_disjoint_cover(const std::vector<ClientShard>& shards, std::size_t n) {
    std::vector<std::size_t> all;
    for (const auto& s : shards) {
        all.insert(all.end(), s.train_indices.begin(), s.train_indices.end());
        all.insert(all.end(), s.val_indices.begin(), s.val_indices.end());
    }
    std::sort(all.begin(), all.end());
    if (all.size() != n) return false;
    for (std::size_t i = 0; i < n; ++i)
        if (all[i] != i) return false;
    return true;
}

}  // namespace

TEST_CASE("dirichlet_partition: K = 1 returns the dataset") {
    const Dataset ds = gen_toy_dataset(123, 1);
    PartitionSpec p;
    p.num_clients = 1;
    const auto shards = dirichlet_partition(ds, p);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].train.xs == ds.xs);
    CHECK(shards[0].train.ys == ds.ys);
}

TEST_CASE("dirichlet_partition: huge alpha splits every class evenly") {
    const Dataset ds = balanced(1000, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        PartitionSpec p{1e6, 4, seed, 0.0};
        for (const auto& s : dirichlet_partition(ds, p))
            for (std::size_t count : s.train.class_counts()) CHECK(std::abs(static_cast<double>(count) - 250.0) <= 0.05 * 250.0);
    }
}

TEST_CASE("dirichlet_partition: alpha = 0.1 with 20 clients leaves some client missing a class") {
    const Dataset ds = gen_toy_dataset(2000, 2);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        PartitionSpec p{0.1, 20, seed, 0.0};
        bool missing = false;
        for (const auto& s : dirichlet_partition(ds, p)) {
            const auto counts = s.train.class_counts();
            missing = missing || std::count(counts.begin(), counts.end(), 0u) > 0;
        }
        CHECK(missing);
    }
}

TEST_CASE("dirichlet_partition property: disjoint cover without empty shards, deterministic") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 20 + rng() % 300;
        PartitionSpec p;
        p.alpha = std::pow(10.0, -2.0 + 4.0 * std::uniform_real_distribution<double>(0, 1)(rng));
        p.num_clients = 1 + rng() % std::min<std::size_t>(n, 30);
        p.seed = rng();
        p.val_fraction = (trial % 3 == 0) ? 0.2 : 0.0;
        const Dataset ds = gen_toy_dataset(n, rng());
        std::vector<ClientShard> shards;
        try {
            shards = dirichlet_partition(ds, p);
        } catch (const DataError&) {
            // A one-example shard cannot give up a validation row; only legal with a split.
            CHECK(p.val_fraction > 0.0);
            continue;
        }
        CHECK(shards.size() == p.num_clients);
        CHECK(is_disjoint_cover(shards, n));
        for (const auto& s : shards) CHECK(s.num_samples() >= 1);
        const auto again = dirichlet_partition(ds, p);
        for (std::size_t k = 0; k < shards.size(); ++k) CHECK(again[k].train_indices == shards[k].train_indices);
    }
}

TEST_CASE("dirichlet_partition repairs empty shards and rejects K > n") {
    const Dataset ds = gen_toy_dataset(60, 5);
    const auto shards = dirichlet_partition(ds, PartitionSpec{0.01, 50, 3, 0.0});
    for (const auto& s : shards) CHECK(s.num_samples() >= 1);
    CHECK(is_disjoint_cover(shards, 60));
    CHECK_THROWS_AS(dirichlet_partition(ds, PartitionSpec{1.0, 61, 0, 0.0}), ConfigError);
    CHECK_THROWS_AS(dirichlet_partition(ds, PartitionSpec{0.0, 2, 0, 0.0}), ConfigError);
}

TEST_CASE("train_val_split") {
    ClientShard shard;
    shard.client_id = 3;
    shard.train = gen_toy_dataset(100, 8);
    for (std::size_t i = 0; i < 100; ++i) shard.train_indices.push_back(1000 + i);

    const ClientShard none = train_val_split(shard, 0.0, 1);
    CHECK_FALSE(none.val.has_value());
    CHECK(none.train.xs == shard.train.xs);

    const ClientShard split = train_val_split(shard, 0.1, 1);
    REQUIRE(split.val.has_value());
    CHECK(split.val->size() == 10);
    CHECK(split.train.size() == 90);
    std::vector<std::size_t> all = split.train_indices;
    all.insert(all.end(), split.val_indices.begin(), split.val_indices.end());
    std::sort(all.begin(), all.end());
    CHECK(all == shard.train_indices);
    CHECK(train_val_split(shard, 0.1, 1).val_indices == split.val_indices);
    CHECK_FALSE(train_val_split(shard, 0.1, 2).val_indices == split.val_indices);

    ClientShard tiny;
    tiny.train = gen_toy_dataset(4, 1);
    tiny.train = subset(tiny.train, std::vector<std::size_t>{0});
    CHECK_THROWS_AS(train_val_split(tiny, 0.5, 1), DataError);
    CHECK_THROWS_AS(train_val_split(shard, 1.0, 1), ConfigError);
}

TEST_CASE("load_csv_dataset") {
    const auto dir = testutil::temp_dir("csv");
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream(dir / name) << body;
        return dir / name;
    };

    const Dataset one = load_csv_dataset(write("one.csv", "0.5,1.0,2\n"), 3);
    CHECK(one.size() == 1);
    CHECK(one.xs(0, 0) == 0.5);
    CHECK(one.xs(0, 1) == 1.0);
    CHECK(one.ys[0] == 2);

    const Dataset order = load_csv_dataset(write("order.csv", "1,0\n2,1\n\n3,0\n"), 2);
    CHECK(order.ys == std::vector<int>{0, 1, 0});
    CHECK(order.xs(2, 0) == 3.0);

    try {
        load_csv_dataset(write("bad_label.csv", "0.1,0\n0.2,3\n"), 3);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        load_csv_dataset(write("empty.csv", ""), 3);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("no examples") != std::string::npos);
    }
    try {
        load_csv_dataset(write("garbage.csv", "1,2,0\n1,x,0\n"), 3);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(load_csv_dataset(write("ragged.csv", "1,2,0\n1,0\n"), 3), DataError);
    CHECK_THROWS_AS(load_csv_dataset(write("frac.csv", "1,0.5\n"), 3), DataError);
    CHECK_THROWS_AS(load_csv_dataset(dir / "nope.csv", 3), DataError);
}

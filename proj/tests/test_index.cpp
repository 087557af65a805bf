#include <doctest.h>

#include <random>

#include "memforest/errors.hpp"
#include "memforest/index.hpp"
#include "support/fixtures.hpp"

using namespace memforest;
using namespace memforest::test;

namespace {

std::vector<float> unit(std::size_t dim, std::size_t axis) {
    std::vector<float> v(dim, 0.0f);
    v[axis] = 1.0f;
    return v;
}

}  // namespace

TEST_CASE("upsert replaces, remove deletes, dimensions are enforced") {
    VectorIndex index;
    index.upsert(IndexRow{1, 0, unit(8, 0), "a"});
    index.upsert(IndexRow{1, 0, unit(8, 1), "a2"});
    CHECK(index.size() == 1);
    CHECK(index.find(1)->text == "a2");
    CHECK(index.find(1)->vector[1] == doctest::Approx(1.0f));

    CHECK(index.remove(1));
    CHECK_FALSE(index.remove(1));
    CHECK(index.search(unit(8, 1), 3).empty());

    index.upsert(IndexRow{2, 0, unit(8, 0), "b"});
    CHECK_THROWS_AS(index.upsert(IndexRow{3, 0, unit(7, 0), "c"}), InputError);
}

TEST_CASE("search ranks by cosine with deterministic tie-breaks") {
    VectorIndex index;
    index.upsert(IndexRow{10, 0, unit(8, 0), "x"});
    index.upsert(IndexRow{20, 0, unit(8, 1), "y"});
    index.upsert(IndexRow{30, 0, unit(8, 1), "y2"});

    SUBCASE("self match scores 1.0 and ranks first") {
        auto hits = index.search(unit(8, 0), 2);
        REQUIRE_FALSE(hits.empty());
        CHECK(hits[0].key == 10);
        CHECK(hits[0].score == doctest::Approx(1.0));
    }
    SUBCASE("orthogonal rows score 0 and tie to the lower key") {
        auto hits = index.search(unit(8, 1), 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].key == 20);  // ties: 20 before 30
        CHECK(hits[1].key == 30);
        CHECK(hits[2].key == 10);
        CHECK(hits[2].score == doctest::Approx(0.0));
    }
    SUBCASE("fewer rows than K returns everything") {
        CHECK(index.search(unit(8, 0), 99).size() == 3);
    }
    SUBCASE("empty index returns an empty list") {
        VectorIndex empty;
        CHECK(empty.search(unit(8, 0), 5).empty());
    }
}

TEST_CASE("search equals the brute-force oracle on random stores") {
    std::mt19937 rng(99);
    for (std::size_t rows : {5u, 64u, 500u}) {
        VectorIndex index;
        std::map<std::uint64_t, std::vector<float>> oracle_rows;
        for (std::size_t i = 1; i <= rows; ++i) {
            std::vector<float> v(16);
            for (float& x : v) x = static_cast<float>(rng() % 2000) / 1000.0f - 1.0f;
            bool zero = true;
            for (float x : v) zero &= x == 0.0f;
            if (zero) v[0] = 1.0f;
            index.upsert(IndexRow{i, 0, v, "row"});
            // The oracle sees the same unit-normalized rows the index stores.
            oracle_rows[i] = index.find(i)->vector;
        }
        for (int q = 0; q < 25; ++q) {
            std::vector<float> query(16);
            for (float& x : query) x = static_cast<float>(rng() % 2000) / 1000.0f - 1.0f;
            for (std::size_t k : {1u, 5u, 10u}) {
                auto got = index.search(query, k);
                auto want = brute_force_topk(oracle_rows, query, k);
                REQUIRE(got.size() == want.size());
                for (std::size_t i = 0; i < got.size(); ++i) {
                    CHECK(got[i].key == want[i].first);
                    CHECK(got[i].score == doctest::Approx(want[i].second).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("rows are stored unit-normalized") {
    VectorIndex index;
    std::vector<float> big(4, 3.0f);
    index.upsert(IndexRow{1, 0, big, "n"});
    double norm = 0.0;
    for (float x : index.find(1)->vector) norm += static_cast<double>(x) * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(index.upsert(IndexRow{2, 0, std::vector<float>(4, 0.0f), "z"}), InputError);
}

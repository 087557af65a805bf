#pragma once

// Exact top-K cosine search over unit-normalized rows. Brute force by design:
// desk-scale stores top out around 10K rows and exactness is the contract.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memforest/substrate.hpp"

namespace memforest {

struct IndexRow {
    std::uint64_t key = 0;   // node_id or fact_id
    std::uint64_t owner = 0; // tree_id for node rows, 0 for fact rows
    std::vector<float> vector;  // unit L2 norm
    std::string text;           // the embedded summary/fact text
};

struct SearchHit {
    std::uint64_t key = 0;
    double score = 0.0;  // cosine, descending; ties break to lower key
};

class VectorIndex {
public:
    VectorIndex() = default;
    explicit VectorIndex(std::size_t dim) : dim_(dim) {}

    // Replaces existing keys; vectors are normalized on the way in.
    // Dimension mismatches throw InputError.
    std::size_t upsert(IndexRow row);
    std::size_t upsert(std::vector<IndexRow> rows);
    // For rows that are already unit vectors (snapshot reloads, verbatim
    // copies); renormalizing would perturb them bit-wise.
    std::size_t put_prenormalized(IndexRow row);
    bool remove(std::uint64_t key);
    void clear();

    std::vector<SearchHit> search(const std::vector<float>& query, std::size_t k) const;

    bool contains(std::uint64_t key) const { return rows_.count(key) > 0; }
    const IndexRow* find(std::uint64_t key) const;
    std::size_t size() const { return rows_.size(); }
    std::size_t dimension() const { return dim_; }
    const std::map<std::uint64_t, IndexRow>& rows() const { return rows_; }

private:
    std::size_t dim_ = 0;  // fixed by first row
    std::map<std::uint64_t, IndexRow> rows_;
};

double cosine(const std::vector<float>& a, const std::vector<float>& b);
void normalize(std::vector<float>& v);

}  // namespace memforest

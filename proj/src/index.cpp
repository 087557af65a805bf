#include "memforest/index.hpp"

#include <algorithm>
#include <cmath>

#include "memforest/errors.hpp"

namespace memforest {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void normalize(std::vector<float>& v) {
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw InputError("cannot index a zero vector");
    for (float& x : v) x = static_cast<float>(x / norm);
}

std::size_t VectorIndex::upsert(IndexRow row) {
    if (row.vector.empty()) throw InputError("index row vector is empty");
    if (dim_ == 0) dim_ = row.vector.size();
    if (row.vector.size() != dim_) {
        throw InputError("index dimension mismatch: row has " + std::to_string(row.vector.size()) +
                         ", index has " + std::to_string(dim_));
    }
    normalize(row.vector);
    rows_[row.key] = std::move(row);
    return 1;
}

std::size_t VectorIndex::upsert(std::vector<IndexRow> rows) {
    std::size_t n = 0;
    for (auto& r : rows) n += upsert(std::move(r));
    return n;
}

std::size_t VectorIndex::put_prenormalized(IndexRow row) {
    if (row.vector.empty()) throw InputError("index row vector is empty");
    if (dim_ == 0) dim_ = row.vector.size();
    if (row.vector.size() != dim_) {
        throw InputError("index dimension mismatch: row has " + std::to_string(row.vector.size()) +
                         ", index has " + std::to_string(dim_));
    }
    rows_[row.key] = std::move(row);
    return 1;
}

bool VectorIndex::remove(std::uint64_t key) {
    return rows_.erase(key) > 0;
}

void VectorIndex::clear() {
    rows_.clear();
}

const IndexRow* VectorIndex::find(std::uint64_t key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
}

std::vector<SearchHit> VectorIndex::search(const std::vector<float>& query, std::size_t k) const {
    if (k == 0 || rows_.empty()) return {};
    std::vector<float> q = query;
    double qnorm = 0.0;
    for (float x : q) qnorm += static_cast<double>(x) * x;
    qnorm = std::sqrt(qnorm);
    if (qnorm == 0.0) return {};
    for (float& x : q) x = static_cast<float>(x / qnorm);

    std::vector<SearchHit> hits;
    hits.reserve(rows_.size());
    for (const auto& [key, row] : rows_) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dim_ && i < row.vector.size(); ++i)
            dot += static_cast<double>(q[i]) * row.vector[i];
        hits.push_back(SearchHit{key, dot});
    }
    auto better = [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
    };
    if (hits.size() > k) {
        std::partial_sort(hits.begin(), hits.begin() + k, hits.end(), better);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), better);
    }
    return hits;
}

}  // namespace memforest

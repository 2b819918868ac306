#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensorspike/binomial.hpp"
#include "tensorspike/errors.hpp"

namespace tensorspike {

// Allocation guard for tensor payloads. 0 restores the default
// (TENSORSPIKE_MEM_CAP_GB env var, else 8 GiB).
void set_memory_cap_bytes(std::uint64_t bytes);
std::uint64_t memory_cap_bytes();

// n vectors in R^r, row-major.
class MultiVector {
public:
    MultiVector() = default;
    MultiVector(std::size_t n, std::size_t r) : n_(n), r_(r), rows_(n * r, 0.0) {
        if (r < 1) throw ShapeError("MultiVector needs r >= 1");
    }

    std::size_t n() const { return n_; }
    std::size_t r() const { return r_; }

    double* row(std::size_t i) { return rows_.data() + i * r_; }
    const double* row(std::size_t i) const { return rows_.data() + i * r_; }
    double& operator()(std::size_t i, std::size_t c) { return rows_[i * r_ + c]; }
    double operator()(std::size_t i, std::size_t c) const { return rows_[i * r_ + c]; }

    double* data() { return rows_.data(); }
    const double* data() const { return rows_.data(); }
    std::size_t size() const { return rows_.size(); }

    bool all_finite() const;

private:
    std::size_t n_ = 0, r_ = 1;
    std::vector<double> rows_;
};

// Order-p symmetric tensor over {0..n-1}, holding only the entries with
// strictly increasing indices, flat in colexicographic order. Immutable
// after construction; safe to share read-only across threads.
class SymmetricTensor {
public:
    SymmetricTensor(std::size_t n, std::size_t p);
    SymmetricTensor(std::size_t n, std::size_t p, std::vector<double> data);

    std::size_t n() const { return n_; }
    std::size_t p() const { return p_; }
    std::uint64_t size() const { return static_cast<std::uint64_t>(data_.size()); }

    std::span<const double> data() const { return {data_.data(), data_.size()}; }
    std::vector<double>& mutable_data() { return data_; }

    const BinomialTable& binomials() const { return binom_; }

    // rank of a strictly increasing 0-based tuple: sum_k C(idx[k], k+1)
    std::uint64_t rank_of(std::span<const std::size_t> sorted_idx) const;

    // accepts any order; sorts a copy and rejects repeated indices
    double at(std::span<const std::size_t> idx) const;
    double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

    void save(const std::string& path) const;
    static SymmetricTensor load(const std::string& path);

private:
    std::size_t n_ = 0, p_ = 0;
    BinomialTable binom_;
    std::vector<double> data_;
};

// For each i: prefactor * sum over i2<...<ip (all != i) of
// S[sort(i,i2..ip)] * prod_d factors[d][i_{d+2}] (componentwise over r).
// Parallelized over i with a fixed per-i summation order, so the result is
// reproducible across thread counts.
MultiVector contract_leave_one(const SymmetricTensor& s,
                               std::span<const MultiVector* const> factors,
                               double prefactor);
MultiVector contract_leave_one(const SymmetricTensor& s, const MultiVector& factor,
                               double prefactor);

// Colex tuple iteration helpers (0-based tuples).
void colex_first(std::size_t p, std::size_t* idx);
bool colex_next(std::size_t n, std::size_t p, std::size_t* idx);
void colex_unrank(std::uint64_t rank, std::size_t n, std::size_t p,
                  const BinomialTable& binom, std::size_t* idx);

// Visit tuples with flat ranks in [begin, end); fn(const std::size_t* idx, std::uint64_t rank).
template <typename Fn>
void for_each_tuple_range(std::size_t n, std::size_t p, const BinomialTable& binom,
                          std::uint64_t begin, std::uint64_t end, Fn&& fn) {
    if (begin >= end) return;
    std::vector<std::size_t> idx(p);
    colex_unrank(begin, n, p, binom, idx.data());
    for (std::uint64_t rank = begin; rank < end; ++rank) {
        fn(static_cast<const std::size_t*>(idx.data()), rank);
        if (rank + 1 < end) colex_next(n, p, idx.data());
    }
}

}  // namespace tensorspike

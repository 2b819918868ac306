#pragma once

#include <cstdint>
#include <vector>

#include "tensorspike/errors.hpp"

namespace tensorspike {

// Pascal-triangle table of C(i,k) for 0 <= i <= n_max, 0 <= k <= k_max.
// Built additively with overflow checks; lookups are O(1).
class BinomialTable {
public:
    BinomialTable() = default;

    BinomialTable(std::size_t n_max, std::size_t k_max)
        : n_max_(n_max), k_max_(k_max), c_((n_max + 1) * (k_max + 1), 0) {
        for (std::size_t i = 0; i <= n_max; ++i) {
            at(i, 0) = 1;
            for (std::size_t k = 1; k <= k_max && k <= i; ++k) {
                std::uint64_t a = (*this)(i - 1, k - 1);
                std::uint64_t b = (*this)(i - 1, k);
                if (a > UINT64_MAX - b)
                    throw CapacityError("binomial(" + std::to_string(i) + "," +
                                        std::to_string(k) + ") overflows 64 bits");
                at(i, k) = a + b;
            }
        }
    }

    std::uint64_t operator()(std::size_t i, std::size_t k) const {
        if (k > k_max_ || i > n_max_) throw IndexError("binomial table lookup out of range");
        if (k > i) return 0;
        return c_[i * (k_max_ + 1) + k];
    }

    // Raw row pointer for hot loops: row_k[i] == C(i,k) for i <= n_max.
    std::vector<std::uint64_t> row(std::size_t k) const {
        std::vector<std::uint64_t> out(n_max_ + 1);
        for (std::size_t i = 0; i <= n_max_; ++i) out[i] = (*this)(i, k);
        return out;
    }

    std::size_t n_max() const { return n_max_; }
    std::size_t k_max() const { return k_max_; }

private:
    std::uint64_t& at(std::size_t i, std::size_t k) { return c_[i * (k_max_ + 1) + k]; }

    std::size_t n_max_ = 0, k_max_ = 0;
    std::vector<std::uint64_t> c_;
};

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t out = 1;
    for (std::size_t j = 1; j <= k; ++j) {
        // out*(n-k+j) = j*C(n-k+j, j), so the division is exact
        std::uint64_t num = n - k + j;
        if (out > UINT64_MAX / num)
            throw CapacityError("binomial overflows 64 bits");
        out = out * num / j;
    }
    return out;
}

}  // namespace tensorspike

#include "tensorspike/sym_tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "tensorspike/parallel.hpp"

namespace tensorspike {

namespace {

constexpr std::uint64_t kDefaultCap = 8ULL << 30;

std::uint64_t default_cap_from_env() {
    if (const char* env = std::getenv("TENSORSPIKE_MEM_CAP_GB")) {
        char* end = nullptr;
        double gb = std::strtod(env, &end);
        if (end != env && gb > 0) return static_cast<std::uint64_t>(gb * (1ULL << 30));
    }
    return kDefaultCap;
}

std::atomic<std::uint64_t> g_mem_cap{0};

}  // namespace

void set_memory_cap_bytes(std::uint64_t bytes) { g_mem_cap.store(bytes); }

std::uint64_t memory_cap_bytes() {
    std::uint64_t cap = g_mem_cap.load();
    return cap ? cap : default_cap_from_env();
}

bool MultiVector::all_finite() const {
    for (double v : rows_)
        if (!std::isfinite(v)) return false;
    return true;
}

SymmetricTensor::SymmetricTensor(std::size_t n, std::size_t p)
    : n_(n), p_(p), binom_(n, p + 1) {
    if (p < 2) throw ShapeError("tensor order p must be >= 2");
    if (n < p) throw ShapeError("tensor dimension n must be >= p");
    std::uint64_t count = binom_(n, p);
    std::uint64_t bytes = count * sizeof(double);
    if (bytes > memory_cap_bytes())
        throw CapacityError("tensor payload " + std::to_string(bytes) +
                            " bytes exceeds memory cap " +
                            std::to_string(memory_cap_bytes()));
    data_.assign(count, 0.0);
}

SymmetricTensor::SymmetricTensor(std::size_t n, std::size_t p, std::vector<double> data)
    : SymmetricTensor(n, p) {
    if (data.size() != data_.size())
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match C(n,p) = " + std::to_string(data_.size()));
    data_ = std::move(data);
}

std::uint64_t SymmetricTensor::rank_of(std::span<const std::size_t> idx) const {
    if (idx.size() != p_) throw IndexError("tuple length does not match tensor order");
    std::uint64_t rank = 0;
    for (std::size_t k = 0; k < p_; ++k) {
        if (idx[k] >= n_) throw IndexError("index out of range");
        if (k > 0 && idx[k] <= idx[k - 1])
            throw IndexError("tuple is not strictly increasing");
        rank += binom_(idx[k], k + 1);
    }
    return rank;
}

double SymmetricTensor::at(std::span<const std::size_t> idx) const {
    std::vector<std::size_t> sorted(idx.begin(), idx.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (sorted[k] == sorted[k - 1])
            throw IndexError("repeated index: diagonal entries are not stored");
    return data_[rank_of(sorted)];
}

void colex_first(std::size_t p, std::size_t* idx) {
    for (std::size_t k = 0; k < p; ++k) idx[k] = k;
}

bool colex_next(std::size_t n, std::size_t p, std::size_t* idx) {
    for (std::size_t k = 0; k < p; ++k) {
        std::size_t limit = (k + 1 < p) ? idx[k + 1] : n;
        if (idx[k] + 1 < limit) {
            ++idx[k];
            for (std::size_t j = 0; j < k; ++j) idx[j] = j;
            return true;
        }
    }
    return false;
}

void colex_unrank(std::uint64_t rank, std::size_t n, std::size_t p,
                  const BinomialTable& binom, std::size_t* idx) {
    std::size_t hi = n;
    for (std::size_t k = p; k >= 1; --k) {
        // largest j < hi with C(j,k) <= rank
        std::size_t lo = k - 1, best = k - 1;
        std::size_t a = lo, b = hi;
        while (a < b) {
            std::size_t mid = a + (b - a) / 2;
            if (binom(mid, k) <= rank) {
                best = mid;
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        idx[k - 1] = best;
        rank -= binom(best, k);
        hi = best;
    }
}

namespace {

// Same-factor kernel: one pass over the payload in colex order. Each stored
// entry (j1<...<jp) contributes to its p outputs; a thread owns an output
// block and applies only the contributions landing inside it, so per-output
// accumulation follows the global colex order whatever the thread count.
// The innermost index j1 is contiguous in memory: the j1-sweep is a fused
// stride-1 axpy (into out) plus dot (for the higher positions).
void contract_scan(const SymmetricTensor& s, const MultiVector& x, double prefactor,
                   MultiVector& out) {
    const std::size_t n = s.n(), p = s.p(), r = x.r();
    const double* S = s.data().data();
    const BinomialTable& binom = s.binomials();

    parallel_for_blocks(n, [&](std::size_t lo, std::size_t hi) {
        std::vector<std::size_t> tail(p - 1);       // j2 < j3 < ... < jp
        std::vector<double> tail_prod(r);           // prod over the tail
        std::vector<double> leave(r * (p - 1));     // tail products leaving one out
        std::vector<double> dot(r);
        for (std::size_t k = 0; k < p - 1; ++k) tail[k] = k + 1;
        while (true) {
            const std::size_t j2 = tail[0];
            std::uint64_t base = 0;
            for (std::size_t k = 0; k < p - 1; ++k) base += binom(tail[k], k + 2);

            for (std::size_t c = 0; c < r; ++c) {
                double prod = 1.0;
                for (std::size_t k = 0; k < p - 1; ++k) prod *= x(tail[k], c);
                tail_prod[c] = prod;
                for (std::size_t k = 0; k < p - 1; ++k) {
                    double lv = 1.0;
                    for (std::size_t m = 0; m < p - 1; ++m)
                        if (m != k) lv *= x(tail[m], c);
                    leave[k * r + c] = lv;
                }
            }

            bool need_dot = false;
            for (std::size_t k = 0; k < p - 1; ++k)
                if (tail[k] >= lo && tail[k] < hi) need_dot = true;

            const double* row = S + base;
            const std::size_t alo = lo, ahi = std::min(hi, j2);
            if (r == 1) {
                const double cax = tail_prod[0];
                const double* xv = x.data();
                double* ov = out.data();
                for (std::size_t j = alo; j < ahi; ++j) ov[j] += row[j] * cax;
                if (need_dot) {
                    // full-range dot, fixed 4-lane association
                    double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                    std::size_t j = 0;
                    for (; j + 4 <= j2; j += 4) {
                        a0 += row[j] * xv[j];
                        a1 += row[j + 1] * xv[j + 1];
                        a2 += row[j + 2] * xv[j + 2];
                        a3 += row[j + 3] * xv[j + 3];
                    }
                    for (; j < j2; ++j) a0 += row[j] * xv[j];
                    double acc = (a0 + a1) + (a2 + a3);
                    for (std::size_t k = 0; k < p - 1; ++k) {
                        std::size_t t = tail[k];
                        if (t >= lo && t < hi) ov[t] += acc * leave[k];
                    }
                }
            } else {
                for (std::size_t j = alo; j < ahi; ++j) {
                    double v = row[j];
                    for (std::size_t c = 0; c < r; ++c) out(j, c) += v * tail_prod[c];
                }
                if (need_dot) {
                    std::fill(dot.begin(), dot.end(), 0.0);
                    for (std::size_t j = 0; j < j2; ++j) {
                        double v = row[j];
                        for (std::size_t c = 0; c < r; ++c) dot[c] += v * x(j, c);
                    }
                    for (std::size_t k = 0; k < p - 1; ++k) {
                        std::size_t t = tail[k];
                        if (t >= lo && t < hi)
                            for (std::size_t c = 0; c < r; ++c)
                                out(t, c) += dot[c] * leave[k * r + c];
                    }
                }
            }

            // advance the tail tuple in colex order
            std::size_t k = 0;
            for (; k < p - 1; ++k) {
                std::size_t limit = (k + 2 < p) ? tail[k + 1] : n;
                if (tail[k] + 1 < limit) {
                    ++tail[k];
                    for (std::size_t m = 0; m < k; ++m) tail[m] = m + 1;
                    break;
                }
            }
            if (k == p - 1) break;
        }
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t c = 0; c < r; ++c) out(i, c) *= prefactor;
    });
}

// Generic order: recursive colex enumeration of the p-1 companion indices,
// largest level outermost, carrying partial ranks and factor products.
struct GenericCtx {
    const double* S;
    const BinomialTable* binom;
    std::span<const MultiVector* const> factors;
    std::size_t n, p, r, i;
    std::vector<double> prod;  // (p-1) levels x r partial products
    double* acc;

    void run(double* acc_out) {
        acc = acc_out;
        for (std::size_t c = 0; c < r; ++c) acc[c] = 0.0;
        descend(p - 2, n, 0, 0);
    }

    // level d chooses the element at subtuple position d (0-based, ascending
    // values enumerated), elements strictly below limit, skipping i.
    void descend(std::size_t d, std::size_t limit, std::uint64_t partial,
                 std::size_t cnt_less) {
        const MultiVector& f = *factors[d];
        if (d == 0) {
            const std::size_t below_i = std::min(limit, i);
            if (below_i > 0) {
                // e < i: position 1; i sits at position cnt_less+2
                std::uint64_t base = partial + (*binom)(i, cnt_less + 2);
                const double* row = S + base;
                const double* parent = prod.data() + r;  // level-1 product
                for (std::size_t e = 0; e < below_i; ++e) {
                    double v = row[e];
                    for (std::size_t c = 0; c < r; ++c)
                        acc[c] += v * parent[c] * f(e, c);
                }
            }
            if (limit > i + 1) {
                // e > i: position 2; i sits at position cnt_less+1
                std::uint64_t base = partial + (*binom)(i, cnt_less + 1);
                const double* parent = prod.data() + r;
                for (std::size_t e = i + 1; e < limit; ++e) {
                    double v = S[base + (*binom)(e, 2)];
                    for (std::size_t c = 0; c < r; ++c)
                        acc[c] += v * parent[c] * f(e, c);
                }
            }
            return;
        }
        double* mine = prod.data() + d * r;
        const double* parent =
            (d == p - 2) ? nullptr : prod.data() + (d + 1) * r;
        for (std::size_t e = d; e < limit; ++e) {
            if (e == i) continue;
            std::size_t pos = d + 1 + (e > i ? 1 : 0);
            std::uint64_t part = partial + (*binom)(e, pos);
            for (std::size_t c = 0; c < r; ++c)
                mine[c] = (parent ? parent[c] : 1.0) * f(e, c);
            descend(d - 1, e, part, cnt_less + (e < i ? 1 : 0));
        }
    }
};

void contract_generic(const SymmetricTensor& s,
                      std::span<const MultiVector* const> factors, double prefactor,
                      MultiVector& out) {
    const std::size_t n = s.n(), p = s.p(), r = factors[0]->r();
    parallel_for_blocks(n, [&](std::size_t ib, std::size_t ie) {
        GenericCtx ctx;
        ctx.S = s.data().data();
        ctx.binom = &s.binomials();
        ctx.factors = factors;
        ctx.n = n;
        ctx.p = p;
        ctx.r = r;
        ctx.prod.assign((p - 1) * r + r, 1.0);  // extra row doubles as root product
        std::vector<double> acc(r);
        for (std::size_t i = ib; i < ie; ++i) {
            ctx.i = i;
            if (p == 2) {
                // level 0 only; parent product row must be ones
                std::fill(ctx.prod.begin(), ctx.prod.end(), 1.0);
            }
            ctx.run(acc.data());
            for (std::size_t c = 0; c < r; ++c) out(i, c) = prefactor * acc[c];
        }
    });
}

}  // namespace

MultiVector contract_leave_one(const SymmetricTensor& s,
                               std::span<const MultiVector* const> factors,
                               double prefactor) {
    const std::size_t p = s.p();
    if (factors.size() != p - 1)
        throw ShapeError("contract_leave_one needs p-1 factors");
    const std::size_t r = factors[0]->r();
    for (const MultiVector* f : factors) {
        if (f->n() != s.n()) throw ShapeError("factor dimension does not match tensor");
        if (f->r() != r) throw ShapeError("factors must share the same rank");
    }
    MultiVector out(s.n(), r);
    bool same = true;
    for (const MultiVector* f : factors)
        if (f != factors[0]) same = false;
    if (same)
        contract_scan(s, *factors[0], prefactor, out);
    else
        contract_generic(s, factors, prefactor, out);
    return out;
}

MultiVector contract_leave_one(const SymmetricTensor& s, const MultiVector& factor,
                               double prefactor) {
    std::vector<const MultiVector*> fs(s.p() - 1, &factor);
    return contract_leave_one(s, std::span<const MultiVector* const>(fs), prefactor);
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'I', 'K', 'T', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

}  // namespace

void SymmetricTensor::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(kMagic, 8);
    std::uint32_t version = kVersion;
    std::uint32_t p32 = static_cast<std::uint32_t>(p_);
    std::uint64_t n64 = static_cast<std::uint64_t>(n_);
    std::uint8_t dtype = kDtypeF64;
    char reserved[7] = {0};
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&p32), 4);
    out.write(reinterpret_cast<const char*>(&n64), 8);
    out.write(reinterpret_cast<const char*>(&dtype), 1);
    out.write(reserved, 7);
    out.write(reinterpret_cast<const char*>(data_.data()),
              static_cast<std::streamsize>(data_.size() * sizeof(double)));
    if (!out) throw FormatError("short write to " + path);
}

SymmetricTensor SymmetricTensor::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char magic[8];
    std::uint32_t version = 0, p32 = 0;
    std::uint64_t n64 = 0;
    std::uint8_t dtype = 0;
    char reserved[7];
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&p32), 4);
    in.read(reinterpret_cast<char*>(&n64), 8);
    in.read(reinterpret_cast<char*>(&dtype), 1);
    in.read(reserved, 7);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError(path + ": bad magic");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    if (dtype != kDtypeF64)
        throw FormatError(path + ": unsupported dtype " + std::to_string(dtype));
    if (p32 < 2) throw FormatError(path + ": tensor order p must be >= 2");
    if (n64 < p32) throw FormatError(path + ": n < p");
    SymmetricTensor t(static_cast<std::size_t>(n64), static_cast<std::size_t>(p32));
    std::streamsize bytes = static_cast<std::streamsize>(t.data_.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(t.data_.data()), bytes);
    if (in.gcount() != bytes) throw FormatError(path + ": truncated payload");
    in.peek();
    if (!in.eof()) throw FormatError(path + ": trailing bytes after payload");
    return t;
}

}  // namespace tensorspike

#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qrex/rng.hpp"

namespace qrex {

enum class ReplayOrder { Reverse, Forward, UniformRandomPermutation };

// Layout of a trajectory of T = K*N*(B+u) samples into K outer loops of N
// buffers. Each buffer block holds B usable transitions followed by a gap of
// u transitions that no update may consume (the gap's first element is read
// only as the bootstrap next-state of position B).
struct BufferPartition {
    std::int64_t K = 1, N = 1, B = 1, u = 0;

    std::int64_t block() const { return B + u; }     // S = B + u
    std::int64_t total() const { return K * N * block(); }

    // 1-based global index of intra-buffer element i of buffer (k, j)
    std::int64_t index(std::int64_t k, std::int64_t j, std::int64_t i) const {
        return N * block() * (k - 1) + block() * (j - 1) + i;
    }

    // true when 1-based global index t falls inside a gap
    bool in_gap(std::int64_t t) const {
        const std::int64_t within = (t - 1) % block();  // 0-based position within its block
        return within >= B;
    }
};

inline BufferPartition partition_stream(std::int64_t K, std::int64_t N, std::int64_t B,
                                        std::int64_t u) {
    if (K < 1 || N < 1 || B < 1)
        throw std::invalid_argument("partition_stream: K, N, B must be positive");
    if (u < 0) throw std::invalid_argument("partition_stream: u must be nonnegative");
    return BufferPartition{K, N, B, u};
}

// Order in which inner updates consume buffer positions, as a permutation of
// 1..B. Reverse emits B, B-1, ..., 1 (the i-th update consumes position
// B+1-i). Forward exists for ablations only.
inline std::vector<int> iteration_order(int B, ReplayOrder order, Rng& rng) {
    if (B < 1) throw std::invalid_argument("iteration_order: B must be >= 1");
    std::vector<int> idx(static_cast<std::size_t>(B));
    switch (order) {
        case ReplayOrder::Reverse:
            for (int i = 0; i < B; ++i) idx[static_cast<std::size_t>(i)] = B - i;
            break;
        case ReplayOrder::Forward:
            std::iota(idx.begin(), idx.end(), 1);
            break;
        case ReplayOrder::UniformRandomPermutation:
            std::iota(idx.begin(), idx.end(), 1);
            rng.shuffle(idx);
            break;
    }
    return idx;
}

// Classical-ER style sampling: B positions drawn uniformly with replacement.
inline std::vector<int> iteration_order_with_replacement(int B, Rng& rng) {
    if (B < 1) throw std::invalid_argument("iteration_order: B must be >= 1");
    std::vector<int> idx(static_cast<std::size_t>(B));
    for (auto& v : idx) v = 1 + rng.uniform_int(B);
    return idx;
}

}  // namespace qrex

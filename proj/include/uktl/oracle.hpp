#pragma once

#include "uktl/kernel.hpp"
#include "uktl/rng.hpp"
#include "uktl/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace uktl {

// Brute-force reference implementations, used only by tests and the
// acceptance suite. Deliberately literal and loop-based: they share no
// computation shortcuts with the modules they check.

/// Full Gram matrix of the tensor kernel via explicitly materialized
/// ambient projectors U U^T (uncertainty-weighted when sigmas given) and
/// literal entrywise Frobenius differences. sigmas, when present, holds
/// one sigma vector per tensor per mode.
Matrix brute_force_gram(const std::vector<Tensor>& tensors, const std::vector<int>& orders,
                        const KernelConfig& cfg,
                        const std::vector<std::vector<Vector>>* sigmas = nullptr);

/// Relative Frobenius error ||K_NN - G G^T||_F / ||K_NN||_F of the Nystrom
/// approximation for each pivot count. C == N uses the samples themselves
/// as pivots (the exactness identity); smaller C uses soft k-means.
std::vector<std::pair<int, double>> nystrom_error_curve(const std::vector<Tensor>& tensors,
                                                        const std::vector<int>& orders,
                                                        const KernelConfig& cfg,
                                                        const std::vector<int>& pivot_counts,
                                                        std::uint64_t seed);

/// Lloyd iterations on Frobenius distance; the temperature-limit oracle
/// for soft k-means. Deterministic given seed.
std::vector<Tensor> hard_kmeans(const std::vector<Tensor>& tensors, int num_centroids,
                                std::uint64_t seed, int max_iter = 100);

/// Seeded gaussian tensor, handy for property tests.
Tensor random_tensor(const std::vector<int>& dims, Rng& rng);

}  // namespace uktl

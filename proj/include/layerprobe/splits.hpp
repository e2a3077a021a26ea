#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace layerprobe {

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Stratified K-fold at item level. Members of each class (ascending class id)
/// are shuffled with one Rng seeded by `seed`, then dealt round-robin into
/// folds 0, 1, ..., k-1, 0, 1, ... so per-class fold sizes differ by at most 1.
///
/// Throws PreconditionError when k < 2 or some class has fewer than k members.
FoldAssignment stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

}  // namespace layerprobe

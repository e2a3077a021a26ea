#include "layerprobe/splits.hpp"

#include "layerprobe/error.hpp"
#include "layerprobe/random.hpp"

#include <map>
#include <string>

namespace layerprobe {

std::vector<std::size_t> FoldAssignment::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("k must be >= 2, got " + std::to_string(k));

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  for (const auto& [label, indices] : members) {
    if (indices.size() < static_cast<std::size_t>(k))
      throw PreconditionError("class " + std::to_string(label) + " has " + std::to_string(indices.size()) +
                              " < " + std::to_string(k) + " members");
  }
  if (members.empty()) throw PreconditionError("no labels to split");

  FoldAssignment assignment{k, seed, std::vector<int>(labels.size(), -1)};
  Rng rng(seed);
  for (auto& [label, indices] : members) {
    rng.shuffle(std::span<std::size_t>(indices));
    for (std::size_t j = 0; j < indices.size(); ++j) assignment.fold_of[indices[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  }
  return assignment;
}

}  // namespace layerprobe

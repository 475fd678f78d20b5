#pragma once

#include "fspc/dataset.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace fspc {

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 1;
  int q_query = 15;

  /// Throws Usage unless N >= 2, K >= 1, Q >= 0.
  void validate() const;
  int support_size() const { return n_way * k_shot; }
  int query_size() const { return n_way * q_query; }
};

/// One N-way K-shot Q-query task. Support is ordered by episode-local label then
/// shot; query likewise. class_remap sends original class ids to 0..N-1 in
/// ascending order of the original id.
struct Episode {
  std::vector<LabeledExample> support;
  std::vector<LabeledExample> query;
  std::map<int, int> class_remap;

  std::vector<int> support_labels() const;
  std::vector<int> query_labels() const;
  int n_way() const { return static_cast<int>(class_remap.size()); }
};

/// Classes uniformly without replacement, then K+Q instances per class uniformly
/// without replacement. A pure function of (pool, spec, seed).
Episode sample_episode(std::span<const LabeledExample> pool, const EpisodeSpec& spec,
                       std::uint64_t seed);

/// A lazily evaluated sequence of episodes; episode i is
/// sample_episode(pool, spec, derive_seed(seed, i)). The pool must outlive the stream.
class EpisodeStream {
 public:
  EpisodeStream(std::span<const LabeledExample> pool, EpisodeSpec spec, std::size_t count,
                std::uint64_t seed);

  std::size_t size() const noexcept { return count_; }
  Episode at(std::size_t index) const;
  std::vector<Episode> materialize() const;

 private:
  std::span<const LabeledExample> pool_;
  EpisodeSpec spec_;
  std::size_t count_;
  std::uint64_t seed_;
};

}  // namespace fspc

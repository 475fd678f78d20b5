#include "fspc/episode.hpp"

#include "fspc/rng.hpp"

#include <algorithm>
#include <numeric>

namespace fspc {

void EpisodeSpec::validate() const {
  if (n_way < 2) throw_usage("n_way must be at least 2");
  if (k_shot < 1) throw_usage("k_shot must be at least 1");
  if (q_query < 0) throw_usage("q_query must be non-negative");
}

std::vector<int> Episode::support_labels() const {
  std::vector<int> out;
  out.reserve(support.size());
  for (const auto& ex : support) out.push_back(class_remap.at(ex.class_id));
  return out;
}

std::vector<int> Episode::query_labels() const {
  std::vector<int> out;
  out.reserve(query.size());
  for (const auto& ex : query) out.push_back(class_remap.at(ex.class_id));
  return out;
}

namespace {

// First `take` entries of `items` become a uniform sample without replacement.
template <class T>
void partial_shuffle(std::vector<T>& items, std::size_t take, Rng& rng) {
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

}  // namespace

Episode sample_episode(std::span<const LabeledExample> pool, const EpisodeSpec& spec,
                       std::uint64_t seed) {
  spec.validate();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].class_id].push_back(i);

  const auto per_class = static_cast<std::size_t>(spec.k_shot + spec.q_query);
  std::vector<int> eligible;
  for (const auto& [cls, members] : by_class) {
    if (members.size() >= per_class) eligible.push_back(cls);
  }
  if (by_class.size() < static_cast<std::size_t>(spec.n_way)) {
    throw_data("insufficient classes: pool has " + std::to_string(by_class.size()) + ", need " +
               std::to_string(spec.n_way));
  }
  if (eligible.size() < static_cast<std::size_t>(spec.n_way)) {
    throw_data("insufficient per-class examples: need " + std::to_string(per_class) +
               " in at least " + std::to_string(spec.n_way) + " classes");
  }

  Rng rng = make_rng(seed);
  partial_shuffle(eligible, static_cast<std::size_t>(spec.n_way), rng);
  std::vector<int> chosen(eligible.begin(), eligible.begin() + spec.n_way);
  std::sort(chosen.begin(), chosen.end());

  Episode ep;
  for (int i = 0; i < spec.n_way; ++i) ep.class_remap[chosen[static_cast<std::size_t>(i)]] = i;
  ep.support.reserve(static_cast<std::size_t>(spec.support_size()));
  ep.query.reserve(static_cast<std::size_t>(spec.query_size()));
  for (int cls : chosen) {
    std::vector<std::size_t> members = by_class.at(cls);
    partial_shuffle(members, per_class, rng);
    for (int s = 0; s < spec.k_shot; ++s) ep.support.push_back(pool[members[static_cast<std::size_t>(s)]]);
    for (int q = 0; q < spec.q_query; ++q) {
      ep.query.push_back(pool[members[static_cast<std::size_t>(spec.k_shot + q)]]);
    }
  }
  return ep;
}

EpisodeStream::EpisodeStream(std::span<const LabeledExample> pool, EpisodeSpec spec,
                             std::size_t count, std::uint64_t seed)
    : pool_(pool), spec_(spec), count_(count), seed_(seed) {
  spec_.validate();
  if (count_ < 1) throw_usage("episode count must be at least 1");
}

Episode EpisodeStream::at(std::size_t index) const {
  return sample_episode(pool_, spec_, derive_seed(seed_, static_cast<std::uint64_t>(index)));
}

std::vector<Episode> EpisodeStream::materialize() const {
  std::vector<Episode> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) out.push_back(at(i));
  return out;
}

}  // namespace fspc

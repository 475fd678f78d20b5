#include "fspc/episode.hpp"
#include "fspc/rng.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace fspc;

namespace {

// `classes` classes of `per_class` one-point clouds; class ids start at `first`.
std::vector<LabeledExample> pool(int classes, int per_class, int first = 0) {
  std::vector<LabeledExample> out;
  std::int64_t id = 1000 * first;
  for (int c = first; c < first + classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Matrix p(1, 3);
      p << c, i, 0;
      out.push_back({PointCloud(p), c, id++});
    }
  }
  return out;
}

}  // namespace

TEST(EpisodeSpec, Validation) {
  EXPECT_NO_THROW((EpisodeSpec{5, 1, 15}.validate()));
  EXPECT_NO_THROW((EpisodeSpec{2, 1, 0}.validate()));
  EXPECT_THROW((EpisodeSpec{1, 1, 15}.validate()), Error);
  EXPECT_THROW((EpisodeSpec{5, 0, 15}.validate()), Error);
  EXPECT_THROW((EpisodeSpec{5, 1, -1}.validate()), Error);
}

TEST(SampleEpisode, FiveWayOneShotFifteenQuery) {
  const auto p = pool(8, 20);
  const Episode e = sample_episode(p, EpisodeSpec{5, 1, 15}, 3);
  EXPECT_EQ(e.support.size(), 5u);
  EXPECT_EQ(e.query.size(), 75u);
  EXPECT_EQ(e.n_way(), 5);
  const auto sl = e.support_labels();
  const auto ql = e.query_labels();
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(std::count(sl.begin(), sl.end(), c), 1);
    EXPECT_EQ(std::count(ql.begin(), ql.end(), c), 15);
  }
}

TEST(SampleEpisode, ZeroQueries) {
  const auto p = pool(2, 3);
  const Episode e = sample_episode(p, EpisodeSpec{2, 1, 0}, 0);
  EXPECT_EQ(e.support.size(), 2u);
  EXPECT_TRUE(e.query.empty());
}

TEST(SampleEpisode, RemapIsAscendingInOriginalIds) {
  const auto p = pool(10, 4);
  const Episode e = sample_episode(p, EpisodeSpec{4, 1, 2}, 17);
  int expected = 0;
  int prev = -1;
  for (const auto& [orig, local] : e.class_remap) {
    EXPECT_GT(orig, prev);
    EXPECT_EQ(local, expected++);
    prev = orig;
  }
  for (const auto& ex : e.support) EXPECT_TRUE(e.class_remap.count(ex.class_id));
}

TEST(SampleEpisode, ClassFrequencyIsUniform) {
  const auto p = pool(8, 20);
  std::map<int, int> seen;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    const Episode e = sample_episode(p, EpisodeSpec{5, 5, 15}, derive_seed(12345, static_cast<std::uint64_t>(i)));
    for (const auto& [c, local] : e.class_remap) ++seen[c];
  }
  ASSERT_EQ(seen.size(), 8u);
  for (const auto& [c, n] : seen) EXPECT_NEAR(static_cast<double>(n) / draws, 5.0 / 8.0, 0.05) << "class " << c;
}

TEST(SampleEpisode, NoInstanceReuse) {
  const auto p = pool(6, 7);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Episode e = sample_episode(p, EpisodeSpec{3, 2, 5}, s);
    std::set<std::int64_t> ids;
    for (const auto& ex : e.support) ids.insert(ex.instance_id);
    for (const auto& ex : e.query) ids.insert(ex.instance_id);
    EXPECT_EQ(ids.size(), 21u);
  }
}

TEST(SampleEpisode, InsufficientPool) {
  const auto p = pool(4, 20);
  try {
    sample_episode(p, EpisodeSpec{5, 1, 15}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("insufficient classes"), std::string::npos);
  }
  const auto small = pool(5, 10);
  try {
    sample_episode(small, EpisodeSpec{5, 1, 15}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient per-class examples"), std::string::npos);
  }
}

TEST(SampleEpisode, ClassesWithTooFewExamplesAreNotEligible) {
  auto p = pool(5, 20);
  const auto thin = pool(1, 3, 50);
  p.insert(p.end(), thin.begin(), thin.end());
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Episode e = sample_episode(p, EpisodeSpec{5, 1, 15}, s);
    EXPECT_EQ(e.class_remap.count(50), 0u);
  }
}

TEST(EpisodeStream, SevenHundredNovelEpisodes) {
  const auto novel = pool(10, 20, 30);
  const EpisodeStream stream(novel, EpisodeSpec{5, 1, 15}, 700, 8);
  const auto all = stream.materialize();
  ASSERT_EQ(all.size(), 700u);
  for (const auto& e : all) {
    for (const auto& [c, local] : e.class_remap) {
      EXPECT_GE(c, 30);
      EXPECT_LT(c, 40);
    }
  }
}

TEST(EpisodeStream, SingletonMatchesSampleEpisode) {
  const auto p = pool(8, 20);
  const EpisodeSpec spec{5, 1, 15};
  const Episode a = EpisodeStream(p, spec, 1, 77).at(0);
  const Episode b = sample_episode(p, spec, derive_seed(77, std::uint64_t{0}));
  ASSERT_EQ(a.support.size(), b.support.size());
  for (std::size_t i = 0; i < a.support.size(); ++i) EXPECT_EQ(a.support[i].instance_id, b.support[i].instance_id);
  for (std::size_t i = 0; i < a.query.size(); ++i) EXPECT_EQ(a.query[i].instance_id, b.query[i].instance_id);
}

TEST(EpisodeStream, EqualSeedsGiveEqualEpisodes) {
  const auto p = pool(8, 20);
  const EpisodeStream s1(p, EpisodeSpec{5, 1, 5}, 20, 4);
  const EpisodeStream s2(p, EpisodeSpec{5, 1, 5}, 20, 4);
  for (std::size_t i = 0; i < 20; ++i) {
    const Episode a = s1.at(i);
    const Episode b = s2.at(i);
    for (std::size_t j = 0; j < a.query.size(); ++j) EXPECT_EQ(a.query[j].instance_id, b.query[j].instance_id);
  }
}

TEST(EpisodeStream, RandomAccessMatchesSequentialOrder) {
  const auto p = pool(8, 20);
  const EpisodeStream s(p, EpisodeSpec{3, 1, 2}, 10, 4);
  const auto all = s.materialize();
  for (std::size_t i : {9u, 0u, 4u}) EXPECT_EQ(s.at(i).support[0].instance_id, all[i].support[0].instance_id);
}

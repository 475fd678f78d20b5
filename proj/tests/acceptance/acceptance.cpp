// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// when any criterion fails. Optional arguments select criteria by number.

#include "fspc/config.hpp"
#include "fspc/dataset.hpp"
#include "fspc/kernels.hpp"
#include "fspc/protonet.hpp"
#include "fspc/report.hpp"
#include "fspc/rng.hpp"
#include "fspc/training.hpp"
#include "../oracles.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

using namespace fspc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Desk pool: the eleven-class catalogue, 40 instances of 512 points each,
// the last five classes held out as novel.
constexpr int kDeskClasses = 11;
constexpr int kDeskNovel = 5;
constexpr int kDeskInstances = 40;
constexpr int kDeskPoints = 512;

struct DeskPool {
  std::vector<LabeledExample> base, novel;
  std::set<int> base_ids, novel_ids;
};

const DeskPool& desk_pool() {
  static const DeskPool pool = [] {
    DeskPool p;
    const auto catalogue = synthetic_catalogue(kDeskClasses);
    for (int c = 0; c < kDeskClasses; ++c) {
      const auto& spec = catalogue[static_cast<std::size_t>(c)];
      const auto cls = generate_synthetic_class(spec.family, spec.params, c, kDeskInstances, kDeskPoints,
                                                derive_seed(0, static_cast<std::uint64_t>(c)),
                                                static_cast<std::int64_t>(c) * kDeskInstances);
      const bool novel = c >= kDeskClasses - kDeskNovel;
      auto& side = novel ? p.novel : p.base;
      side.insert(side.end(), cls.begin(), cls.end());
      (novel ? p.novel_ids : p.base_ids).insert(c);
    }
    return p;
  }();
  return pool;
}

RowVector row(const Matrix& m) { return m.row(0); }

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (BackboneKind kind : {BackboneKind::PointNet, BackboneKind::Dgcnn}) {
    const GradCheckSetup s = tiny_gradcheck_setup(kind, CiaConfig{}, true, 0);
    const GradCheckReport r = grad_check(s.config, s.params, s.batch);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = std::string(to_string(kind)) + " " + r.worst_tensor;
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 60.0, fmt("max rel error %.3e (%s), %.2f s", worst, where.c_str(), t)};
}

Verdict normalization_invariants() {
  std::mt19937_64 rng(2);
  double sci_dev = 0.0, slot_dev = 0.0, prob_dev = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 2 + trial % 15;
    const SciParameters sp{oracle::random_matrix(d, d, rng), oracle::random_matrix(d, d, rng)};
    const RelationMap m = sci_relation(row(oracle::random_matrix(1, d, rng, -3, 3)), sp);
    for (int j = 0; j < d; ++j) sci_dev = std::max(sci_dev, std::abs(m.normalized.col(j).sum() - 1.0));

    const int k = trial % 5;
    const int h = 1 + trial % 7;
    const CifBranch b{oracle::random_matrix(h, k + 1, rng), oracle::random_matrix(1, h, rng),
                      oracle::random_matrix(k + 1, h, rng), oracle::random_matrix(1, k + 1, rng)};
    const Matrix w = cif_weights(row(oracle::random_matrix(1, d, rng, -3, 3)), oracle::random_matrix(k, d, rng, -3, 3), b);
    for (Eigen::Index c = 0; c < w.rows(); ++c) slot_dev = std::max(slot_dev, std::abs(w.row(c).sum() - 1.0));

    const Matrix probs = classify(oracle::random_matrix(2 + trial % 9, d, rng, -4, 4), oracle::random_matrix(5, d, rng, -4, 4));
    for (Eigen::Index j = 0; j < probs.rows(); ++j) prob_dev = std::max(prob_dev, std::abs(probs.row(j).sum() - 1.0));
  }
  const bool ok = sci_dev <= 1e-6 && slot_dev <= 1e-6 && prob_dev <= 1e-6;
  return {ok, fmt("max deviation: relation columns %.1e, slot weights %.1e, probability rows %.1e", sci_dev, slot_dev,
                  prob_dev)};
}

Verdict identity_reductions() {
  std::mt19937_64 rng(3);
  double dev = 0.0;
  int argmax_diff = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig plain;
    plain.backbone.kind = trial % 2 == 0 ? BackboneKind::Dgcnn : BackboneKind::PointNet;
    plain.backbone.layer_widths = {16, 16, 32};
    plain.backbone.k_neighbors = 8;
    plain.backbone.embed_dim = 32;
    plain.cia.hidden = 8;
    plain.with_cia = false;
    ModelConfig off = plain;
    off.with_cia = true;
    off.cia.sci = off.cia.cif = false;
    ModelConfig empty = off;
    empty.cia.cif = true;
    empty.cia.k1 = empty.cia.k2 = 0;

    EpisodeBatch b;
    b.n_way = 5;
    for (int c = 0; c < 5; ++c) {
      b.support.emplace_back(oracle::random_matrix(32, 3, rng));
      b.support_labels.push_back(c);
      for (int q = 0; q < 3; ++q) {
        b.query.emplace_back(oracle::random_matrix(32, 3, rng));
        b.query_labels.push_back(c);
      }
    }
    const auto seed = static_cast<std::uint64_t>(trial);
    const Matrix ref = forward_episode(plain, init_model(plain, seed), b, Mode::Eval).probs;
    for (const ModelConfig* cfg : {&off, &empty}) {
      const Matrix got = forward_episode(*cfg, init_model(*cfg, seed), b, Mode::Eval).probs;
      dev = std::max(dev, (got - ref).cwiseAbs().maxCoeff());
      for (Eigen::Index j = 0; j < ref.rows(); ++j) {
        Eigen::Index a = 0, r = 0;
        got.row(j).maxCoeff(&a);
        ref.row(j).maxCoeff(&r);
        argmax_diff += a != r;
      }
    }
  }
  return {argmax_diff == 0 && dev < 1e-9,
          fmt("100 episodes x 2 reductions: %d argmax changes, max probability deviation %.1e", argmax_diff, dev)};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(4);
  double e_sci = 0, e_cif = 0, e_edge = 0, e_cls = 0, e_loss = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 5;
    const SciParameters sp{oracle::random_matrix(d, d, rng, -0.7, 0.7), oracle::random_matrix(d, d, rng, -0.7, 0.7)};
    const Matrix f = oracle::random_matrix(1, d, rng, -2, 2);
    const RowVector s = sci_forward(row(f), sp);
    const auto ws = oracle::sci(oracle::to_vec(f), oracle::to_mat(sp.w_query), oracle::to_mat(sp.w_key));
    for (int i = 0; i < d; ++i) e_sci = std::max(e_sci, std::abs(s(i) - ws[static_cast<std::size_t>(i)]));

    const int k = 1 + trial % 3;
    const CifBranch b{oracle::random_matrix(3, k + 1, rng), oracle::random_matrix(1, 3, rng),
                      oracle::random_matrix(k + 1, 3, rng), oracle::random_matrix(1, k + 1, rng)};
    const Matrix a = oracle::random_matrix(1, d, rng, -2, 2);
    const Matrix sel = oracle::random_matrix(k, d, rng, -2, 2);
    const RowVector fused = cif_fuse(row(a), sel, b);
    const auto wf = oracle::cif(oracle::to_vec(a), oracle::to_mat(sel), oracle::to_mat(b.w1), oracle::to_vec(b.b1),
                                oracle::to_mat(b.w2), oracle::to_vec(b.b2));
    for (int i = 0; i < d; ++i) e_cif = std::max(e_cif, std::abs(fused(i) - wf[static_cast<std::size_t>(i)]));

    const Matrix x = oracle::random_matrix(4, 2, rng);
    const IndexMatrix nb = knn_graph(x, 1 + trial % 3);
    LinearParams layer;
    layer.weight = oracle::random_matrix(3, 4, rng, -0.6, 0.6);
    layer.bias = oracle::random_matrix(1, 3, rng);
    const Matrix got = edgeconv_layer(x, nb, layer);
    std::vector<std::vector<int>> nbrs;
    for (Eigen::Index i = 0; i < nb.rows(); ++i) nbrs.emplace_back(nb.row(i).data(), nb.row(i).data() + nb.cols());
    const auto we = oracle::edgeconv(oracle::to_mat(x), nbrs, oracle::to_mat(layer.weight), oracle::to_vec(layer.bias),
                                     nullptr);
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 3; ++c) e_edge = std::max(e_edge, std::abs(got(i, c) - we[i][c]));

    const Matrix P = oracle::random_matrix(5, d, rng);
    const Matrix Q = oracle::random_matrix(4, d, rng);
    const Matrix probs = classify(P, Q);
    const auto wc = oracle::classify(oracle::to_mat(P), oracle::to_mat(Q));
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i) e_cls = std::max(e_cls, std::abs(probs(j, i) - wc[j][i]));

    std::vector<int> y;
    for (int j = 0; j < 4; ++j) y.push_back(static_cast<int>(rng() % 5));
    e_loss = std::max(e_loss, std::abs(episode_loss(probs, y) - oracle::loss(oracle::to_mat(probs), y)));
  }
  const double worst = std::max({e_sci, e_cif, e_edge, e_cls, e_loss});
  return {worst < 1e-9, fmt("20 instances each; max abs error sci %.1e, cif %.1e, edgeconv %.1e, classify %.1e, "
                            "loss %.1e",
                            e_sci, e_cif, e_edge, e_cls, e_loss)};
}

Verdict permutation_invariance() {
  std::mt19937_64 rng(5);
  const auto& pool = desk_pool().base;
  std::vector<PointCloud> clouds;
  for (int i = 0; i < 100; ++i) {
    const auto& ex = pool[static_cast<std::size_t>(rng() % pool.size())];
    clouds.push_back(normalize_cloud(sample_points(ex.cloud, 128, rng())));
  }
  double dev = 0.0;
  for (BackboneKind kind : {BackboneKind::PointNet, BackboneKind::Dgcnn}) {
    BackboneConfig cfg = desk_profile().model.backbone;
    cfg.kind = kind;
    const BackboneParameters params = init_backbone(cfg, 5);
    const Matrix ref = embed(clouds, params, Mode::Eval);
    for (int p = 0; p < 5; ++p) {
      std::vector<PointCloud> shuffled;
      for (const auto& c : clouds) {
        std::vector<int> perm(static_cast<std::size_t>(c.size()));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix m(c.size(), 3);
        for (int i = 0; i < c.size(); ++i) m.row(i) = c.points().row(perm[static_cast<std::size_t>(i)]);
        shuffled.emplace_back(std::move(m));
      }
      dev = std::max(dev, (embed(shuffled, params, Mode::Eval) - ref).cwiseAbs().maxCoeff());
    }
  }
  return {dev < 1e-6, fmt("100 clouds x 5 permutations x 2 backbones: max deviation %.1e", dev)};
}

Verdict episode_protocol() {
  const DeskPool& pool = desk_pool();
  const EpisodeSpec spec{5, 1, 15};
  int bad = 0;
  for (int side = 0; side < 2; ++side) {
    const auto& examples = side == 0 ? pool.novel : pool.base;
    const auto& allowed = side == 0 ? pool.novel_ids : pool.base_ids;
    const EpisodeStream stream(examples, spec, 5000, derive_seed(6, static_cast<std::uint64_t>(side)));
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const Episode e = stream.at(i);
      std::set<std::int64_t> ids;
      bool ok = e.support.size() == 5 && e.query.size() == 75 && e.n_way() == 5;
      for (const auto* set : {&e.support, &e.query})
        for (const auto& ex : *set) {
          ok = ok && ids.insert(ex.instance_id).second && allowed.count(ex.class_id) == 1;
        }
      bad += !ok;
    }
  }
  return {bad == 0, fmt("10000 episodes (5000 base, 5000 novel side): %d violations", bad)};
}

struct DeskRun {
  double accuracy = 0.0;
  double ci = 0.0;
  double seconds = 0.0;
};

DeskRun desk_run(const std::string& setting, std::uint64_t seed) {
  TrainConfig cfg = desk_profile();
  cfg.seed = seed;
  cfg.model = ablation_model(cfg.model, setting);
  const DeskPool& pool = desk_pool();
  const auto t0 = Clock::now();
  const TrainOutcome o = fit(cfg, pool.base, pool.base, pool.novel);
  return {o.test.mean_accuracy, o.test.ci95_halfwidth, seconds_since(t0)};
}

std::vector<DeskRun>& protonet_runs() {
  static std::vector<DeskRun> runs;
  return runs;
}

DeskRun protonet_seed(std::uint64_t seed) {
  auto& runs = protonet_runs();
  while (runs.size() <= seed) runs.push_back(desk_run("ProtoNet", runs.size()));
  return runs[seed];
}

Verdict desk_learning() {
  const TrainConfig cfg = desk_profile();
  const DeskRun r = protonet_seed(0);
  return {r.accuracy >= 0.85 && r.seconds < 900.0,
          fmt("ProtoNet+%s %d-way %d-shot on %d novel episodes: %.2f%% +/- %.2f, %.0f s on %d thread(s)",
              std::string(to_string(cfg.model.backbone.kind)).c_str(), cfg.episode.n_way, cfg.episode.k_shot,
              cfg.test_episodes, 100 * r.accuracy, 100 * r.ci, r.seconds, omp_get_max_threads())};
}

Verdict directional_ablation() {
  double pn = 0.0, cia = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DeskRun a = protonet_seed(seed);
    const DeskRun b = desk_run("+CIA", seed);
    pn += a.accuracy / 5.0;
    cia += b.accuracy / 5.0;
    per_seed << fmt(" seed %llu: %.2f/%.2f;", static_cast<unsigned long long>(seed), 100 * a.accuracy, 100 * b.accuracy);
  }
  return {cia >= pn, fmt("mean ProtoNet %.2f%%, +CIA %.2f%% (ProtoNet/+CIA per seed:%s)", 100 * pn, 100 * cia,
                         per_seed.str().c_str())};
}

Verdict protocol_constants() {
  const TrainConfig p = profile_by_name("paper");
  bool ok = p.epochs == 80 && p.train_episodes == 400 && p.val_episodes == 600 && p.test_episodes == 700;
  const double want[] = {0.0008, 0.0004, 0.0002, 0.0001};
  for (int i = 0; i < 4; ++i) ok = ok && std::abs(lr_at(5 * i, p.optimizer) - want[i]) < 1e-15;
  ok = ok && std::abs(lr_at(4, p.optimizer) - 0.0008) < 1e-15;
  return {ok, fmt("epochs %d, episodes %d/%d/%d, lr %.4g %.4g %.4g at epochs 0 5 10", p.epochs, p.train_episodes,
                  p.val_episodes, p.test_episodes, lr_at(0, p.optimizer), lr_at(5, p.optimizer),
                  lr_at(10, p.optimizer))};
}

Verdict split_fixtures() {
  struct Want {
    const char* file;
    std::size_t base_classes, novel_classes;
    std::int64_t base, novel;
  };
  const Want wants[] = {{"modelnet40_fs.json", 30, 10, 9240, 3104}, {"shapenet70_fs.json", 50, 20, 21722, 8351}};
  bool ok = true;
  std::ostringstream detail;
  for (const Want& w : wants) {
    try {
      const SplitReport r = validate_split(read_manifest(std::filesystem::path(FSPC_MANIFEST_DIR) / w.file));
      ok = ok && r.disjoint && r.base_class_count == w.base_classes && r.novel_class_count == w.novel_classes &&
           r.base_example_count == w.base && r.novel_example_count == w.novel;
      detail << fmt(" %s %zu/%lld + %zu/%lld;", w.file, r.base_class_count, static_cast<long long>(r.base_example_count),
                    r.novel_class_count, static_cast<long long>(r.novel_example_count));
    } catch (const Error& e) {
      ok = false;
      detail << " " << w.file << ": " << e.what() << ";";
    }
  }
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion criteria[] = {
      {"gradient suite", gradient_suite},
      {"normalization invariants", normalization_invariants},
      {"identity reductions", identity_reductions},
      {"oracle equivalence", oracle_equivalence},
      {"permutation invariance", permutation_invariance},
      {"episode protocol", episode_protocol},
      {"desk-scale learning", desk_learning},
      {"directional ablation", directional_ablation},
      {"protocol constants", protocol_constants},
      {"split validation", split_fixtures},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (int i = 0; i < 10; ++i) {
    if (!selected.empty() && selected.count(i + 1) == 0) continue;
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

#include "fspc/dataset.hpp"

#include "fspc/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace fspc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

constexpr std::array<std::pair<ShapeFamily, std::string_view>, 8> kFamilyNames{{
    {ShapeFamily::Sphere, "sphere"},
    {ShapeFamily::Cube, "cube"},
    {ShapeFamily::Cylinder, "cylinder"},
    {ShapeFamily::Cone, "cone"},
    {ShapeFamily::Torus, "torus"},
    {ShapeFamily::Plane, "plane"},
    {ShapeFamily::Helix, "helix"},
    {ShapeFamily::Ellipsoid, "ellipsoid"},
}};

std::size_t expected_param_count(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Sphere:
    case ShapeFamily::Cube:
      return 1;
    case ShapeFamily::Cylinder:
    case ShapeFamily::Cone:
    case ShapeFamily::Torus:
    case ShapeFamily::Plane:
      return 2;
    case ShapeFamily::Helix:
    case ShapeFamily::Ellipsoid:
      return 3;
  }
  return 0;
}

void check_family_params(ShapeFamily family, std::span<const double> params) {
  if (params.size() != expected_param_count(family)) {
    throw_usage(std::string("wrong number of parameters for family ") +
                std::string(to_string(family)));
  }
  for (double p : params) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw_usage(std::string("non-positive dimension for family ") +
                  std::string(to_string(family)));
    }
  }
  if (family == ShapeFamily::Torus && params[1] >= params[0]) {
    throw_usage("torus minor radius must be smaller than the major radius");
  }
}

Eigen::Vector3d unit_vector(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Eigen::Vector3d sample_one(ShapeFamily family, std::span<const double> p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (family) {
    case ShapeFamily::Sphere:
      return p[0] * unit_vector(rng);
    case ShapeFamily::Cube: {
      const double h = 0.5 * p[0];
      const int face = static_cast<int>(unif(rng) * 6.0) % 6;
      const double a = (2.0 * unif(rng) - 1.0) * h;
      const double b = (2.0 * unif(rng) - 1.0) * h;
      const double s = (face % 2 == 0) ? h : -h;
      switch (face / 2) {
        case 0:
          return {s, a, b};
        case 1:
          return {a, s, b};
        default:
          return {a, b, s};
      }
    }
    case ShapeFamily::Cylinder: {
      const double r = p[0], height = p[1];
      const double lateral = 2.0 * kPi * r * height;
      const double cap = kPi * r * r;
      const double u = unif(rng) * (lateral + 2.0 * cap);
      const double theta = 2.0 * kPi * unif(rng);
      if (u < lateral) {
        return {r * std::cos(theta), r * std::sin(theta), (unif(rng) - 0.5) * height};
      }
      const double rho = r * std::sqrt(unif(rng));
      const double z = (u < lateral + cap) ? 0.5 * height : -0.5 * height;
      return {rho * std::cos(theta), rho * std::sin(theta), z};
    }
    case ShapeFamily::Cone: {
      // Apex at +height/2, base disc at -height/2.
      const double r = p[0], height = p[1];
      const double lateral = kPi * r * std::sqrt(r * r + height * height);
      const double base = kPi * r * r;
      const double theta = 2.0 * kPi * unif(rng);
      if (unif(rng) * (lateral + base) < lateral) {
        const double t = std::sqrt(unif(rng));  // fraction of the way from apex
        return {r * t * std::cos(theta), r * t * std::sin(theta), 0.5 * height - t * height};
      }
      const double rho = r * std::sqrt(unif(rng));
      return {rho * std::cos(theta), rho * std::sin(theta), -0.5 * height};
    }
    case ShapeFamily::Torus: {
      const double big = p[0], small = p[1];
      // Area element is proportional to (big + small*cos(phi)).
      for (;;) {
        const double theta = 2.0 * kPi * unif(rng);
        const double phi = 2.0 * kPi * unif(rng);
        const double w = (big + small * std::cos(phi)) / (big + small);
        if (unif(rng) <= w) {
          const double ring = big + small * std::cos(phi);
          return {ring * std::cos(theta), ring * std::sin(theta), small * std::sin(phi)};
        }
      }
    }
    case ShapeFamily::Plane:
      return {(unif(rng) - 0.5) * p[0], (unif(rng) - 0.5) * p[1], 0.0};
    case ShapeFamily::Helix: {
      // Constant-speed parametrisation, so uniform t is uniform in arc length.
      const double r = p[0], pitch = p[1], turns = p[2];
      const double t = unif(rng) * turns;
      const double angle = 2.0 * kPi * t;
      return {r * std::cos(angle), r * std::sin(angle), (t - 0.5 * turns) * pitch};
    }
    case ShapeFamily::Ellipsoid: {
      const double a = p[0], b = p[1], c = p[2];
      const double g_max = std::max({b * c, a * c, a * b});
      for (;;) {
        const Eigen::Vector3d u = unit_vector(rng);
        const double g = std::sqrt(std::pow(b * c * u.x(), 2) + std::pow(a * c * u.y(), 2) +
                                   std::pow(a * b * u.z(), 2));
        if (unif(rng) * g_max <= g) return {a * u.x(), b * u.y(), c * u.z()};
      }
    }
  }
  throw_usage("unknown shape family");
}

Eigen::Matrix3d rotation_about(Axis axis, double angle) {
  switch (axis) {
    case Axis::X:
      return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitX()).toRotationMatrix();
    case Axis::Y:
      return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()).toRotationMatrix();
    case Axis::Z:
      break;
  }
  return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace

PointCloud::PointCloud(Matrix points) : points_(std::move(points)) {
  if (points_.cols() != 3) throw_data("point cloud must have 3 columns");
  if (points_.rows() < 1) throw_data("point cloud must contain at least one point");
  if (!points_.allFinite()) throw_data("point cloud contains non-finite coordinates");
}

std::string_view to_string(ShapeFamily family) noexcept {
  for (const auto& [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "unknown";
}

ShapeFamily parse_shape_family(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames) {
    if (n == name) return f;
  }
  throw_usage("unknown shape family: " + std::string(name));
}

std::vector<double> default_family_params(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Sphere:
      return {1.0};
    case ShapeFamily::Cube:
      return {2.0};
    case ShapeFamily::Cylinder:
      return {0.5, 2.0};
    case ShapeFamily::Cone:
      return {1.0, 2.0};
    case ShapeFamily::Torus:
      return {1.0, 0.3};
    case ShapeFamily::Plane:
      return {2.0, 1.0};
    case ShapeFamily::Helix:
      return {1.0, 0.5, 3.0};
    case ShapeFamily::Ellipsoid:
      return {1.5, 1.0, 0.5};
  }
  return {};
}

Matrix sample_surface(ShapeFamily family, std::span<const double> params, int n_points,
                      std::uint64_t seed) {
  check_family_params(family, params);
  if (n_points < 1) throw_usage("n_points must be positive");
  Rng rng = make_rng(seed);
  Matrix out(n_points, 3);
  for (int i = 0; i < n_points; ++i) out.row(i) = sample_one(family, params, rng).transpose();
  return out;
}

std::vector<LabeledExample> generate_synthetic_class(ShapeFamily family,
                                                     std::span<const double> params,
                                                     int class_id, int count, int n_points,
                                                     std::uint64_t seed,
                                                     std::int64_t first_instance_id) {
  check_family_params(family, params);
  if (count < 1) throw_usage("count must be at least 1");
  if (n_points < 8) throw_usage("n_points must be at least 8");

  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t instance_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Matrix pts = sample_surface(family, params, n_points, derive_seed(instance_seed, "surface"));

    Rng rng = make_rng(derive_seed(instance_seed, "pose"));
    std::uniform_real_distribution<double> scale(0.85, 1.15);
    std::uniform_real_distribution<double> yaw(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> tilt(-0.15, 0.15);
    std::uniform_real_distribution<double> offset(-0.1, 0.1);
    const Eigen::Vector3d s(scale(rng), scale(rng), scale(rng));
    const Eigen::Matrix3d rot = rotation_about(Axis::Z, yaw(rng)) * rotation_about(Axis::X, tilt(rng));
    const Eigen::RowVector3d shift(offset(rng), offset(rng), offset(rng));

    Matrix posed = (pts * s.asDiagonal()) * rot.transpose();
    posed.rowwise() += shift;
    out.push_back({PointCloud(std::move(posed)), class_id, first_instance_id + i});
  }
  return out;
}

std::vector<SyntheticClass> synthetic_catalogue(int num_classes) {
  std::vector<SyntheticClass> base;
  for (const auto& [family, name] : kFamilyNames) {
    base.push_back({family, default_family_params(family), std::string(name)});
  }
  const std::vector<SyntheticClass> variants = {
      {ShapeFamily::Cylinder, {0.3, 2.5}, "tall_cylinder"},
      {ShapeFamily::Cone, {1.2, 0.8}, "flat_cone"},
      {ShapeFamily::Torus, {0.8, 0.45}, "fat_torus"},
      {ShapeFamily::Ellipsoid, {2.0, 0.6, 0.6}, "cigar"},
      {ShapeFamily::Helix, {0.6, 1.2, 2.0}, "stretched_helix"},
      {ShapeFamily::Cube, {1.0}, "small_cube"},
      {ShapeFamily::Plane, {3.0, 0.5}, "strip"},
      {ShapeFamily::Sphere, {0.5}, "small_sphere"},
  };
  const auto limit = base.size() + variants.size();
  if (num_classes < 1 || static_cast<std::size_t>(num_classes) > limit) {
    throw_usage("synthetic class count must be in [1, " + std::to_string(limit) + "]");
  }
  base.insert(base.end(), variants.begin(), variants.end());
  base.resize(static_cast<std::size_t>(num_classes));
  return base;
}

PointCloud sample_points(const PointCloud& cloud, int n, std::uint64_t seed) {
  if (n < 1) throw_usage("sample size must be positive");
  const auto available = static_cast<int>(cloud.size());
  Rng rng = make_rng(seed);
  Matrix out(n, 3);
  if (available >= n) {
    std::vector<int> idx(static_cast<std::size_t>(available));
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first n slots are a uniform sample without replacement.
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, available - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
      out.row(i) = cloud.points().row(idx[static_cast<std::size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, available - 1);
    for (int i = 0; i < n; ++i) out.row(i) = cloud.points().row(pick(rng));
  }
  return PointCloud(std::move(out));
}

void AugmentationConfig::validate() const {
  if (!(jitter_sigma >= 0.0)) throw_usage("jitter_sigma must be non-negative");
  if (!(jitter_clip > 0.0)) throw_usage("jitter_clip must be positive");
  if (!(angle_min >= 0.0) || !(angle_max <= 2.0 * kPi + 1e-12) || angle_min > angle_max) {
    throw_usage("rotation range must lie within [0, 2*pi]");
  }
}

PointCloud augment(const PointCloud& cloud, const AugmentationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed);
  Matrix pts = cloud.points();
  if (cfg.angle_max > 0.0) {
    const double angle = cfg.angle_min == cfg.angle_max
                             ? cfg.angle_min
                             : std::uniform_real_distribution<double>(cfg.angle_min, cfg.angle_max)(rng);
    pts = pts * rotation_about(cfg.axis, angle).transpose();
  }
  if (cfg.jitter_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.jitter_sigma);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      for (Eigen::Index c = 0; c < 3; ++c) {
        pts(i, c) += std::clamp(noise(rng), -cfg.jitter_clip, cfg.jitter_clip);
      }
    }
  }
  return PointCloud(std::move(pts));
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  Matrix pts = cloud.points();
  const Eigen::RowVector3d centroid = pts.colwise().mean();
  pts.rowwise() -= centroid;
  const double radius = pts.rowwise().norm().maxCoeff();
  if (radius > 0.0) {
    pts /= radius;
  } else {
    pts.setZero();
  }
  return PointCloud(std::move(pts));
}

double chamfer_distance(const Matrix& a, const Matrix& b) {
  auto one_way = [](const Matrix& from, const Matrix& to) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      total += (to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff();
    }
    return total / static_cast<double>(from.rows());
  };
  return one_way(a, b) + one_way(b, a);
}

// ---------------------------------------------------------------------------

bool SplitManifest::contains(int class_id, SplitSide side) const {
  const auto& v = side == SplitSide::Base ? base_classes : novel_classes;
  return std::find(v.begin(), v.end(), class_id) != v.end();
}

SplitReport validate_split(const SplitManifest& manifest) {
  const std::set<int> base(manifest.base_classes.begin(), manifest.base_classes.end());
  const std::set<int> novel(manifest.novel_classes.begin(), manifest.novel_classes.end());
  for (int c : base) {
    if (novel.count(c) != 0) {
      throw_data("overlap: class " + std::to_string(c) + " is both base and novel");
    }
  }
  if (base.size() != manifest.base_classes.size() || novel.size() != manifest.novel_classes.size()) {
    throw_data("duplicate class id in manifest");
  }

  SplitReport report;
  report.base_class_count = base.size();
  report.novel_class_count = novel.size();
  for (const auto& [cls, n] : manifest.class_counts) {
    if (base.count(cls) != 0) {
      report.base_example_count += n;
    } else if (novel.count(cls) != 0) {
      report.novel_example_count += n;
    } else {
      throw_data("class " + std::to_string(cls) + " is on neither side of the split");
    }
  }
  for (int c : base) {
    if (manifest.class_counts.count(c) == 0) throw_data("missing count for class " + std::to_string(c));
  }
  for (int c : novel) {
    if (manifest.class_counts.count(c) == 0) throw_data("missing count for class " + std::to_string(c));
  }
  if (report.base_example_count != manifest.base_examples) {
    throw_data("count mismatch: base examples sum to " + std::to_string(report.base_example_count) +
               ", declared " + std::to_string(manifest.base_examples));
  }
  if (report.novel_example_count != manifest.novel_examples) {
    throw_data("count mismatch: novel examples sum to " +
               std::to_string(report.novel_example_count) + ", declared " +
               std::to_string(manifest.novel_examples));
  }
  return report;
}

SplitManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open manifest " + path.string());
  SplitManifest m;
  try {
    const json j = json::parse(in);
    m.base_classes = j.at("base_classes").get<std::vector<int>>();
    m.novel_classes = j.at("novel_classes").get<std::vector<int>>();
    for (const auto& [key, value] : j.at("class_counts").items()) {
      m.class_counts[std::stoi(key)] = value.get<std::int64_t>();
    }
    m.base_examples = j.at("totals").at("base_examples").get<std::int64_t>();
    m.novel_examples = j.at("totals").at("novel_examples").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw_data("malformed manifest " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw_data("malformed manifest " + path.string() + ": non-integer class key");
  }
  return m;
}

void write_manifest(const SplitManifest& manifest, const fs::path& path) {
  json counts = json::object();
  for (const auto& [cls, n] : manifest.class_counts) counts[std::to_string(cls)] = n;
  const json j = {
      {"base_classes", manifest.base_classes},
      {"novel_classes", manifest.novel_classes},
      {"class_counts", counts},
      {"totals", {{"base_examples", manifest.base_examples}, {"novel_examples", manifest.novel_examples}}},
  };
  std::ofstream out(path);
  if (!out) throw_data("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

SplitManifest manifest_from_examples(std::span<const LabeledExample> examples,
                                     std::span<const int> novel_classes) {
  SplitManifest m;
  const std::set<int> novel(novel_classes.begin(), novel_classes.end());
  for (const auto& ex : examples) ++m.class_counts[ex.class_id];
  for (const auto& [cls, n] : m.class_counts) {
    if (novel.count(cls) != 0) {
      m.novel_classes.push_back(cls);
      m.novel_examples += n;
    } else {
      m.base_classes.push_back(cls);
      m.base_examples += n;
    }
  }
  return m;
}

void write_examples(const fs::path& dir, std::span<const LabeledExample> examples) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_data("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw_data("cannot write " + (dir / "labels.csv").string());
  labels << "instance_id,class_id\n";
  char line[128];
  for (const auto& ex : examples) {
    labels << ex.instance_id << ',' << ex.class_id << '\n';
    const fs::path record = dir / (std::to_string(ex.instance_id) + ".xyz");
    std::ofstream out(record);
    if (!out) throw_data("cannot write " + record.string());
    const Matrix& p = ex.cloud.points();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      std::snprintf(line, sizeof line, "%.9f %.9f %.9f\n", p(i, 0), p(i, 1), p(i, 2));
      out << line;
    }
  }
}

namespace {

PointCloud read_xyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open record " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x, y, z;
    std::string rest;
    if (!(ss >> x >> y >> z) || (ss >> rest)) {
      throw_data("malformed record " + path.string() + " at line " + std::to_string(line_no));
    }
    values.insert(values.end(), {x, y, z});
  }
  if (values.empty()) throw_data("malformed record " + path.string() + ": no points");
  Matrix pts = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(values.size() / 3), 3);
  if (!pts.allFinite()) throw_data("malformed record " + path.string() + ": non-finite coordinate");
  return PointCloud(std::move(pts));
}

}  // namespace

std::vector<LabeledExample> load_examples(const fs::path& dir, const SplitManifest& manifest,
                                          SplitSide side) {
  if (!fs::is_directory(dir)) throw_data("dataset directory not found: " + dir.string());
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw_data("cannot open " + (dir / "labels.csv").string());
  std::string line;
  if (!std::getline(labels, line) || line.rfind("instance_id,class_id", 0) != 0) {
    throw_data("labels.csv must start with header instance_id,class_id");
  }
  std::vector<LabeledExample> out;
  std::set<std::int64_t> seen;
  while (std::getline(labels, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw_data("malformed record in labels.csv: " + line);
    std::int64_t instance_id = 0;
    int class_id = 0;
    try {
      std::size_t used = 0;
      instance_id = std::stoll(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("id");
      const std::string cls = line.substr(comma + 1);
      class_id = std::stoi(cls, &used);
      if (used != cls.size()) throw std::invalid_argument("class");
    } catch (const std::exception&) {
      throw_data("malformed record in labels.csv: " + line);
    }
    if (!seen.insert(instance_id).second) {
      throw_data("duplicate instance id " + std::to_string(instance_id));
    }
    if (!manifest.contains(class_id, SplitSide::Base) && !manifest.contains(class_id, SplitSide::Novel)) {
      throw_data("class not in manifest: " + std::to_string(class_id));
    }
    if (!manifest.contains(class_id, side)) continue;
    out.push_back({read_xyz(dir / (std::to_string(instance_id) + ".xyz")), class_id, instance_id});
  }
  return out;
}

std::vector<LabeledExample> filter_classes(std::span<const LabeledExample> pool,
                                           std::span<const int> classes) {
  const std::set<int> keep(classes.begin(), classes.end());
  std::vector<LabeledExample> out;
  for (const auto& ex : pool) {
    if (keep.count(ex.class_id) != 0) out.push_back(ex);
  }
  return out;
}

}  // namespace fspc

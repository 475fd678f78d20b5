#pragma once

#include "fspc/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fspc {

/// An unordered set of n >= 1 points with finite coordinates, stored n x 3.
class PointCloud {
 public:
  PointCloud() = default;
  /// Throws Data if `points` is not n x 3 with n >= 1 and finite entries.
  explicit PointCloud(Matrix points);

  const Matrix& points() const noexcept { return points_; }
  Eigen::Index size() const noexcept { return points_.rows(); }

 private:
  Matrix points_;
};

struct LabeledExample {
  PointCloud cloud;
  int class_id = 0;
  std::int64_t instance_id = 0;
};

enum class ShapeFamily { Sphere, Cube, Cylinder, Cone, Torus, Plane, Helix, Ellipsoid };

std::string_view to_string(ShapeFamily family) noexcept;
/// Throws Usage on an unknown name.
ShapeFamily parse_shape_family(std::string_view name);

/// Default analytic parameters per family:
///   sphere {radius}, cube {edge}, cylinder {radius, height}, cone {radius, height},
///   torus {major, minor}, plane {width, length}, helix {radius, pitch, turns},
///   ellipsoid {a, b, c}.
std::vector<double> default_family_params(ShapeFamily family);

/// Points drawn uniformly (by area, or by arc length for the helix) from the
/// analytic surface, centred at the origin with no pose perturbation.
Matrix sample_surface(ShapeFamily family, std::span<const double> params, int n_points,
                      std::uint64_t seed);

/// `count` instances of one class. Each instance is sample_surface() followed by
/// a random anisotropic scale, a rotation about the up axis, a small tilt and a
/// small offset. Instance ids are first_instance_id, first_instance_id + 1, ...
std::vector<LabeledExample> generate_synthetic_class(ShapeFamily family,
                                                     std::span<const double> params,
                                                     int class_id, int count, int n_points,
                                                     std::uint64_t seed,
                                                     std::int64_t first_instance_id = 0);

/// One synthetic class: a family plus its analytic parameters.
struct SyntheticClass {
  ShapeFamily family;
  std::vector<double> params;
  std::string name;
};

/// Class catalogue used by the data preparation tool: the eight families at
/// default parameters, then parameter variants (tall cylinder, flat cone, ...).
std::vector<SyntheticClass> synthetic_catalogue(int num_classes);

PointCloud sample_points(const PointCloud& cloud, int n, std::uint64_t seed);

enum class Axis { X, Y, Z };

struct AugmentationConfig {
  double jitter_sigma = 0.02;
  double jitter_clip = 0.05;
  Axis axis = Axis::Z;
  double angle_min = 0.0;
  double angle_max = 2.0 * 3.14159265358979323846;

  /// Throws Usage when out of range.
  void validate() const;
};

/// Rigid rotation about cfg.axis by an angle uniform in [angle_min, angle_max),
/// then per-coordinate Gaussian jitter clipped to +-jitter_clip.
PointCloud augment(const PointCloud& cloud, const AugmentationConfig& cfg, std::uint64_t seed);

/// Zero centroid, unit maximum radius. A cloud of coincident points maps to zeros.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Symmetric Chamfer distance (mean nearest squared distance both ways).
double chamfer_distance(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Split manifests and on-disk records.

enum class SplitSide { Base, Novel };

struct SplitManifest {
  std::vector<int> base_classes;
  std::vector<int> novel_classes;
  std::map<int, std::int64_t> class_counts;
  std::int64_t base_examples = 0;   // declared total
  std::int64_t novel_examples = 0;  // declared total

  bool contains(int class_id, SplitSide side) const;
};

struct SplitReport {
  bool disjoint = true;
  std::size_t base_class_count = 0;
  std::size_t novel_class_count = 0;
  std::int64_t base_example_count = 0;
  std::int64_t novel_example_count = 0;
};

/// Throws Data ("overlap ...", "count mismatch ...") on an invalid manifest.
SplitReport validate_split(const SplitManifest& manifest);

SplitManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

/// Builds a manifest (with totals) from a labelled example set.
SplitManifest manifest_from_examples(std::span<const LabeledExample> examples,
                                     std::span<const int> novel_classes);

/// Writes `<instance_id>.xyz` records and `labels.csv` into `dir`.
void write_examples(const std::filesystem::path& dir, std::span<const LabeledExample> examples);

/// Reads every record whose class lies on `side`.
std::vector<LabeledExample> load_examples(const std::filesystem::path& dir,
                                          const SplitManifest& manifest, SplitSide side);

/// Keeps the examples whose class_id is in `classes`.
std::vector<LabeledExample> filter_classes(std::span<const LabeledExample> pool,
                                           std::span<const int> classes);

}  // namespace fspc

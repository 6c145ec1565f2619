#include "adacbm/synthetic.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "adacbm/error.hpp"

namespace adacbm {

namespace {

Vector random_unit(std::size_t dims, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(dims);
  for (double& c : v) c = gauss(rng);
  const double n = std::sqrt(dot(v, v));
  for (double& c : v) c /= n;
  return v;
}

Vector rotate(const Matrix& rotation, const Vector& z) {
  Vector out(z.size());
  for (std::size_t r = 0; r < z.size(); ++r) out[r] = dot(rotation.row(r), z);
  return out;
}

Dataset sample_images(const SyntheticSpec& spec, const std::vector<Vector>& prototypes,
                      const Vector& offset, const Matrix& rotation,
                      std::size_t per_class, const char* prefix,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<float> data;
  std::vector<ImageRecord> records;
  data.reserve(per_class * spec.n_classes * spec.dims);
  // Interleave classes so that any prefix of the file is roughly balanced.
  for (std::size_t s = 0; s < per_class; ++s) {
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      Vector z(spec.dims);
      for (std::size_t k = 0; k < spec.dims; ++k) {
        z[k] = spec.signal * prototypes[c][k] + spec.noise * gauss(rng) + offset[k];
      }
      for (double v : rotate(rotation, z)) data.push_back(static_cast<float>(v));
      records.push_back({std::string(prefix) + std::to_string(records.size()), c});
    }
  }
  const std::size_t rows = records.size();
  return pair_dataset(EmbeddingMatrix(rows, spec.dims, std::move(data)),
                      std::move(records), spec.n_classes);
}

}  // namespace

Matrix random_rotation(std::size_t dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(dims, dims);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd upper = qr.matrixQR();
  // Sign fix makes the distribution uniform over the orthogonal group.
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    if (upper(c, c) < 0.0) q.col(c) *= -1.0;
  }
  Matrix out(dims, dims);
  for (std::size_t r = 0; r < dims; ++r) {
    for (std::size_t c = 0; c < dims; ++c) {
      out(r, c) = q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

SyntheticProblem make_synthetic_problem(const SyntheticSpec& spec) {
  if (spec.n_classes < 2 || spec.dims < 1 || spec.planted_per_class < 1 ||
      spec.train_per_class < 2 || spec.test_per_class < 1 ||
      spec.text_norm_min <= 0.0 || spec.text_norm_max < spec.text_norm_min) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthetic spec");
  }
  const std::size_t needed = spec.n_classes * spec.planted_per_class +
                             (spec.distractors_per_class > 0 ? 1 : 0);
  if (spec.dims < needed) {
    throw Error(ErrorCode::kInvalidArgument,
                "synthetic spec needs dims >= " + std::to_string(needed));
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> text_norm(spec.text_norm_min, spec.text_norm_max);

  SyntheticProblem problem;
  problem.rotation = spec.rotate ? random_rotation(spec.dims, spec.seed ^ 0x9e3779b97f4a7c15ULL)
                                 : Matrix::identity(spec.dims);
  problem.planted.resize(spec.n_classes);

  static constexpr ConceptCategory kCategories[] = {
      ConceptCategory::kColor, ConceptCategory::kShape, ConceptCategory::kSize,
      ConceptCategory::kTexture};
  // Planted directions are orthonormal columns of a random basis; distractors
  // are random unit vectors in the span of the remaining columns.
  const Matrix basis = random_rotation(spec.dims, rng());
  const std::size_t n_planted = spec.n_classes * spec.planted_per_class;
  auto column = [&](std::size_t c) {
    Vector v(spec.dims);
    for (std::size_t k = 0; k < spec.dims; ++k) v[k] = basis(k, c);
    return v;
  };
  auto distractor = [&] {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(spec.dims, 0.0);
    for (std::size_t c = n_planted; c < spec.dims; ++c) {
      const double w = gauss(rng);
      for (std::size_t k = 0; k < spec.dims; ++k) v[k] += w * basis(k, c);
    }
    const double n = std::sqrt(dot(v, v));
    for (double& x : v) x /= n;
    return v;
  };

  std::vector<float> concept_data;
  std::vector<Vector> prototypes(spec.n_classes, Vector(spec.dims, 0.0));
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const std::size_t per_class = spec.planted_per_class + spec.distractors_per_class;
    for (std::size_t m = 0; m < per_class; ++m) {
      const bool planted = m < spec.planted_per_class;
      const Vector dir = planted ? column(c * spec.planted_per_class + m) : distractor();
      const double scale = text_norm(rng);
      if (planted) {
        for (std::size_t k = 0; k < spec.dims; ++k) prototypes[c][k] += dir[k];
        problem.planted[c].push_back(problem.concepts.size());
      }
      for (double v : dir) concept_data.push_back(static_cast<float>(v * scale));
      ConceptRecord rec;
      rec.id = "c" + std::to_string(c) + (planted ? "_p" : "_d") + std::to_string(m);
      rec.text = std::string(planted ? "planted" : "distractor") + " concept " +
                 std::to_string(m) + " of class " + std::to_string(c);
      rec.class_tag = c;
      rec.category = kCategories[problem.concepts.size() % 4];
      problem.concepts.push_back(std::move(rec));
    }
    const double n = std::sqrt(dot(prototypes[c], prototypes[c]));
    for (double& v : prototypes[c]) v /= n;
  }
  problem.concept_embeddings =
      EmbeddingMatrix(problem.concepts.size(), spec.dims, std::move(concept_data));

  Vector offset = random_unit(spec.dims, rng);
  for (double& v : offset) v *= spec.shared_offset;

  problem.train = sample_images(spec, prototypes, offset, problem.rotation,
                                spec.train_per_class, "train_", rng);
  problem.test = sample_images(spec, prototypes, offset, problem.rotation,
                               spec.test_per_class, "test_", rng);
  return problem;
}

}  // namespace adacbm

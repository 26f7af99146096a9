#include "kcnn/encode.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "kcnn/detail/binio.hpp"
#include "kcnn/detail/parallel.hpp"
#include "kcnn/error.hpp"

namespace kcnn {

namespace {

constexpr char kKmdlMagic[] = "KMDL";
constexpr std::uint32_t kKmdlVersion = 1;

// Posteriors below this are treated as zero in the M-step sums.
constexpr double kNegligibleResponsibility = 1e-14;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Per-component log(w_k) - 0.5 * sum_d log(2 pi var_kd) plus inverse variances.
struct DensityTerms {
  std::vector<double> offset;
  std::vector<double> inv_var;

  explicit DensityTerms(const GMMModel& m)
      : offset(m.components), inv_var(m.variances.size()) {
    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < m.components; ++k) {
      double s = 0.0;
      for (std::size_t d = 0; d < m.dim; ++d) {
        const double v = m.variances[k * m.dim + d];
        s += log_two_pi + std::log(v);
        inv_var[k * m.dim + d] = 1.0 / v;
      }
      offset[k] = std::log(m.weights[k]) - 0.5 * s;
    }
  }

  void log_joint(const GMMModel& m, std::span<const double> x, std::span<double> out) const {
    for (std::size_t k = 0; k < m.components; ++k) {
      const double* mu = m.means.data() + k * m.dim;
      const double* iv = inv_var.data() + k * m.dim;
      double q = 0.0;
      for (std::size_t d = 0; d < m.dim; ++d) {
        const double diff = x[d] - mu[d];
        q += diff * diff * iv[d];
      }
      out[k] = offset[k] - 0.5 * q;
    }
  }
};

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) +
                     ", got " + std::to_string(got));
  }
}

}  // namespace

void SampleMatrix::push_back(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require_dim(values.size(), cols_, "SampleMatrix::push_back");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

// ---------------------------------------------------------------------------
// PCA

PCAModel pca_train(const SampleMatrix& data, std::size_t output_dim, bool whitening) {
  const std::size_t n = data.rows();
  const std::size_t dim = data.cols();
  if (output_dim < 1) throw TrainingError("PCA output dimension must be >= 1");
  if (output_dim > dim) {
    throw TrainingError("PCA output dimension " + std::to_string(output_dim) +
                        " exceeds input dimension " + std::to_string(dim));
  }
  if (n < output_dim + 1) {
    throw TrainingError("PCA needs at least " + std::to_string(output_dim + 1) +
                        " samples, got " + std::to_string(n));
  }

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> x(data.data().data(), static_cast<Eigen::Index>(n),
                                     static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMajor centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw TrainingError("PCA eigendecomposition failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double top = values(values.size() - 1);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) > std::max(top, 0.0) * 1e-12 && values(i) > 0.0) ++rank;
  }
  if (rank < output_dim) {
    throw TrainingError("PCA data has rank " + std::to_string(rank) + ", below requested " +
                        std::to_string(output_dim));
  }

  PCAModel model;
  model.input_dim = dim;
  model.output_dim = output_dim;
  model.whitening = whitening;
  model.mean.assign(mean.data(), mean.data() + dim);
  model.basis.resize(output_dim * dim);
  model.eigenvalues.resize(output_dim);
  for (std::size_t k = 0; k < output_dim; ++k) {
    const Eigen::Index col = values.size() - 1 - static_cast<Eigen::Index>(k);
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0.0) axis = -axis;
    const double lambda = values(col);
    model.eigenvalues[k] = lambda;
    const double scale = whitening ? 1.0 / std::sqrt(lambda) : 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      model.basis[k * dim + d] = axis(static_cast<Eigen::Index>(d)) * scale;
    }
  }
  return model;
}

std::vector<double> pca_project(const PCAModel& model, std::span<const double> x) {
  require_dim(x.size(), model.input_dim, "pca_project");
  std::vector<double> centered(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) centered[d] = x[d] - model.mean[d];
  std::vector<double> out(model.output_dim, 0.0);
  for (std::size_t k = 0; k < model.output_dim; ++k) {
    const auto row = model.axis(k);
    double s = 0.0;
    for (std::size_t d = 0; d < centered.size(); ++d) s += row[d] * centered[d];
    out[k] = s;
  }
  return out;
}

SampleMatrix pca_project_all(const PCAModel& model, const SampleMatrix& data) {
  SampleMatrix out;
  for (std::size_t i = 0; i < data.rows(); ++i) out.push_back(pca_project(model, data.row(i)));
  return out;
}

// ---------------------------------------------------------------------------
// GMM

void GMMModel::validate() const {
  if (components == 0 || dim == 0) throw NumericalError("GMM has no components or zero dim");
  if (weights.size() != components || means.size() != components * dim ||
      variances.size() != components * dim) {
    throw ShapeError("GMM parameter arrays have inconsistent sizes");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw NumericalError("GMM weight not positive/finite");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericalError("GMM weights do not sum to 1");
  for (double m : means) {
    if (!std::isfinite(m)) throw NumericalError("GMM mean not finite");
  }
  for (double v : variances) {
    if (!(v > 0.0) || !std::isfinite(v)) throw NumericalError("GMM variance not positive/finite");
  }
}

GmmTrainResult gmm_train(const SampleMatrix& data, std::size_t components, std::uint64_t seed,
                         const GmmTrainOptions& options) {
  const std::size_t n = data.rows();
  const std::size_t dim = data.cols();
  if (components < 1) throw TrainingError("GMM needs at least one component");
  if (n < 10 * components) {
    throw TrainingError("GMM with " + std::to_string(components) + " components needs at least " +
                        std::to_string(10 * components) + " samples, got " + std::to_string(n));
  }
  const int threads = detail::resolve_threads(options.threads);

  // Global statistics and the variance floor.
  std::vector<double> global_mean(dim, 0.0), global_var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t d = 0; d < dim; ++d) global_mean[d] += x[d];
  }
  for (double& m : global_mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - global_mean[d];
      global_var[d] += diff * diff;
    }
  }
  double mean_var = 0.0;
  for (double& v : global_var) {
    v /= static_cast<double>(n);
    mean_var += v;
  }
  mean_var /= static_cast<double>(dim);
  const double floor = options.variance_floor_ratio * mean_var;
  if (!(floor > 0.0)) throw TrainingError("GMM training data has zero variance");

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> centers{static_cast<std::size_t>(rng() % n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centers.size() < components) {
    const auto c = data.row(centers.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(data.row(i), c));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng() % n);
    }
    centers.push_back(pick);
  }

  GMMModel model;
  model.components = components;
  model.dim = dim;
  model.weights.assign(components, 0.0);
  model.means.assign(components * dim, 0.0);
  model.variances.assign(components * dim, 0.0);

  // One hard assignment to the seeds initializes the mixture.
  {
    std::vector<std::size_t> label(n);
    std::vector<double> count(components, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < components; ++k) {
        const double dk = squared_distance(data.row(i), data.row(centers[k]));
        if (dk < best_d) {
          best_d = dk;
          best = k;
        }
      }
      label[i] = best;
      count[best] += 1.0;
      for (std::size_t d = 0; d < dim; ++d) model.means[best * dim + d] += data.row(i)[d];
    }
    for (std::size_t k = 0; k < components; ++k) {
      for (std::size_t d = 0; d < dim; ++d) {
        model.means[k * dim + d] =
            count[k] > 0.0 ? model.means[k * dim + d] / count[k] : data.row(centers[k])[d];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = label[i];
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = data.row(i)[d] - model.means[k * dim + d];
        model.variances[k * dim + d] += diff * diff;
      }
    }
    double wsum = 0.0;
    for (std::size_t k = 0; k < components; ++k) {
      for (std::size_t d = 0; d < dim; ++d) {
        double& v = model.variances[k * dim + d];
        v = count[k] > 1.0 ? v / count[k] : global_var[d];
        v = std::max(v, floor);
      }
      model.weights[k] = std::max(count[k], 1.0);
      wsum += model.weights[k];
    }
    for (double& w : model.weights) w /= wsum;
  }

  GmmTrainResult result;
  result.variance_floor = floor;
  std::vector<double> resp(n * components);
  std::vector<double> sample_ll(n);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // E-step: per-sample work only, so threading does not affect results.
    const DensityTerms terms(model);
    detail::parallel_for(n, threads, [&](std::size_t i) {
      std::span<double> r(resp.data() + i * components, components);
      terms.log_joint(model, data.row(i), r);
      const double lse = log_sum_exp(r);
      sample_ll[i] = lse;
      for (double& v : r) v = std::exp(v - lse);
    });
    double ll = 0.0;
    for (double v : sample_ll) ll += v;
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) {
      throw NumericalError("GMM log-likelihood became non-finite at iteration " +
                           std::to_string(iter));
    }
    result.log_likelihood.push_back(ll);
    if (iter > 0) {
      const double prev = result.log_likelihood[result.log_likelihood.size() - 2];
      const double rel = (ll - prev) / std::max(std::abs(prev), 1e-300);
      if (rel < options.relative_tolerance) break;
    }
    if (iter + 1 == options.max_iterations) break;

    // M-step: each component reduces over samples in index order.
    std::vector<double> mass(components, 0.0);
    detail::parallel_for(components, threads, [&](std::size_t k) {
      double nk = 0.0;
      std::vector<double> mu(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * components + k];
        if (r < kNegligibleResponsibility) continue;
        nk += r;
        const auto x = data.row(i);
        for (std::size_t d = 0; d < dim; ++d) mu[d] += r * x[d];
      }
      mass[k] = nk;
      if (!(nk > 0.0)) return;  // starved component keeps its parameters
      for (double& m : mu) m /= nk;
      std::vector<double> var(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * components + k];
        if (r < kNegligibleResponsibility) continue;
        const auto x = data.row(i);
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = x[d] - mu[d];
          var[d] += r * diff * diff;
        }
      }
      for (std::size_t d = 0; d < dim; ++d) {
        model.means[k * dim + d] = mu[d];
        model.variances[k * dim + d] = std::max(var[d] / nk, floor);
      }
    });
    double wsum = 0.0;
    for (std::size_t k = 0; k < components; ++k) {
      model.weights[k] = std::max(mass[k] / static_cast<double>(n), 1e-12);
      wsum += model.weights[k];
    }
    for (double& w : model.weights) w /= wsum;
  }

  result.model = std::move(model);
  return result;
}

double gmm_log_density(const GMMModel& model, std::span<const double> x) {
  require_dim(x.size(), model.dim, "gmm_log_density");
  const DensityTerms terms(model);
  std::vector<double> lj(model.components);
  terms.log_joint(model, x, lj);
  return log_sum_exp(lj);
}

std::vector<double> gmm_posteriors(const GMMModel& model, std::span<const double> x) {
  require_dim(x.size(), model.dim, "gmm_posteriors");
  const DensityTerms terms(model);
  std::vector<double> q(model.components);
  terms.log_joint(model, x, q);
  const double lse = log_sum_exp(q);
  for (double& v : q) v = std::exp(v - lse);
  return q;
}

namespace {

// Adds fv_contribution(x) into `out` (length 2*D*V), skipping components
// whose posterior is exactly zero.
void accumulate_contribution(const GMMModel& model, const DensityTerms& terms,
                             std::span<const double> x, std::span<double> q,
                             std::span<double> out) {
  const std::size_t dim = model.dim;
  terms.log_joint(model, x, q);
  const double lse = log_sum_exp(q);
  for (double& v : q) v = std::exp(v - lse);
  for (std::size_t k = 0; k < model.components; ++k) {
    if (q[k] == 0.0) continue;
    const double mean_scale = q[k] / std::sqrt(model.weights[k]);
    const double var_scale = q[k] / std::sqrt(2.0 * model.weights[k]);
    double* mean_block = out.data() + 2 * k * dim;
    double* var_block = mean_block + dim;
    const double* mu = model.means.data() + k * dim;
    const double* iv = terms.inv_var.data() + k * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      const double z = (x[d] - mu[d]) * std::sqrt(iv[d]);
      mean_block[d] += mean_scale * z;
      var_block[d] += var_scale * (z * z - 1.0);
    }
  }
}

}  // namespace

std::vector<double> fv_contribution(const GMMModel& model, std::span<const double> x) {
  require_dim(x.size(), model.dim, "fv_contribution");
  const DensityTerms terms(model);
  std::vector<double> q(model.components);
  std::vector<double> out(2 * model.dim * model.components, 0.0);
  accumulate_contribution(model, terms, x, q, out);
  return out;
}

const char* to_string(Normalization n) {
  return n == Normalization::Improved ? "improved" : "raw";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "improved") return Normalization::Improved;
  if (name == "raw") return Normalization::Raw;
  throw ConfigError("unknown normalization policy '" + name + "'");
}

FisherVector aggregate(const GMMModel& model, const SampleMatrix& xs, Normalization policy) {
  if (xs.rows() == 0) throw EmptyInputError("cannot aggregate an empty descriptor set");
  require_dim(xs.cols(), model.dim, "aggregate");
  const DensityTerms terms(model);
  std::vector<double> q(model.components);
  FisherVector fv;
  fv.values.assign(2 * model.dim * model.components, 0.0);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    accumulate_contribution(model, terms, xs.row(i), q, fv.values);
  }
  if (policy == Normalization::Raw) return fv;

  const double inv_t = 1.0 / static_cast<double>(xs.rows());
  double sq = 0.0;
  for (double& v : fv.values) {
    v *= inv_t;
    v = std::copysign(std::sqrt(std::abs(v)), v);
    sq += v * v;
  }
  if (!(sq > 0.0) || !std::isfinite(sq)) {
    throw NumericalError("Fisher vector has zero or non-finite norm");
  }
  const double norm = std::sqrt(sq);
  for (double& v : fv.values) v /= norm;
  fv.normalized = true;
  return fv;
}

double match_kernel_bruteforce(const GMMModel& model, const SampleMatrix& xs,
                               const SampleMatrix& ys) {
  if (xs.rows() == 0 || ys.rows() == 0) {
    throw EmptyInputError("match kernel needs two non-empty sets");
  }
  std::vector<std::vector<double>> phi_y;
  phi_y.reserve(ys.rows());
  for (std::size_t j = 0; j < ys.rows(); ++j) phi_y.push_back(fv_contribution(model, ys.row(j)));
  double total = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const auto phi_x = fv_contribution(model, xs.row(i));
    for (const auto& py : phi_y) {
      double k = 0.0;
      for (std::size_t d = 0; d < phi_x.size(); ++d) k += phi_x[d] * py[d];
      total += k;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// KMDL

std::vector<char> encode_kmdl(const EncoderModel& m) {
  const auto& pca = m.pca;
  const auto& gmm = m.gmm;
  if (gmm.dim != pca.output_dim) throw ShapeError("GMM dim does not match PCA output dim");
  detail::ByteWriter w;
  w.magic(kKmdlMagic);
  w.put<std::uint32_t>(kKmdlVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pca.input_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pca.output_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(gmm.components));
  w.put<std::uint8_t>(pca.whitening ? 1 : 0);
  w.put_span<double>(pca.mean);
  w.put_span<double>(pca.basis);
  w.put_span<double>(gmm.weights);
  w.put_span<double>(gmm.means);
  w.put_span<double>(gmm.variances);
  return w.bytes();
}

EncoderModel decode_kmdl(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kKmdlMagic);
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kKmdlVersion) throw UnsupportedVersionError(version, version_at);
  const auto dims_at = r.offset();
  const auto input_dim = r.get<std::uint32_t>("input_dim");
  const auto out_dim = r.get<std::uint32_t>("D");
  const auto comps = r.get<std::uint32_t>("V");
  if (input_dim == 0 || out_dim == 0 || comps == 0 || out_dim > input_dim) {
    throw ParseError("invalid model dimensions", dims_at);
  }
  const auto whiten = r.get<std::uint8_t>("whitening flag");

  EncoderModel m;
  m.pca.input_dim = input_dim;
  m.pca.output_dim = out_dim;
  m.pca.whitening = whiten != 0;
  m.pca.mean.resize(input_dim);
  m.pca.basis.resize(static_cast<std::size_t>(out_dim) * input_dim);
  m.gmm.components = comps;
  m.gmm.dim = out_dim;
  m.gmm.weights.resize(comps);
  m.gmm.means.resize(static_cast<std::size_t>(comps) * out_dim);
  m.gmm.variances.resize(static_cast<std::size_t>(comps) * out_dim);
  r.get_into<double>(m.pca.mean, "PCA mean");
  r.get_into<double>(m.pca.basis, "PCA basis");
  const auto gmm_at = r.offset();
  r.get_into<double>(m.gmm.weights, "GMM weights");
  r.get_into<double>(m.gmm.means, "GMM means");
  r.get_into<double>(m.gmm.variances, "GMM variances");
  if (!r.at_end()) throw ParseError("trailing bytes after model", r.offset());
  try {
    m.gmm.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid GMM parameters: ") + e.what(), gmm_at);
  }
  return m;
}

void save_model(const EncoderModel& model, const std::string& path) {
  detail::write_file(path, encode_kmdl(model));
}

EncoderModel load_model(const std::string& path) {
  return decode_kmdl(detail::read_file(path));
}

}  // namespace kcnn

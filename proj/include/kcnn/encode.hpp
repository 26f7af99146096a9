#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kcnn {

/// Dense row-major sample matrix (one sample per row).
class SampleMatrix {
 public:
  SampleMatrix() = default;
  SampleMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  /// Appends a row; the first row fixes the column count.
  void push_back(std::span<const double> values);

  std::span<const double> data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct PCAModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  bool whitening = false;
  std::vector<double> mean;   // input_dim
  std::vector<double> basis;  // output_dim x input_dim, row-major
  /// Variance along each kept axis; not persisted.
  std::vector<double> eigenvalues;

  std::span<const double> axis(std::size_t k) const {
    return {basis.data() + k * input_dim, input_dim};
  }
};

/// Top-`output_dim` principal axes of the mean-centered covariance. Each
/// axis is signed so its largest-magnitude entry is positive. With
/// `whitening` the stored rows are divided by sqrt(eigenvalue).
PCAModel pca_train(const SampleMatrix& data, std::size_t output_dim, bool whitening = false);

std::vector<double> pca_project(const PCAModel& model, std::span<const double> x);
SampleMatrix pca_project_all(const PCAModel& model, const SampleMatrix& data);

/// Diagonal-covariance Gaussian mixture.
struct GMMModel {
  std::size_t components = 0;
  std::size_t dim = 0;
  std::vector<double> weights;    // components
  std::vector<double> means;      // components x dim
  std::vector<double> variances;  // components x dim

  std::span<const double> mean(std::size_t k) const { return {means.data() + k * dim, dim}; }
  std::span<const double> variance(std::size_t k) const {
    return {variances.data() + k * dim, dim};
  }

  /// Throws unless weights form a simplex and every parameter is finite
  /// with positive variances.
  void validate() const;
};

struct GmmTrainOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
  /// Variance floor as a fraction of the mean per-dimension data variance.
  double variance_floor_ratio = 1e-4;
  int threads = 1;
};

struct GmmTrainResult {
  GMMModel model;
  /// Average per-sample log-likelihood evaluated at the start of each
  /// EM iteration.
  std::vector<double> log_likelihood;
  double variance_floor = 0.0;
};

/// k-means++ seeding followed by EM. Requires at least 10 samples per
/// component. Results do not depend on `options.threads`.
GmmTrainResult gmm_train(const SampleMatrix& data, std::size_t components, std::uint64_t seed,
                         const GmmTrainOptions& options = {});

/// log p(x) under the mixture, evaluated with log-sum-exp.
double gmm_log_density(const GMMModel& model, std::span<const double> x);

/// Component posteriors q_k(x).
std::vector<double> gmm_posteriors(const GMMModel& model, std::span<const double> x);

/// Per-descriptor Fisher score: for each component k a mean block
/// q_k (x-mu_k)/sigma_k / sqrt(w_k) followed by a variance block
/// q_k [((x-mu_k)/sigma_k)^2 - 1] / sqrt(2 w_k). Length 2 * dim * components.
std::vector<double> fv_contribution(const GMMModel& model, std::span<const double> x);

enum class Normalization { Improved, Raw };

const char* to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

struct FisherVector {
  std::vector<double> values;
  bool normalized = false;
};

/// Sum of per-descriptor contributions. `Improved` then divides by the set
/// size, applies signed square root and L2-normalizes; `Raw` stops at the sum.
FisherVector aggregate(const GMMModel& model, const SampleMatrix& xs, Normalization policy);

/// Explicit double sum over pairs of <fv_contribution(x), fv_contribution(y)>.
double match_kernel_bruteforce(const GMMModel& model, const SampleMatrix& xs,
                               const SampleMatrix& ys);

/// PCA + GMM pair persisted as a KMDL file.
struct EncoderModel {
  PCAModel pca;
  GMMModel gmm;
};

std::vector<char> encode_kmdl(const EncoderModel& model);
EncoderModel decode_kmdl(std::span<const char> bytes);
void save_model(const EncoderModel& model, const std::string& path);
EncoderModel load_model(const std::string& path);

}  // namespace kcnn

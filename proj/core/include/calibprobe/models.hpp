#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "calibprobe/datagen.hpp"
#include "calibprobe/geometry.hpp"
#include "calibprobe/sensor.hpp"

namespace calibprobe {

/// Grid-statistics descriptor configuration. Per cell, over valid pixels:
/// (mean depth / max_range, occupancy fraction, mean row offset in [0,1],
/// mean column offset in [0,1]); an optional per-cell mean-intensity block is
/// appended when use_intensity is set.
struct DescriptorConfig {
  int grid_rows = 8;
  int grid_cols = 16;
  double max_range = 80.0;
  bool use_intensity = false;

  int cells() const { return grid_rows * grid_cols; }
  int length() const { return cells() * 4 + (use_intensity ? cells() : 0); }
  bool operator==(const DescriptorConfig&) const = default;
};

/// Cell-major layout: entry (cell, stat) at cell*4 + stat for the four base
/// statistics, then one mean-intensity entry per cell.
Eigen::VectorXd descriptor(const DepthMap& depth, const Raster* intensity,
                           const DescriptorConfig& cfg);
Eigen::VectorXd sample_descriptor(const CalibSample& s, const DescriptorConfig& cfg);

/// Builds the N x D descriptor matrix and N x 6 label matrix
/// ([tx ty tz roll pitch yaw], meters/degrees) for a set of samples.
void design_matrices(std::span<const CalibSample> samples,
                     const DescriptorConfig& cfg, Eigen::MatrixXd* x,
                     Eigen::MatrixXd* y);

/// Per-component z-scoring of the 6 label components, stored with the model
/// so the joint L2 objective is well-conditioned across meters and degrees.
struct LabelScaler {
  Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> scale = Eigen::Matrix<double, 6, 1>::Ones();

  static LabelScaler fit(const Eigen::MatrixXd& y);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& y) const;
  Eigen::Matrix<double, 6, 1> invert(const Eigen::Matrix<double, 6, 1>& y) const;
};

enum class ModelKind { linear, mlp, knn };
const char* to_string(ModelKind kind);

struct LinearParams {
  Eigen::MatrixXd weights;               // 6 x D, standardized label space
  Eigen::Matrix<double, 6, 1> bias;
};

struct MlpNet {
  Eigen::MatrixXd w1;   // hidden x D
  Eigen::VectorXd b1;   // hidden
  Eigen::MatrixXd w2;   // 6 x hidden
  Eigen::VectorXd b2;   // 6
};

struct MlpParams {
  MlpNet net;
  Eigen::VectorXd feat_mean;   // D
  Eigen::VectorXd feat_scale;  // D
};

struct KnnParams {
  Eigen::MatrixXd train_desc;    // N x D
  Eigen::MatrixXd train_labels;  // N x 6, raw label units
  int k = 1;
};

struct TrainMeta {
  uint64_t seed = 0;
  std::vector<double> loss_curve;  // epoch averages (mlp) or final mse
};

struct RegressorModel {
  ModelKind kind = ModelKind::linear;
  DescriptorConfig descriptor;
  LabelScaler labels;
  std::variant<LinearParams, MlpParams, KnnParams> params;
  TrainMeta meta;
};

/// Ridge least squares via centered normal equations; the bias is not
/// penalized. With ridge == 0 a rank check runs first and a rank-deficient
/// system raises DegeneracyError instead of returning garbage.
RegressorModel fit_linear(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const DescriptorConfig& cfg, double ridge);
RegressorModel fit_linear(std::span<const CalibSample> train,
                          const DescriptorConfig& cfg, double ridge);

/// One rectified hidden layer trained with minibatch adaptive-moment updates
/// on the L2 loss. Deterministic per rng seed; raises DegeneracyError with
/// the epoch index if the loss turns non-finite.
RegressorModel fit_mlp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const DescriptorConfig& cfg, int hidden, int epochs,
                       double lr, Rng& rng);
RegressorModel fit_mlp(std::span<const CalibSample> train,
                       const DescriptorConfig& cfg, int hidden, int epochs,
                       double lr, Rng& rng);

/// Memorizes the training set; prediction is the mean label of the k nearest
/// descriptors (Euclidean, index-ordered tie break).
RegressorModel fit_knn(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const DescriptorConfig& cfg, int k);
RegressorModel fit_knn(std::span<const CalibSample> train,
                       const DescriptorConfig& cfg, int k);

Eigen::Matrix<double, 6, 1> predict_vector(const RegressorModel& model,
                                           const Eigen::VectorXd& desc);
EulerPerturbation predict(const RegressorModel& model, const CalibSample& s);

/// Loss and gradient of the MLP on an already-standardized batch
/// (0.5/B * sum of squared residuals). grad may be null.
double mlp_loss(const MlpNet& net, const Eigen::MatrixXd& x,
                const Eigen::MatrixXd& y, MlpNet* grad);

// ---------------------------------------------------------------------------
// Per-component sign classifiers
// ---------------------------------------------------------------------------

/// Six independent logistic-loss linear classifiers over the descriptor,
/// predicting whether each component is greater (+1) or less (-1) than zero.
struct ClassifierModel {
  DescriptorConfig descriptor;
  Eigen::VectorXd feat_mean;
  Eigen::VectorXd feat_scale;
  Eigen::MatrixXd weights;             // 6 x D
  Eigen::Matrix<double, 6, 1> bias;
  std::array<bool, 6> degenerate{};    // single-class components
  TrainMeta meta;
};

/// Zero components count as "less" by convention.
std::array<int, 6> label_signs(const EulerPerturbation& label);

ClassifierModel fit_classifier(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                               const DescriptorConfig& cfg);
ClassifierModel fit_classifier(std::span<const CalibSample> train,
                               const DescriptorConfig& cfg);

std::array<int, 6> classify(const ClassifierModel& model,
                            const Eigen::VectorXd& desc);
std::array<int, 6> classify(const ClassifierModel& model, const CalibSample& s);

// ---------------------------------------------------------------------------
// Model files: one JSON header line, then a little-endian f64 parameter block
// ---------------------------------------------------------------------------

void save_model(const RegressorModel& model, const std::filesystem::path& path);
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
std::variant<RegressorModel, ClassifierModel> load_model(
    const std::filesystem::path& path);

}  // namespace calibprobe

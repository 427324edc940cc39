#pragma once

// Fully connected network: every hidden block is affine -> batch norm ->
// ReLU -> dropout, the output block is affine -> softmax, trained on
// cross-entropy with Adam.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace chatml {

class Rng;

struct AdamParams {
    double learning_rate = 0.004;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct LrSchedule {
    enum class Kind { constant, step };
    Kind kind = Kind::constant;
    double factor = 1.0;
    int every_n_epochs = 1;

    /// Learning rate in effect during `epoch` (0-based).
    double rate_at(int epoch, double base) const;
};

inline constexpr double kBatchNormEpsilon = 1e-8;
inline constexpr double kBatchNormMomentum = 0.1;

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;
    bool batch_norm = false;  // hidden layers only
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
};

struct MlpNetwork {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;

    Eigen::Index input_width() const { return layers.front().weights.cols(); }
    Eigen::Index output_width() const { return layers.back().weights.rows(); }
};

/// He-normal weights for hidden layers, Glorot-normal for the output layer.
MlpNetwork init_network(int input_width, const std::vector<int>& widths, double dropout_rate, std::uint64_t seed);

/// Class probabilities with running batch-norm statistics and no dropout.
Eigen::MatrixXd mlp_forward_inference(const MlpNetwork& net, const Eigen::MatrixXd& X);

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;
    std::vector<Eigen::VectorXd> gamma;
    std::vector<Eigen::VectorXd> beta;
};

struct TrainingPass {
    double loss = 0.0;
    MlpGradients gradients;
    std::vector<Eigen::MatrixXd> normalized;  // batch-normalized pre-activations per hidden layer
    std::vector<Eigen::VectorXd> batch_mean;
    std::vector<Eigen::VectorXd> batch_var;   // biased
};

/// Training-mode forward and backward pass on one batch. Dropout is applied
/// only when `dropout_rng` is non-null.
TrainingPass mlp_training_pass(const MlpNetwork& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
                               Rng* dropout_rng);

/// Mean cross-entropy in training mode without dropout (used by gradient checks).
double mlp_training_loss(const MlpNetwork& net, const Eigen::MatrixXd& X, const std::vector<int>& y);

}  // namespace chatml

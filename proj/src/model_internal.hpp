#pragma once

// Per-family scoring used by predict().

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chatml/models.hpp"

namespace chatml {

/// x0, x1, ... until a caller attaches real names.
std::vector<std::string> default_feature_names(Eigen::Index d);

/// Class probabilities of a boosted model.
Eigen::MatrixXd gbt_scores(const GbtModel& model, double learning_rate, const Eigen::MatrixXd& X);

/// Vote fractions of the k nearest training rows.
Eigen::MatrixXd knn_scores(const KnnModel& model, int k, std::size_t n_classes, const Eigen::MatrixXd& X);

/// Decision values per class; binary models report (f, -f).
Eigen::MatrixXd svc_scores(const SvcModel& model, std::size_t n_classes, const Eigen::MatrixXd& X);

}  // namespace chatml

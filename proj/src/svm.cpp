#include "chatml/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "chatml/models.hpp"
#include "model_internal.hpp"

namespace chatml {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

bool in_up(int y, double a, double C) { return (y > 0 && a < C) || (y < 0 && a > 0.0); }
bool in_low(int y, double a, double C) { return (y < 0 && a < C) || (y > 0 && a > 0.0); }

std::vector<double> gradient_from_scratch(const Eigen::MatrixXd& K, const std::vector<int>& y,
                                          const std::vector<double>& alpha) {
    const std::size_t n = y.size();
    std::vector<double> g(n, -1.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (alpha[j] == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += y[i] * y[j] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * alpha[j];
        }
    }
    return g;
}

double violation(const std::vector<int>& y, const std::vector<double>& alpha, const std::vector<double>& g, double C) {
    double m = -kInf;
    double M = kInf;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double v = -y[t] * g[t];
        if (in_up(y[t], alpha[t], C)) m = std::max(m, v);
        if (in_low(y[t], alpha[t], C)) M = std::min(M, v);
    }
    if (m == -kInf || M == kInf) return -kInf;
    return m - M;
}

}  // namespace

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                  double gamma) {
    return std::exp(-gamma * (a - b).squaredNorm());
}

Eigen::MatrixXd rbf_kernel_matrix(const Eigen::MatrixXd& X, double gamma) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = rbf_kernel(X.row(i), X.row(j), gamma);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

double scale_gamma(const Eigen::MatrixXd& X) {
    if (X.rows() == 0 || X.cols() == 0) return 1.0;
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const double mean_var = ((X.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(X.rows())).mean();
    if (!(mean_var > 0.0)) return 1.0;
    return 1.0 / (static_cast<double>(X.cols()) * mean_var);
}

SmoResult solve_smo(const Eigen::MatrixXd& K, const std::vector<int>& y, const SmoOptions& options) {
    const std::size_t n = y.size();
    const double C = options.C;
    SmoResult result;
    result.alpha.assign(n, 0.0);
    std::vector<double>& a = result.alpha;
    std::vector<double> g(n, -1.0);
    auto Q = [&](std::size_t i, std::size_t j) {
        return y[i] * y[j] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    };

    while (true) {
        // Maximal violating pair, second-order choice of the lower index.
        double m = -kInf;
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (in_up(y[t], a[t], C) && -y[t] * g[t] > m) {
                m = -y[t] * g[t];
                i = t;
            }
        }
        double M = kInf;
        std::size_t j = n;
        double best = kInf;
        for (std::size_t t = 0; t < n; ++t) {
            if (!in_low(y[t], a[t], C)) continue;
            const double v = -y[t] * g[t];
            M = std::min(M, v);
            if (i == n || v >= m) continue;
            const double b = m - v;
            double quad = Q(i, i) + Q(t, t) - 2.0 * y[i] * y[t] * Q(i, t);
            if (quad <= 0.0) quad = kTau;
            const double score = -(b * b) / quad;
            if (score < best) {
                best = score;
                j = t;
            }
        }
        if (i == n || j == n || m - M < options.tolerance) {
            result.converged = true;
            break;
        }
        if (result.iterations >= options.max_iterations) break;
        ++result.iterations;

        const double ai_old = a[i];
        const double aj_old = a[j];
        if (y[i] != y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (-g[i] - g[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = C - diff;
                }
            } else if (a[j] > C) {
                a[j] = C;
                a[i] = C + diff;
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (g[i] - g[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > C) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = sum - C;
                }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > C) {
                if (a[j] > C) {
                    a[j] = C;
                    a[i] = sum - C;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        const double dai = a[i] - ai_old;
        const double daj = a[j] - aj_old;
        for (std::size_t t = 0; t < n; ++t) g[t] += Q(t, i) * dai + Q(t, j) * daj;
        if (options.on_iteration) options.on_iteration(a);
    }

    // Bias: average over free multipliers, else the midpoint of the feasible range.
    double ub = kInf;
    double lb = -kInf;
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * g[t];
        if (a[t] >= C) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (a[t] <= 0.0) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            sum_free += yg;
            ++n_free;
        }
    }
    double rho;
    if (n_free > 0) rho = sum_free / static_cast<double>(n_free);
    else if (ub == kInf) rho = lb;
    else if (lb == -kInf) rho = ub;
    else rho = 0.5 * (ub + lb);
    result.bias = -rho;
    return result;
}

double dual_objective(const Eigen::MatrixXd& K, const std::vector<int>& y, const std::vector<double>& alpha) {
    const std::size_t n = y.size();
    double linear = 0.0;
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        linear += alpha[i];
        if (alpha[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return linear - 0.5 * quad;
}

double kkt_violation(const Eigen::MatrixXd& K, const std::vector<int>& y, const std::vector<double>& alpha, double C) {
    return violation(y, alpha, gradient_from_scratch(K, y, alpha), C);
}

TrainedModel train_svc(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<SvcParams>(hp.params);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "svc: empty training set");
    const auto labels = task_labels(hp.task);
    const auto n = static_cast<std::size_t>(X.rows());

    SvcModel model;
    model.gamma = scale_gamma(X);
    const Eigen::MatrixXd K = rbf_kernel_matrix(X, model.gamma);
    // Two classes need one classifier (class 0 positive); otherwise one per class.
    const std::size_t n_clf = labels.size() == 2 ? 1 : labels.size();
    SmoOptions options;
    options.C = p.C;
    options.tolerance = p.tolerance;
    options.max_iterations = static_cast<long>(p.max_passes) * static_cast<long>(n);

    TrainedModel out;
    std::vector<SmoResult> results;
    for (std::size_t k = 0; k < n_clf; ++k) {
        std::vector<int> yk(n);
        for (std::size_t i = 0; i < n; ++i) yk[i] = y[i] == static_cast<int>(k) ? 1 : -1;
        results.push_back(solve_smo(K, yk, options));
        if (!results.back().converged) {
            out.notes.push_back("NoConvergence: classifier " + std::to_string(k) + " stopped after " +
                                std::to_string(results.back().iterations) + " iterations");
        }
    }
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& r : results) {
            if (r.alpha[i] > 0.0) {
                sv.push_back(i);
                break;
            }
        }
    }
    model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
    for (std::size_t s = 0; s < sv.size(); ++s) model.support_vectors.row(static_cast<Eigen::Index>(s)) = X.row(static_cast<Eigen::Index>(sv[s]));
    for (std::size_t k = 0; k < n_clf; ++k) {
        std::vector<double> coef(sv.size());
        for (std::size_t s = 0; s < sv.size(); ++s) {
            coef[s] = results[k].alpha[sv[s]] * (y[sv[s]] == static_cast<int>(k) ? 1.0 : -1.0);
        }
        model.dual_coef.push_back(std::move(coef));
        model.bias.push_back(results[k].bias);
        model.iterations.push_back(static_cast<int>(results[k].iterations));
    }
    out.hyperparams = hp;
    out.feature_names = default_feature_names(X.cols());
    out.class_labels = labels;
    out.learned = std::move(model);
    return out;
}

Eigen::MatrixXd svc_scores(const SvcModel& model, std::size_t n_classes, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd scores(X.rows(), static_cast<Eigen::Index>(n_classes));
    const std::size_t n_clf = model.dual_coef.size();
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        Eigen::VectorXd kv(model.support_vectors.rows());
        for (Eigen::Index s = 0; s < model.support_vectors.rows(); ++s) {
            kv(s) = rbf_kernel(X.row(r), model.support_vectors.row(s), model.gamma);
        }
        for (std::size_t k = 0; k < n_clf; ++k) {
            double f = model.bias[k];
            for (Eigen::Index s = 0; s < kv.size(); ++s) f += model.dual_coef[k][static_cast<std::size_t>(s)] * kv(s);
            if (n_clf == 1) {
                scores(r, 0) = f;
                scores(r, 1) = -f;
            } else {
                scores(r, static_cast<Eigen::Index>(k)) = f;
            }
        }
    }
    return scores;
}

}  // namespace chatml

#include "chatml/mlp.hpp"

#include <cmath>
#include <string>

#include "chatml/models.hpp"
#include "model_internal.hpp"
#include "chatml/rng.hpp"

namespace chatml {

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
        p.row(i) = e / e.sum();
    }
    return p;
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& A, const DenseLayer& layer) {
    Eigen::MatrixXd Z = A * layer.weights.transpose();
    Z.rowwise() += layer.bias.transpose();
    return Z;
}

struct HiddenCache {
    Eigen::MatrixXd input;
    Eigen::MatrixXd normalized;
    Eigen::VectorXd inv_std;
    Eigen::MatrixXd scaled;  // gamma * normalized + beta, before ReLU
    Eigen::MatrixXd mask;    // dropout multiplier, empty when dropout is off
};

template <typename M>
struct AdamSlot {
    M m;
    M v;
};

template <typename M>
void adam_update(M& param, const M& grad, AdamSlot<M>& slot, const AdamParams& adam, double lr, long step) {
    if (slot.m.size() == 0) {
        slot.m = M::Zero(param.rows(), param.cols());
        slot.v = M::Zero(param.rows(), param.cols());
    }
    slot.m = adam.beta1 * slot.m + (1.0 - adam.beta1) * grad;
    slot.v = adam.beta2 * slot.v + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(step));
    param.array() -= lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + adam.epsilon);
}

}  // namespace

double LrSchedule::rate_at(int epoch, double base) const {
    if (kind == Kind::constant || every_n_epochs <= 0) return base;
    return base * std::pow(factor, static_cast<double>(epoch / every_n_epochs));
}

MlpNetwork init_network(int input_width, const std::vector<int>& widths, double dropout_rate, std::uint64_t seed) {
    Rng rng(seed);
    MlpNetwork net;
    net.dropout_rate = dropout_rate;
    int fan_in = input_width;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const int fan_out = widths[l];
        const bool hidden = l + 1 < widths.size();
        const double sd = hidden ? std::sqrt(2.0 / fan_in) : std::sqrt(2.0 / (fan_in + fan_out));
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = sd * rng.normal();
        }
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.batch_norm = hidden;
        if (hidden) {
            layer.gamma = Eigen::VectorXd::Ones(fan_out);
            layer.beta = Eigen::VectorXd::Zero(fan_out);
            layer.running_mean = Eigen::VectorXd::Zero(fan_out);
            layer.running_var = Eigen::VectorXd::Ones(fan_out);
        }
        net.layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    return net;
}

Eigen::MatrixXd mlp_forward_inference(const MlpNetwork& net, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd A = X;
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        Eigen::MatrixXd Z = affine(A, layer);
        const Eigen::ArrayXd inv = (layer.running_var.array() + kBatchNormEpsilon).rsqrt();
        Z.rowwise() -= layer.running_mean.transpose();
        Z.array().rowwise() *= (inv * layer.gamma.array()).transpose();
        Z.rowwise() += layer.beta.transpose();
        A = Z.cwiseMax(0.0);
    }
    return softmax_rows(affine(A, net.layers.back()));
}

TrainingPass mlp_training_pass(const MlpNetwork& net, const Eigen::MatrixXd& X, const std::vector<int>& y,
                               Rng* dropout_rng) {
    const std::size_t L = net.layers.size();
    const double n = static_cast<double>(X.rows());
    const double keep = 1.0 - net.dropout_rate;
    TrainingPass pass;
    std::vector<HiddenCache> caches(L - 1);

    Eigen::MatrixXd A = X;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        const DenseLayer& layer = net.layers[l];
        HiddenCache& c = caches[l];
        c.input = A;
        Eigen::MatrixXd Z = affine(A, layer);
        const Eigen::VectorXd mu = Z.colwise().mean().transpose();
        Z.rowwise() -= mu.transpose();
        const Eigen::VectorXd var = (Z.array().square().colwise().sum() / n).matrix().transpose();
        c.inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
        c.normalized = Z.array().rowwise() * c.inv_std.array().transpose();
        c.scaled = (c.normalized.array().rowwise() * layer.gamma.array().transpose()).matrix();
        c.scaled.rowwise() += layer.beta.transpose();
        A = c.scaled.cwiseMax(0.0);
        if (dropout_rng != nullptr && net.dropout_rate > 0.0) {
            c.mask.resize(A.rows(), A.cols());
            for (Eigen::Index i = 0; i < A.rows(); ++i) {
                for (Eigen::Index j = 0; j < A.cols(); ++j) c.mask(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
            }
            A = A.cwiseProduct(c.mask);
        }
        pass.normalized.push_back(c.normalized);
        pass.batch_mean.push_back(mu);
        pass.batch_var.push_back(var);
    }
    const Eigen::MatrixXd P = softmax_rows(affine(A, net.layers.back()));

    Eigen::MatrixXd dZ = P;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const auto target = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
        loss -= std::log(std::max(P(i, target), 1e-300));
        dZ(i, target) -= 1.0;
    }
    pass.loss = loss / n;
    dZ /= n;

    MlpGradients& g = pass.gradients;
    g.weights.resize(L);
    g.bias.resize(L);
    g.gamma.resize(L);
    g.beta.resize(L);
    g.weights[L - 1] = dZ.transpose() * A;
    g.bias[L - 1] = dZ.colwise().sum().transpose();
    Eigen::MatrixXd dA = dZ * net.layers[L - 1].weights;
    for (std::size_t l = L - 1; l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const HiddenCache& c = caches[l];
        if (c.mask.size() != 0) dA = dA.cwiseProduct(c.mask);
        const Eigen::MatrixXd dY = (c.scaled.array() > 0.0).select(dA, 0.0);
        g.gamma[l] = dY.cwiseProduct(c.normalized).colwise().sum().transpose();
        g.beta[l] = dY.colwise().sum().transpose();
        const Eigen::MatrixXd dXhat = dY.array().rowwise() * layer.gamma.array().transpose();
        const Eigen::RowVectorXd sum_dxhat = dXhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat = dXhat.cwiseProduct(c.normalized).colwise().sum();
        Eigen::MatrixXd dPre = n * dXhat;
        dPre.rowwise() -= sum_dxhat;
        dPre -= (c.normalized.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        dPre = (dPre.array().rowwise() * (c.inv_std.array() / n).transpose()).matrix();
        g.weights[l] = dPre.transpose() * c.input;
        g.bias[l] = dPre.colwise().sum().transpose();
        dA = dPre * layer.weights;
    }
    return pass;
}

double mlp_training_loss(const MlpNetwork& net, const Eigen::MatrixXd& X, const std::vector<int>& y) {
    return mlp_training_pass(net, X, y, nullptr).loss;
}

TrainedModel train_mlp(const Eigen::MatrixXd& X, const std::vector<int>& y, const Hyperparams& hp) {
    hp.validate();
    const auto& p = std::get<MlpParams>(hp.params);
    const auto labels = task_labels(hp.task);
    if (X.rows() == 0) throw ModelError(ModelErrc::EmptyTrainingSet, "mlp: empty training set");
    if (static_cast<std::size_t>(p.layer_widths.back()) != labels.size()) {
        throw ModelError(ModelErrc::InvalidHyperparams, "mlp: final layer width must equal the class count (" +
                                                            std::to_string(labels.size()) + ")");
    }
    MlpModel model;
    model.network = init_network(static_cast<int>(X.cols()), p.layer_widths, p.dropout_rate, derive_seed(hp.seed, 0));
    MlpNetwork& net = model.network;
    Rng rng(derive_seed(hp.seed, 1));
    const std::size_t L = net.layers.size();
    std::vector<AdamSlot<Eigen::MatrixXd>> w_slots(L);
    std::vector<AdamSlot<Eigen::VectorXd>> b_slots(L), g_slots(L), be_slots(L);
    long step = 0;
    const auto n = static_cast<std::size_t>(X.rows());
    const auto batch = static_cast<std::size_t>(p.batch_size);

    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        const double lr = p.lr_schedule.rate_at(epoch, p.adam.learning_rate);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t start = 0; start < n; start += batch) spans.emplace_back(start, std::min(n, start + batch));
        // A one-row batch has no batch statistics; fold it into the previous one.
        if (spans.size() > 1 && spans.back().second - spans.back().first == 1) {
            spans[spans.size() - 2].second = spans.back().second;
            spans.pop_back();
        }
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < spans.size(); ++b) {
            const auto [lo, hi] = spans[b];
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(hi - lo), X.cols());
            std::vector<int> yb(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                xb.row(static_cast<Eigen::Index>(i - lo)) = X.row(static_cast<Eigen::Index>(order[i]));
                yb[i - lo] = y[order[i]];
            }
            TrainingPass pass = mlp_training_pass(net, xb, yb, p.dropout_rate > 0.0 ? &rng : nullptr);
            if (!std::isfinite(pass.loss)) {
                throw ModelError(ModelErrc::NonFiniteLoss, "mlp: non-finite loss at epoch " + std::to_string(epoch) +
                                                               ", batch " + std::to_string(b) + ", learning rate " +
                                                               std::to_string(lr));
            }
            epoch_loss += pass.loss * static_cast<double>(hi - lo);
            const double rows = static_cast<double>(hi - lo);
            for (std::size_t l = 0; l + 1 < L; ++l) {
                DenseLayer& layer = net.layers[l];
                const double unbias = rows > 1.0 ? rows / (rows - 1.0) : 1.0;
                layer.running_mean = (1.0 - kBatchNormMomentum) * layer.running_mean + kBatchNormMomentum * pass.batch_mean[l];
                layer.running_var =
                    (1.0 - kBatchNormMomentum) * layer.running_var + kBatchNormMomentum * unbias * pass.batch_var[l];
            }
            ++step;
            for (std::size_t l = 0; l < L; ++l) {
                DenseLayer& layer = net.layers[l];
                adam_update(layer.weights, pass.gradients.weights[l], w_slots[l], p.adam, lr, step);
                adam_update(layer.bias, pass.gradients.bias[l], b_slots[l], p.adam, lr, step);
                if (layer.batch_norm) {
                    adam_update(layer.gamma, pass.gradients.gamma[l], g_slots[l], p.adam, lr, step);
                    adam_update(layer.beta, pass.gradients.beta[l], be_slots[l], p.adam, lr, step);
                }
            }
        }
        model.lr_trace.push_back(lr);
        model.loss_trace.push_back(epoch_loss / static_cast<double>(n));
    }

    TrainedModel out;
    out.hyperparams = hp;
    out.feature_names = default_feature_names(X.cols());
    out.class_labels = labels;
    out.learned = std::move(model);
    return out;
}

}  // namespace chatml

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "avpr/error.hpp"
#include "avpr/random.hpp"

namespace avpr {

enum class Activation { relu, softplus, tanh };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected relu, softplus or tanh)");
}

/// Per-layer gradients, same shapes as the network parameters.
struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Fully connected feed-forward network with a linear output layer.
///
/// Inputs are batched column-wise: a batch of B samples of dimension d is a
/// d x B matrix. Parameters are stored explicitly so that they can be
/// serialized and perturbed for finite-difference checks.
class Mlp {
public:
    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // input of every layer
        std::vector<Eigen::MatrixXd> pre;     // pre-activation of every layer
    };

    Mlp() = default;

    /// Zero-initialized network.
    Mlp(std::vector<std::size_t> layers, Activation activation) : layers_(std::move(layers)), activation_(activation) {
        if (layers_.size() < 2) throw ConfigError("mlp: need at least input and output layers");
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            if (layers_[l] == 0 || layers_[l + 1] == 0) throw ConfigError("mlp: layer sizes must be positive");
            weights_.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layers_[l + 1]),
                                                     static_cast<Eigen::Index>(layers_[l])));
            biases_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layers_[l + 1])));
        }
    }

    /// Glorot-uniform weights, zero biases.
    static Mlp random(std::vector<std::size_t> layers, Activation activation, std::uint64_t seed) {
        Mlp net(std::move(layers), activation);
        Rng rng = make_rng(seed, {salt::init});
        for (auto& w : net.weights_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
        }
        return net;
    }

    const std::vector<std::size_t>& layers() const noexcept { return layers_; }
    Activation activation() const noexcept { return activation_; }
    std::size_t input_dim() const { return layers_.front(); }
    std::size_t output_dim() const { return layers_.back(); }
    std::size_t layer_count() const { return weights_.size(); }
    const Eigen::MatrixXd& weight(std::size_t l) const { return weights_[l]; }
    const Eigen::VectorXd& bias(std::size_t l) const { return biases_[l]; }
    Eigen::MatrixXd& weight(std::size_t l) { return weights_[l]; }
    Eigen::VectorXd& bias(std::size_t l) { return biases_[l]; }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
        if (static_cast<std::size_t>(x.rows()) != input_dim())
            throw DimensionError("mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                                 std::to_string(input_dim()));
        if (cache) {
            cache->inputs.clear();
            cache->pre.clear();
        }
        Eigen::MatrixXd h = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::MatrixXd z = weights_[l] * h;
            z.colwise() += biases_[l];
            if (cache) {
                cache->inputs.push_back(h);
                cache->pre.push_back(z);
            }
            h = l + 1 < weights_.size() ? activate(z) : std::move(z);
        }
        return h;
    }

    std::vector<double> forward(std::span<const double> x) const {
        Eigen::Map<const Eigen::VectorXd> in(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::MatrixXd out = forward(Eigen::MatrixXd(in));
        return {out.data(), out.data() + out.size()};
    }

    /// Back-propagates dLoss/dOutput (same shape as the forward output).
    MlpGradients backward(const Cache& cache, const Eigen::MatrixXd& grad_out) const {
        MlpGradients g;
        g.weights.resize(weights_.size());
        g.biases.resize(biases_.size());
        Eigen::MatrixXd delta = grad_out;
        for (std::size_t l = weights_.size(); l-- > 0;) {
            if (l + 1 < weights_.size()) delta = delta.cwiseProduct(activate_derivative(cache.pre[l]));
            g.weights[l] = delta * cache.inputs[l].transpose();
            g.biases[l] = delta.rowwise().sum();
            if (l > 0) delta = weights_[l].transpose() * delta;
        }
        return g;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l)
            n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
        return n;
    }

    /// Flat view: per layer, weights row-major then biases.
    std::vector<double> parameters() const {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (std::size_t l = 0; l < weights_.size(); ++l) append(p, weights_[l], biases_[l]);
        return p;
    }

    void set_parameters(std::span<const double> p) {
        if (p.size() != parameter_count()) throw DimensionError("mlp: parameter vector has wrong length");
        std::size_t k = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
                for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = p[k++];
            for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = p[k++];
        }
    }

    std::vector<double> flatten(const MlpGradients& g) const {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (std::size_t l = 0; l < g.weights.size(); ++l) append(p, g.weights[l], g.biases[l]);
        return p;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < weights_.size(); ++l)
            if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            std::vector<double> flat;
            append(flat, weights_[l], Eigen::VectorXd());
            w.push_back(flat);
            b.push_back(std::vector<double>(biases_[l].data(), biases_[l].data() + biases_[l].size()));
        }
        return {{"layers", layers_}, {"activation", to_string(activation_)}, {"weights", w}, {"biases", b}};
    }

    static Mlp from_json(const nlohmann::json& j) {
        try {
            Mlp net(j.at("layers").get<std::vector<std::size_t>>(),
                    activation_from_string(j.at("activation").get<std::string>()));
            const auto& w = j.at("weights");
            const auto& b = j.at("biases");
            if (w.size() != net.weights_.size() || b.size() != net.biases_.size())
                throw ParseError("weights file: layer count does not match 'layers'");
            for (std::size_t l = 0; l < net.weights_.size(); ++l) {
                const auto flat = w[l].get<std::vector<double>>();
                const auto bias = b[l].get<std::vector<double>>();
                auto& W = net.weights_[l];
                if (flat.size() != static_cast<std::size_t>(W.size()) ||
                    bias.size() != static_cast<std::size_t>(net.biases_[l].size()))
                    throw ParseError("weights file: layer " + std::to_string(l) + " has wrong parameter count");
                std::size_t k = 0;
                for (Eigen::Index r = 0; r < W.rows(); ++r)
                    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[k++];
                for (std::size_t r = 0; r < bias.size(); ++r) net.biases_[l](static_cast<Eigen::Index>(r)) = bias[r];
            }
            return net;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("weights file: ") + e.what());
        }
    }

    friend bool operator==(const Mlp& a, const Mlp& b) {
        return a.layers_ == b.layers_ && a.activation_ == b.activation_ && a.parameters() == b.parameters();
    }

private:
    static void append(std::vector<double>& out, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(w(r, c));
        for (Eigen::Index r = 0; r < b.size(); ++r) out.push_back(b(r));
    }

    Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
        switch (activation_) {
            case Activation::relu: return z.cwiseMax(0.0);
            case Activation::softplus:
                return z.unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
            case Activation::tanh: return z.array().tanh().matrix();
        }
        return z;
    }

    Eigen::MatrixXd activate_derivative(const Eigen::MatrixXd& z) const {
        switch (activation_) {
            case Activation::relu: return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
            case Activation::softplus: return z.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
            case Activation::tanh: return z.unaryExpr([](double x) {
                    const double t = std::tanh(x);
                    return 1.0 - t * t;
                });
        }
        return z;
    }

    std::vector<std::size_t> layers_;
    Activation activation_ = Activation::softplus;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
};

/// Adam optimizer state bound to one network's shapes.
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    Adam() = default;
    explicit Adam(const Mlp& net) {
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            m_.weights.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
            v_.weights.push_back(m_.weights.back());
            m_.biases.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
            v_.biases.push_back(m_.biases.back());
        }
    }

    void step(Mlp& net, const MlpGradients& g, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            update(net.weight(l), m_.weights[l], v_.weights[l], g.weights[l], lr, c1, c2);
            update(net.bias(l), m_.biases[l], v_.biases[l], g.biases[l], lr, c1, c2);
        }
    }

    std::uint64_t steps() const noexcept { return t_; }
    const MlpGradients& first_moment() const noexcept { return m_; }
    const MlpGradients& second_moment() const noexcept { return v_; }
    MlpGradients& first_moment() noexcept { return m_; }
    MlpGradients& second_moment() noexcept { return v_; }
    void set_steps(std::uint64_t t) noexcept { t_ = t; }

private:
    template <typename P, typename G>
    void update(P& param, G& m, G& v, const G& grad, double lr, double c1, double c2) const {
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
    }

    MlpGradients m_, v_;
    std::uint64_t t_ = 0;
};

/// Plain gradient descent: param -= lr * grad.
inline void sgd_step(Mlp& net, const MlpGradients& g, double lr) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        net.weight(l) -= lr * g.weights[l];
        net.bias(l) -= lr * g.biases[l];
    }
}

}  // namespace avpr

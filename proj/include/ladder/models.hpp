#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ladder/autodiff.hpp"
#include "ladder/checkpoint.hpp"
#include "ladder/data.hpp"
#include "ladder/optim.hpp"
#include "ladder/rng.hpp"

namespace ladder {

namespace layers {
struct Linear {
    std::size_t in = 0, out = 0;
};
struct Conv2d {
    std::size_t in_channels = 0, out_channels = 0, kernel = 3, stride = 1, padding = 0;
};
struct ConvTranspose2d {
    std::size_t in_channels = 0, out_channels = 0, kernel = 2, stride = 2, padding = 0;
};
struct MaxPool2d {
    std::size_t kernel = 2, stride = 2;
};
struct Relu {};
struct Sigmoid {};
struct Tanh {};
struct Flatten {};
struct Unflatten {
    Shape shape;  // per-sample shape
};
}  // namespace layers

using Layer = std::variant<layers::Linear, layers::Conv2d, layers::ConvTranspose2d, layers::MaxPool2d, layers::Relu,
                           layers::Sigmoid, layers::Tanh, layers::Flatten, layers::Unflatten>;

/// Layer stack with its parameters held as plain tensors. Forward passes bind
/// the parameters onto a tape, so the same network can be run with or
/// without gradients.
class Sequential {
   public:
    Sequential() = default;
    explicit Sequential(std::vector<Layer> layers);

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init(Rng& rng);

    std::vector<Var> bind(Tape& tape, bool trainable) const;
    /// `params` must come from bind() (or an equivalent list in the same order).
    Var forward(const Var& x, std::span<const Var> params) const;

    /// Per-sample output shape for a per-sample input shape.
    Shape output_shape(const Shape& input) const;

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Tensor>& parameters() noexcept { return params_; }
    const std::vector<Tensor>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;

   private:
    std::vector<Layer> layers_;
    std::vector<Tensor> params_;
};

struct ClassifierOutput {
    Var logits;
    Var z;
};

/// f = head ∘ Φ. The latent z is exactly the input of the final linear layer.
class Classifier {
   public:
    Classifier() = default;
    Classifier(Shape input_shape, Sequential features, std::size_t latent_dim, std::size_t class_count);

    ClassifierOutput forward(const Var& x, std::span<const Var> params) const;
    std::vector<Var> bind(Tape& tape, bool trainable) const;

    /// Inference helpers (no gradients); x is [B, input_shape...].
    Tensor logits(const Tensor& x) const;
    Tensor latent(const Tensor& x) const;
    /// Logits from latent vectors [B, F] through the head only.
    Tensor head_logits(const Tensor& z) const;
    std::vector<int> predict(const Tensor& x) const;
    /// Whole dataset, evaluated in chunks.
    std::vector<int> predict(const Dataset& ds) const;
    Tensor latent(const Dataset& ds) const;

    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t latent_dim() const noexcept { return latent_dim_; }
    std::size_t class_count() const noexcept { return class_count_; }

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    Sequential& features() noexcept { return features_; }
    Sequential& head() noexcept { return head_; }

    void init(Rng& rng);
    std::vector<NamedTensor> state() const;
    void load_state(std::span<const NamedTensor> entries);

    void check_input(const Shape& batch_shape) const;

   private:
    Shape input_shape_;
    Sequential features_;
    Sequential head_;
    std::size_t latent_dim_ = 0;
    std::size_t class_count_ = 0;
};

class Generator {
   public:
    Generator() = default;
    Generator(Sequential net, std::size_t latent_dim, Shape output_shape, int norm_p = 2);

    Var forward(const Var& z, std::span<const Var> params) const;
    std::vector<Var> bind(Tape& tape, bool trainable) const { return net_.bind(tape, trainable); }
    /// z is [B, F] (or [F] for a single latent); result is [B, output_shape...].
    Tensor decode(const Tensor& z) const;

    std::size_t latent_dim() const noexcept { return latent_dim_; }
    const Shape& output_shape() const noexcept { return output_shape_; }
    int norm_p() const noexcept { return norm_p_; }
    void set_norm_p(int p);

    Sequential& net() noexcept { return net_; }
    const Sequential& net() const noexcept { return net_; }
    void init(Rng& rng) { net_.init(rng); }
    std::vector<NamedTensor> state() const;
    void load_state(std::span<const NamedTensor> entries);

   private:
    Sequential net_;
    std::size_t latent_dim_ = 0;
    Shape output_shape_;
    int norm_p_ = 2;
};

/// Architecture profiles.
///   blobs_mlp: small MLP for vector data (F = 8).
///   desk_cnn:  8x8 single-channel images, F = 32.
///   lenet:     28x28 MNIST LeNet, F = 500, with the appendix generator.
enum class Profile { blobs_mlp, desk_cnn, lenet };

std::string_view to_string(Profile profile);
Profile parse_profile(std::string_view text);

Classifier make_classifier(Profile profile, const Shape& input_shape, std::size_t class_count, std::uint64_t seed);
Generator make_generator(Profile profile, const Classifier& classifier, std::uint64_t seed, int norm_p = 2);

struct EpochLog {
    std::vector<float> losses;  // one mean loss per epoch
};

/// Sample visiting order for one epoch; every training loop uses this.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

std::vector<Tensor> collect_grads(const Gradients& grads, std::span<const Var> vars);
/// One SGD update of every classifier parameter; grads follow bind() order.
void sgd_update(Classifier& model, std::span<const Tensor> grads, const SgdConfig& cfg, SgdState& state);

/// Minibatch SGD on softmax cross-entropy. Shuffling uses `seed`.
EpochLog train_classifier(Classifier& model, const Dataset& train, const SgdConfig& cfg, std::uint64_t seed);

/// Fits G to minimise mean ||x - G(Φ(x))||_p^p with the classifier frozen.
EpochLog train_generator(Generator& gen, const Dataset& train, const Classifier& classifier, const SgdConfig& cfg,
                         std::uint64_t seed);

/// Mean per-pixel squared error between x and G(Φ(x)) over the dataset.
float reconstruction_mse(const Generator& gen, const Classifier& classifier, const Dataset& ds);

std::size_t argmax(std::span<const float> values);

}  // namespace ladder

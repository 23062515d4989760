#include "ladder/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ladder {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

namespace {

constexpr std::size_t kInferenceChunk = 256;

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    require(in + 2 * pad >= k, ErrorKind::dimension, "kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

Shape batched(std::size_t batch, const Shape& sample) {
    Shape s{batch};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

// Parameter shapes for one layer (weight first, then bias).
std::vector<Shape> layer_param_shapes(const Layer& layer) {
    return std::visit(overloaded{
                          [](const layers::Linear& l) { return std::vector<Shape>{{l.in, l.out}, {l.out}}; },
                          [](const layers::Conv2d& l) {
                              return std::vector<Shape>{{l.out_channels, l.in_channels, l.kernel, l.kernel},
                                                        {l.out_channels}};
                          },
                          [](const layers::ConvTranspose2d& l) {
                              return std::vector<Shape>{{l.in_channels, l.out_channels, l.kernel, l.kernel},
                                                        {l.out_channels}};
                          },
                          [](const auto&) { return std::vector<Shape>{}; },
                      },
                      layer);
}

std::size_t fan_in(const Layer& layer) {
    return std::visit(overloaded{
                          [](const layers::Linear& l) { return l.in; },
                          [](const layers::Conv2d& l) { return l.in_channels * l.kernel * l.kernel; },
                          // PyTorch uses weight.size(1) * k * k, i.e. out_channels for transposed conv.
                          [](const layers::ConvTranspose2d& l) { return l.out_channels * l.kernel * l.kernel; },
                          [](const auto&) { return std::size_t{1}; },
                      },
                      layer);
}

std::vector<NamedTensor> named(const std::string& prefix, const Sequential& net) {
    std::vector<NamedTensor> out;
    std::size_t p = 0;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const auto shapes = layer_param_shapes(net.layers()[i]);
        for (std::size_t k = 0; k < shapes.size(); ++k)
            out.push_back({prefix + std::to_string(i) + (k == 0 ? ".weight" : ".bias"), net.parameters()[p++]});
    }
    return out;
}

void load_named(const std::string& prefix, Sequential& net, std::span<const NamedTensor> entries) {
    for (const auto& e : named(prefix, net)) {
        const Tensor& t = find_entry(entries, e.name);
        require(t.shape() == e.tensor.shape(), ErrorKind::dimension,
                "checkpoint entry '" + e.name + "' has shape " + shape_string(t.shape()) + ", model expects " +
                    shape_string(e.tensor.shape()));
    }
    std::size_t p = 0;
    for (const auto& e : named(prefix, net)) net.parameters()[p++] = find_entry(entries, e.name);
}

}  // namespace

Sequential::Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (const auto& layer : layers_)
        for (auto& shape : layer_param_shapes(layer)) params_.emplace_back(std::move(shape));
}

void Sequential::init(Rng& rng) {
    std::size_t p = 0;
    for (const auto& layer : layers_) {
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in(layer)));
        for (std::size_t k = 0; k < layer_param_shapes(layer).size(); ++k)
            for (float& v : params_[p++].data()) v = rng.uniform(-bound, bound);
    }
}

std::size_t Sequential::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params_) n += t.size();
    return n;
}

std::vector<Var> Sequential::bind(Tape& tape, bool trainable) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const auto& t : params_) vars.push_back(tape.leaf(t, trainable));
    return vars;
}

Var Sequential::forward(const Var& x, std::span<const Var> params) const {
    require(params.size() == params_.size(), ErrorKind::contract, "parameter list does not match the network");
    Var h = x;
    std::size_t p = 0;
    for (const auto& layer : layers_) {
        h = std::visit(overloaded{
                           [&](const layers::Linear& l) {
                               require(h.shape().size() == 2 && h.shape()[1] == l.in, ErrorKind::dimension,
                                       "linear layer expects [B, " + std::to_string(l.in) + "], got " +
                                           shape_string(h.shape()));
                               Var out = ops::add_bias(ops::matmul(h, params[p]), params[p + 1]);
                               p += 2;
                               return out;
                           },
                           [&](const layers::Conv2d& l) {
                               Var out = ops::conv2d(h, params[p], params[p + 1], l.stride, l.padding);
                               p += 2;
                               return out;
                           },
                           [&](const layers::ConvTranspose2d& l) {
                               Var out = ops::conv_transpose2d(h, params[p], params[p + 1], l.stride, l.padding);
                               p += 2;
                               return out;
                           },
                           [&](const layers::MaxPool2d& l) { return ops::max_pool2d(h, l.kernel, l.stride); },
                           [&](const layers::Relu&) { return ops::relu(h); },
                           [&](const layers::Sigmoid&) { return ops::sigmoid(h); },
                           [&](const layers::Tanh&) { return ops::tanh(h); },
                           [&](const layers::Flatten&) {
                               const std::size_t b = h.shape()[0];
                               return ops::reshape(h, {b, h.value().size() / b});
                           },
                           [&](const layers::Unflatten& l) {
                               return ops::reshape(h, batched(h.shape()[0], l.shape));
                           },
                       },
                       layer);
    }
    return h;
}

Shape Sequential::output_shape(const Shape& input) const {
    Shape s = input;
    for (const auto& layer : layers_) {
        s = std::visit(overloaded{
                           [&](const layers::Linear& l) {
                               require(s == Shape{l.in}, ErrorKind::dimension,
                                       "linear layer expects [" + std::to_string(l.in) + "], got " + shape_string(s));
                               return Shape{l.out};
                           },
                           [&](const layers::Conv2d& l) {
                               require(s.size() == 3 && s[0] == l.in_channels, ErrorKind::dimension,
                                       "conv2d channel mismatch at " + shape_string(s));
                               return Shape{l.out_channels, conv_out(s[1], l.kernel, l.stride, l.padding),
                                            conv_out(s[2], l.kernel, l.stride, l.padding)};
                           },
                           [&](const layers::ConvTranspose2d& l) {
                               require(s.size() == 3 && s[0] == l.in_channels, ErrorKind::dimension,
                                       "conv_transpose2d channel mismatch at " + shape_string(s));
                               return Shape{l.out_channels, (s[1] - 1) * l.stride + l.kernel - 2 * l.padding,
                                            (s[2] - 1) * l.stride + l.kernel - 2 * l.padding};
                           },
                           [&](const layers::MaxPool2d& l) {
                               require(s.size() == 3, ErrorKind::dimension, "max_pool2d expects [C, H, W]");
                               return Shape{s[0], conv_out(s[1], l.kernel, l.stride, 0),
                                            conv_out(s[2], l.kernel, l.stride, 0)};
                           },
                           [&](const layers::Flatten&) { return Shape{element_count(s)}; },
                           [&](const layers::Unflatten& l) {
                               require(element_count(l.shape) == element_count(s), ErrorKind::dimension,
                                       "unflatten size mismatch");
                               return l.shape;
                           },
                           [&](const auto&) { return s; },
                       },
                       layer);
    }
    return s;
}

// ---- Classifier ----

Classifier::Classifier(Shape input_shape, Sequential features, std::size_t latent_dim, std::size_t class_count)
    : input_shape_(std::move(input_shape)),
      features_(std::move(features)),
      head_(std::vector<Layer>{layers::Linear{latent_dim, class_count}}),
      latent_dim_(latent_dim),
      class_count_(class_count) {
    require(features_.output_shape(input_shape_) == Shape{latent_dim_}, ErrorKind::dimension,
            "feature extractor output " + shape_string(features_.output_shape(input_shape_)) +
                " does not match latent_dim " + std::to_string(latent_dim_));
    require(class_count_ >= 2, ErrorKind::contract, "classifier needs at least two classes");
}

void Classifier::check_input(const Shape& batch_shape) const {
    require(batch_shape.size() == input_shape_.size() + 1 &&
                std::equal(input_shape_.begin(), input_shape_.end(), batch_shape.begin() + 1),
            ErrorKind::dimension,
            "classifier expects [B, " + shape_string(input_shape_) + "], got " + shape_string(batch_shape));
}

std::vector<Var> Classifier::bind(Tape& tape, bool trainable) const {
    auto vars = features_.bind(tape, trainable);
    auto head = head_.bind(tape, trainable);
    vars.insert(vars.end(), head.begin(), head.end());
    return vars;
}

ClassifierOutput Classifier::forward(const Var& x, std::span<const Var> params) const {
    check_input(x.shape());
    const std::size_t nf = features_.parameters().size();
    require(params.size() == nf + 2, ErrorKind::contract, "parameter list does not match the classifier");
    Var z = features_.forward(x, params.first(nf));
    Var logits = head_.forward(z, params.subspan(nf));
    return {logits, z};
}

Tensor Classifier::logits(const Tensor& x) const {
    Tape tape;
    auto params = bind(tape, false);
    return forward(tape.constant(x), params).logits.value();
}

Tensor Classifier::latent(const Tensor& x) const {
    Tape tape;
    auto params = bind(tape, false);
    return forward(tape.constant(x), params).z.value();
}

Tensor Classifier::head_logits(const Tensor& z) const {
    Tape tape;
    auto params = head_.bind(tape, false);
    return head_.forward(tape.constant(z), params).value();
}

std::size_t argmax(std::span<const float> values) {
    require(!values.empty(), ErrorKind::contract, "argmax of empty range");
    // First maximum wins, so ties resolve to the lowest index.
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<int> Classifier::predict(const Tensor& x) const {
    const Tensor l = logits(x);
    const std::size_t b = l.dim(0), c = l.dim(1);
    std::vector<int> out(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = static_cast<int>(argmax(l.data().subspan(i * c, c)));
    return out;
}

std::vector<int> Classifier::predict(const Dataset& ds) const {
    std::vector<int> out;
    out.reserve(ds.size());
    for (std::size_t begin = 0; begin < ds.size(); begin += kInferenceChunk) {
        std::vector<std::size_t> idx(std::min(kInferenceChunk, ds.size() - begin));
        std::iota(idx.begin(), idx.end(), begin);
        auto part = predict(ds.batch(idx));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

Tensor Classifier::latent(const Dataset& ds) const {
    require(!ds.empty(), ErrorKind::contract, "latent of an empty dataset");
    Tensor out({ds.size(), latent_dim_});
    for (std::size_t begin = 0; begin < ds.size(); begin += kInferenceChunk) {
        std::vector<std::size_t> idx(std::min(kInferenceChunk, ds.size() - begin));
        std::iota(idx.begin(), idx.end(), begin);
        const Tensor z = latent(ds.batch(idx));
        std::copy(z.data().begin(), z.data().end(), out.ptr() + begin * latent_dim_);
    }
    return out;
}

std::vector<Tensor*> Classifier::parameters() {
    std::vector<Tensor*> out;
    for (auto& t : features_.parameters()) out.push_back(&t);
    for (auto& t : head_.parameters()) out.push_back(&t);
    return out;
}

std::vector<const Tensor*> Classifier::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& t : features_.parameters()) out.push_back(&t);
    for (const auto& t : head_.parameters()) out.push_back(&t);
    return out;
}

void Classifier::init(Rng& rng) {
    Rng f = rng.split("features"), h = rng.split("head");
    features_.init(f);
    head_.init(h);
}

std::vector<NamedTensor> Classifier::state() const {
    auto out = named("features.", features_);
    auto head = named("head.", head_);
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

void Classifier::load_state(std::span<const NamedTensor> entries) {
    load_named("features.", features_, entries);
    load_named("head.", head_, entries);
}

// ---- Generator ----

Generator::Generator(Sequential net, std::size_t latent_dim, Shape output_shape, int norm_p)
    : net_(std::move(net)), latent_dim_(latent_dim), output_shape_(std::move(output_shape)) {
    set_norm_p(norm_p);
    require(net_.output_shape({latent_dim_}) == output_shape_, ErrorKind::dimension,
            "generator produces " + shape_string(net_.output_shape({latent_dim_})) + ", expected " +
                shape_string(output_shape_));
}

void Generator::set_norm_p(int p) {
    require(p == 1 || p == 2, ErrorKind::configuration, "generator norm must be 1 or 2");
    norm_p_ = p;
}

Var Generator::forward(const Var& z, std::span<const Var> params) const {
    require(z.shape().size() == 2 && z.shape()[1] == latent_dim_, ErrorKind::dimension,
            "generator expects [B, " + std::to_string(latent_dim_) + "], got " + shape_string(z.shape()));
    return net_.forward(z, params);
}

Tensor Generator::decode(const Tensor& z) const {
    Tensor batch = z.rank() == 1 ? z.reshaped({1, z.size()}) : z;
    Tape tape;
    auto params = bind(tape, false);
    return forward(tape.constant(std::move(batch)), params).value();
}

std::vector<NamedTensor> Generator::state() const { return named("generator.", net_); }

void Generator::load_state(std::span<const NamedTensor> entries) { load_named("generator.", net_, entries); }

// ---- Profiles ----

std::string_view to_string(Profile profile) {
    switch (profile) {
        case Profile::blobs_mlp: return "blobs_mlp";
        case Profile::desk_cnn: return "desk_cnn";
        case Profile::lenet: return "lenet";
    }
    return "unknown";
}

Profile parse_profile(std::string_view text) {
    if (text == "blobs_mlp") return Profile::blobs_mlp;
    if (text == "desk_cnn") return Profile::desk_cnn;
    if (text == "lenet") return Profile::lenet;
    fail(ErrorKind::configuration, "unknown model profile '" + std::string(text) + "'");
}

Classifier make_classifier(Profile profile, const Shape& input_shape, std::size_t class_count, std::uint64_t seed) {
    using namespace layers;
    Classifier model;
    switch (profile) {
        case Profile::blobs_mlp: {
            require(input_shape.size() == 1, ErrorKind::dimension, "blobs_mlp expects vector inputs");
            model = Classifier(input_shape, Sequential({Linear{input_shape[0], 16}, Relu{}, Linear{16, 8}, Relu{}}), 8,
                               class_count);
            break;
        }
        case Profile::desk_cnn: {
            require(input_shape == Shape{1, 8, 8}, ErrorKind::dimension, "desk_cnn expects [1, 8, 8] inputs");
            model = Classifier(input_shape,
                               Sequential({Conv2d{1, 8, 3, 1, 1}, Relu{}, MaxPool2d{2, 2}, Conv2d{8, 16, 3, 1, 1},
                                           Relu{}, MaxPool2d{2, 2}, Flatten{}, Linear{64, 32}, Relu{}}),
                               32, class_count);
            break;
        }
        case Profile::lenet: {
            require(input_shape == Shape{1, 28, 28}, ErrorKind::dimension, "lenet expects [1, 28, 28] inputs");
            model = Classifier(input_shape,
                               Sequential({Conv2d{1, 20, 5}, Relu{}, MaxPool2d{2, 2}, Conv2d{20, 50, 5}, Relu{},
                                           MaxPool2d{2, 2}, Flatten{}, Linear{800, 500}, Relu{}}),
                               500, class_count);
            break;
        }
    }
    Rng rng = Rng(seed).split("classifier");
    model.init(rng);
    return model;
}

Generator make_generator(Profile profile, const Classifier& classifier, std::uint64_t seed, int norm_p) {
    using namespace layers;
    const std::size_t f = classifier.latent_dim();
    const Shape& out = classifier.input_shape();
    Generator gen;
    switch (profile) {
        case Profile::blobs_mlp:
            gen = Generator(Sequential({Linear{f, 16}, Relu{}, Linear{16, out[0]}, Sigmoid{}}), f, out, norm_p);
            break;
        case Profile::desk_cnn:
            gen = Generator(Sequential({Linear{f, 64 * 2 * 2}, Relu{}, Unflatten{{64, 2, 2}},
                                        ConvTranspose2d{64, 32, 2, 2}, Relu{}, ConvTranspose2d{32, 16, 2, 2}, Relu{},
                                        Conv2d{16, 1, 1}, Sigmoid{}}),
                            f, out, norm_p);
            break;
        case Profile::lenet:
            // 4 -> 14 -> 12 -> 35 -> 32 -> 28
            gen = Generator(Sequential({Linear{f, 50 * 4 * 4}, Relu{}, Unflatten{{50, 4, 4}},
                                        ConvTranspose2d{50, 50, 2, 4}, Relu{}, Conv2d{50, 50, 3}, Relu{},
                                        ConvTranspose2d{50, 50, 2, 3}, Relu{}, Conv2d{50, 50, 4}, Relu{},
                                        Conv2d{50, 1, 5}, Sigmoid{}}),
                            f, out, norm_p);
            break;
    }
    Rng rng = Rng(seed).split("generator");
    gen.init(rng);
    return gen;
}

// ---- Training ----

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).split("shuffle").split(epoch);
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

namespace {

void check_loss(float loss, std::size_t epoch, const char* what) {
    require(std::isfinite(loss), ErrorKind::numeric,
            std::string(what) + " diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
}

template <typename Step>
EpochLog run_epochs(std::size_t n, const SgdConfig& cfg, std::uint64_t seed, const char* what, Step&& step) {
    // Zero epochs is a valid no-op here; config files still reject it.
    SgdConfig checked = cfg;
    checked.epochs = std::max<std::size_t>(cfg.epochs, 1);
    checked.validate();
    require(n > 0, ErrorKind::contract, std::string(what) + ": empty training set");
    EpochLog log;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(n, seed, epoch);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            float loss = 0.0f;
            try {
                loss = step(std::span<const std::size_t>(order).subspan(begin, end - begin));
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numeric) throw;
                fail(ErrorKind::numeric, std::string(what) + " diverged at epoch " + std::to_string(epoch) + ": " +
                                             e.what());
            }
            check_loss(loss, epoch, what);
            total += loss;
            ++batches;
        }
        log.losses.push_back(static_cast<float>(total / static_cast<double>(batches)));
    }
    return log;
}

}  // namespace

std::vector<Tensor> collect_grads(const Gradients& grads, std::span<const Var> vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back(grads[v]);
    return out;
}

void sgd_update(Classifier& model, std::span<const Tensor> grads, const SgdConfig& cfg, SgdState& state) {
    auto ptrs = model.parameters();
    std::vector<Tensor> params;
    params.reserve(ptrs.size());
    for (auto* p : ptrs) params.push_back(std::move(*p));
    sgd_step(params, grads, cfg, state);
    for (std::size_t k = 0; k < ptrs.size(); ++k) *ptrs[k] = std::move(params[k]);
}

EpochLog train_classifier(Classifier& model, const Dataset& train, const SgdConfig& cfg, std::uint64_t seed) {
    model.check_input(batched(1, train.sample_shape()));
    SgdState state;
    return run_epochs(train.size(), cfg, seed, "classifier training", [&](std::span<const std::size_t> idx) {
        Tape tape;
        auto vars = model.bind(tape, true);
        const auto labels = train.labels_of(idx);
        Var loss = ops::cross_entropy(model.forward(tape.constant(train.batch(idx)), vars).logits, labels);
        const float value = loss.value().item();
        auto grads = tape.backward(loss);
        sgd_update(model, collect_grads(grads, vars), cfg, state);
        return value;
    });
}

EpochLog train_generator(Generator& gen, const Dataset& train, const Classifier& classifier, const SgdConfig& cfg,
                         std::uint64_t seed) {
    require(gen.latent_dim() == classifier.latent_dim(), ErrorKind::dimension,
            "generator latent dim " + std::to_string(gen.latent_dim()) + " != classifier latent dim " +
                std::to_string(classifier.latent_dim()));
    require(gen.output_shape() == train.sample_shape(), ErrorKind::dimension,
            "generator output shape does not match the dataset");
    require(!train.empty(), ErrorKind::contract, "generator training: empty training set");
    // The classifier is frozen, so latents are computed once.
    const Tensor latents = classifier.latent(train);
    const std::size_t f = classifier.latent_dim();
    SgdState state;
    return run_epochs(train.size(), cfg, seed, "generator training", [&](std::span<const std::size_t> idx) {
        Tensor z({idx.size(), f});
        for (std::size_t k = 0; k < idx.size(); ++k)
            std::copy_n(latents.ptr() + idx[k] * f, f, z.ptr() + k * f);
        Tape tape;
        auto vars = gen.bind(tape, true);
        Var recon = gen.forward(tape.constant(std::move(z)), vars);
        Var target = tape.constant(train.batch(idx));
        Var loss = gen.norm_p() == 2 ? ops::mse_loss(recon, target) : ops::mae_loss(recon, target);
        const float value = loss.value().item();
        auto grads = tape.backward(loss);
        sgd_step(gen.net().parameters(), collect_grads(grads, vars), cfg, state);
        return value;
    });
}

float reconstruction_mse(const Generator& gen, const Classifier& classifier, const Dataset& ds) {
    const Tensor z = classifier.latent(ds);
    double total = 0.0;
    const std::size_t d = ds.sample_size();
    for (std::size_t begin = 0; begin < ds.size(); begin += kInferenceChunk) {
        const std::size_t end = std::min(ds.size(), begin + kInferenceChunk);
        const Tensor recon = gen.decode(z.slice_rows(begin, end));
        for (std::size_t i = begin; i < end; ++i) {
            auto x = ds.features(i);
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = recon[(i - begin) * d + j] - x[j];
                total += diff * diff;
            }
        }
    }
    return static_cast<float>(total / static_cast<double>(ds.size() * d));
}

}  // namespace ladder

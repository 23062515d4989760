#include "ladder/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ladder/optim.hpp"
#include "ladder/parallel.hpp"
#include "ladder/rng.hpp"

namespace ladder {

void SvmConfig::validate() const {
    require(learning_rate > 0.0f && std::isfinite(learning_rate), ErrorKind::configuration,
            "svm learning rate must be positive");
    require(batch_size > 0, ErrorKind::configuration, "svm batch size must be positive");
    require(lambda >= 0.0f, ErrorKind::configuration, "svm lambda must be non-negative");
    require(kernel % 2 == 1, ErrorKind::configuration, "attention kernel size must be odd");
}

AttentionSvm::AttentionSvm(Tensor kernel, Tensor w, float b, ClassPair pair)
    : kernel_(std::move(kernel)), w_(std::move(w)), b_(b), pair_(pair) {
    require(kernel_.rank() == 3 && kernel_.dim(0) == 1 && kernel_.dim(1) == 1, ErrorKind::dimension,
            "attention kernel must be [1, 1, k]");
    require(w_.rank() == 1, ErrorKind::dimension, "svm weight must be a vector");
    require(pair_.negative != pair_.positive, ErrorKind::contract, "svm class pair needs two distinct classes");
    double norm = 0.0;
    for (float v : w_.data()) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    require(norm >= 1e-8, ErrorKind::collapse, "svm weight vector collapsed (|w| < 1e-8)");
    d_ = Tensor({w_.size()});
    for (std::size_t i = 0; i < w_.size(); ++i) d_[i] = static_cast<float>(w_[i] / norm);
}

Var AttentionSvm::attention_var(const Var& z, const Var& kernel) {
    const std::size_t n = z.shape()[0], f = z.shape()[1];
    const std::size_t k = kernel.shape()[2];
    Var conv = ops::conv1d(ops::reshape(z, {n, 1, f}), kernel, Var(), k / 2);
    return ops::softmax(ops::reshape(ops::tanh(conv), {n, f}), 1);
}

Var AttentionSvm::score_var(const Var& z, const Var& kernel, const Var& w, const Var& b) {
    const std::size_t f = z.shape()[1];
    Var weighted = ops::mul(attention_var(z, kernel), z);
    return ops::add_bias(ops::matmul(weighted, ops::reshape(w, {f, 1})), b);
}

std::vector<float> AttentionSvm::attention(std::span<const float> z) const {
    require(z.size() == latent_dim(), ErrorKind::dimension,
            "latent has length " + std::to_string(z.size()) + ", svm expects " + std::to_string(latent_dim()));
    Tape tape;
    Var beta = attention_var(tape.constant(Tensor({1, z.size()}, {z.begin(), z.end()})), tape.constant(kernel_));
    auto values = beta.value().data();
    return {values.begin(), values.end()};
}

float AttentionSvm::margin_with(std::span<const float> z, std::span<const float> beta) const {
    require(z.size() == latent_dim() && beta.size() == latent_dim(), ErrorKind::dimension,
            "margin inputs must have length " + std::to_string(latent_dim()));
    double g = b_;
    for (std::size_t i = 0; i < z.size(); ++i) g += static_cast<double>(w_[i]) * beta[i] * z[i];
    return static_cast<float>(g);
}

float AttentionSvm::margin(std::span<const float> z) const { return margin_with(z, attention(z)); }

AttentionSvm AttentionSvm::toward(int target) const {
    require(pair_.contains(target), ErrorKind::contract,
            "class " + std::to_string(target) + " is outside the svm pair (" + std::to_string(pair_.negative) + ", " +
                std::to_string(pair_.positive) + ")");
    if (target == pair_.positive) return *this;
    Tensor w = w_;
    for (float& v : w.data()) v = -v;
    return AttentionSvm(kernel_, std::move(w), -b_, {pair_.positive, pair_.negative});
}

std::vector<NamedTensor> AttentionSvm::state() const {
    return {{"kernel", kernel_},
            {"w", w_},
            {"b", Tensor::scalar(b_)},
            {"class_pair", Tensor({2}, {static_cast<float>(pair_.negative), static_cast<float>(pair_.positive)})}};
}

AttentionSvm AttentionSvm::from_state(std::span<const NamedTensor> entries) {
    const Tensor& pair = find_entry(entries, "class_pair");
    require(pair.size() == 2, ErrorKind::format, "class_pair entry must hold two values");
    return AttentionSvm(find_entry(entries, "kernel"), find_entry(entries, "w"), find_entry(entries, "b").item(),
                        {static_cast<int>(pair[0]), static_cast<int>(pair[1])});
}

AttentionSvm train_attention_svm(const Tensor& latents, std::span<const float> signs, const SvmConfig& cfg,
                                 ClassPair pair) {
    cfg.validate();
    require(latents.rank() == 2, ErrorKind::dimension, "svm latents must be [N, F]");
    const std::size_t n = latents.dim(0), f = latents.dim(1);
    require(signs.size() == n, ErrorKind::dimension, "one sign per latent required");
    bool has_pos = false, has_neg = false;
    for (float s : signs) {
        require(s == 1.0f || s == -1.0f, ErrorKind::contract, "svm labels must be -1 or +1");
        (s > 0 ? has_pos : has_neg) = true;
    }
    require(has_pos && has_neg, ErrorKind::degeneracy, "svm training needs both classes present");

    // Zero start: beta begins uniform, and flipping every label exactly negates the trajectory of (w, b).
    std::vector<Tensor> params{Tensor({1, 1, cfg.kernel}), Tensor({f}), Tensor({1})};
    const SgdConfig sgd{cfg.learning_rate, 0.0f, 0.0f, cfg.batch_size, cfg.epochs};
    SgdState state;
    const Rng shuffle = Rng(cfg.seed).split("svm-shuffle");
    std::vector<std::size_t> order(n);
    std::vector<float> batch_signs;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng = shuffle.split(epoch);
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            Tensor z({end - begin, f});
            batch_signs.clear();
            for (std::size_t k = begin; k < end; ++k) {
                std::copy_n(latents.ptr() + order[k] * f, f, z.ptr() + (k - begin) * f);
                batch_signs.push_back(signs[order[k]]);
            }
            Tape tape;
            Var kernel = tape.leaf(params[0]), w = tape.leaf(params[1]), b = tape.leaf(params[2]);
            Var scores = AttentionSvm::score_var(tape.constant(std::move(z)), kernel, w, b);
            Var loss = ops::add(ops::hinge_loss(scores, batch_signs), ops::scale(ops::l2(w), cfg.lambda));
            auto grads = tape.backward(loss);
            const std::vector<Tensor> g{grads[kernel], grads[w], grads[b]};
            sgd_step(params, g, sgd, state);
        }
    }
    return AttentionSvm(std::move(params[0]), std::move(params[1]), params[2][0], pair);
}

float svm_accuracy(const AttentionSvm& svm, const Tensor& latents, std::span<const float> signs) {
    require(latents.rank() == 2 && latents.dim(0) == signs.size() && !signs.empty(), ErrorKind::dimension,
            "svm_accuracy needs [N, F] latents and N signs");
    const std::size_t f = latents.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < signs.size(); ++i) {
        const float g = svm.margin(latents.data().subspan(i * f, f));
        correct += (g > 0.0f) == (signs[i] > 0.0f);
    }
    return static_cast<float>(correct) / static_cast<float>(signs.size());
}

// ---- SvmBank ----

SvmBank::SvmBank(Tensor latents, std::vector<int> labels, std::size_t class_count, SvmConfig cfg,
                 std::size_t per_class)
    : latents_(std::move(latents)),
      labels_(std::move(labels)),
      class_count_(class_count),
      cfg_(cfg),
      per_class_(per_class) {
    require(latents_.rank() == 2 && latents_.dim(0) == labels_.size(), ErrorKind::dimension,
            "svm bank needs [N, F] latents and N labels");
    require(per_class_ > 0, ErrorKind::configuration, "svm per-class budget must be positive");
    cfg_.validate();
}

AttentionSvm SvmBank::train_pair(int a, int b) const {
    const int lo = std::min(a, b), hi = std::max(a, b);
    const std::size_t f = latents_.dim(1);
    Rng rng = Rng(cfg_.seed).split("svm-pair").split(static_cast<std::uint64_t>(lo * 1000 + hi));
    std::vector<std::size_t> chosen;
    std::vector<float> signs;
    for (int c : {lo, hi}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] == c) members.push_back(i);
        require(!members.empty(), ErrorKind::degeneracy, "no latents for class " + std::to_string(c));
        rng.shuffle(std::span<std::size_t>(members));
        members.resize(std::min(members.size(), per_class_));
        std::sort(members.begin(), members.end());
        for (std::size_t i : members) {
            chosen.push_back(i);
            signs.push_back(c == hi ? 1.0f : -1.0f);
        }
    }
    Tensor z({chosen.size(), f});
    for (std::size_t k = 0; k < chosen.size(); ++k) std::copy_n(latents_.ptr() + chosen[k] * f, f, z.ptr() + k * f);
    SvmConfig cfg = cfg_;
    cfg.seed = rng.next_u64();
    return train_attention_svm(z, signs, cfg, {lo, hi});
}

const AttentionSvm& SvmBank::get(int a, int b) {
    require(a != b, ErrorKind::contract, "svm pair needs two distinct classes");
    require(a >= 0 && b >= 0 && static_cast<std::size_t>(std::max(a, b)) < class_count_, ErrorKind::contract,
            "svm class out of range");
    const auto key = std::pair{std::min(a, b), std::max(a, b)};
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    AttentionSvm svm = train_pair(key.first, key.second);
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(svm)).first->second;
}

void SvmBank::prepare(std::span<const std::pair<int, int>> pairs) {
    std::vector<std::pair<int, int>> todo;
    for (auto [a, b] : pairs) {
        const auto key = std::pair{std::min(a, b), std::max(a, b)};
        if (!cache_.contains(key) && std::find(todo.begin(), todo.end(), key) == todo.end()) todo.push_back(key);
    }
    std::sort(todo.begin(), todo.end());
    parallel_for(todo.size(), [&](std::size_t i) { get(todo[i].first, todo[i].second); });
}

std::size_t SvmBank::trained_count() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

void SvmBank::insert(AttentionSvm svm) {
    std::lock_guard lock(mutex_);
    const auto p = svm.pair();
    cache_.insert_or_assign(std::pair{std::min(p.negative, p.positive), std::max(p.negative, p.positive)},
                            std::move(svm));
}

void SvmBank::save(const std::filesystem::path& path) const {
    std::vector<NamedTensor> entries;
    for (const auto& [key, svm] : cache_) {
        const std::string prefix = "svm." + std::to_string(key.first) + "_" + std::to_string(key.second) + ".";
        for (auto& e : svm.state()) entries.push_back({prefix + e.name, std::move(e.tensor)});
    }
    save_checkpoint(path, entries);
}

std::vector<AttentionSvm> SvmBank::load(const std::filesystem::path& path) {
    const auto entries = load_checkpoint(path);
    std::map<std::string, std::vector<NamedTensor>> groups;
    for (const auto& e : entries) {
        const auto dot = e.name.rfind('.');
        require(e.name.starts_with("svm.") && dot != std::string::npos && dot > 4, ErrorKind::format,
                "unexpected svm checkpoint entry '" + e.name + "'");
        groups[e.name.substr(0, dot)].push_back({e.name.substr(dot + 1), e.tensor});
    }
    std::vector<AttentionSvm> out;
    for (const auto& [prefix, group] : groups) out.push_back(AttentionSvm::from_state(group));
    return out;
}

}  // namespace ladder

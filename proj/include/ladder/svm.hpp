#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "ladder/autodiff.hpp"
#include "ladder/checkpoint.hpp"

namespace ladder {

/// Unordered class pair; the SVM scores g > 0 for `positive`.
struct ClassPair {
    int negative = 0;
    int positive = 1;

    bool contains(int c) const noexcept { return c == negative || c == positive; }
    friend bool operator==(const ClassPair&, const ClassPair&) = default;
};

struct SvmConfig {
    float learning_rate = 0.01f;
    std::size_t epochs = 200;
    std::size_t batch_size = 20;
    float lambda = 1e-3f;
    std::size_t kernel = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Linear SVM on attention-weighted latents:
///   beta = softmax(tanh(conv1d(z))),  g(z) = w . (beta * z) + b
class AttentionSvm {
   public:
    AttentionSvm() = default;
    AttentionSvm(Tensor kernel, Tensor w, float b, ClassPair pair);

    std::size_t latent_dim() const noexcept { return w_.size(); }
    const Tensor& kernel() const noexcept { return kernel_; }
    const Tensor& w() const noexcept { return w_; }
    float b() const noexcept { return b_; }
    const Tensor& d() const noexcept { return d_; }
    ClassPair pair() const noexcept { return pair_; }

    std::vector<float> attention(std::span<const float> z) const;
    float margin(std::span<const float> z) const;
    /// Margin with beta held fixed (no recomputation at z).
    float margin_with(std::span<const float> z, std::span<const float> beta) const;

    /// Same hyperplane, oriented so that `target` is the positive class.
    /// Target outside the pair is a contract error.
    AttentionSvm toward(int target) const;

    std::vector<NamedTensor> state() const;
    static AttentionSvm from_state(std::span<const NamedTensor> entries);

    /// Tape versions; z is [N, F]. Returns beta [N, F] / scores [N, 1].
    static Var attention_var(const Var& z, const Var& kernel);
    static Var score_var(const Var& z, const Var& kernel, const Var& w, const Var& b);

   private:
    Tensor kernel_;  // [1, 1, k]
    Tensor w_;       // [F]
    float b_ = 0.0f;
    Tensor d_;       // w / |w|
    ClassPair pair_;
};

/// Joint SGD over (w, b, attention kernel) on hinge loss + lambda |w|^2.
/// latents [N, F]; signs in {-1, +1} (+1 marks pair.positive).
AttentionSvm train_attention_svm(const Tensor& latents, std::span<const float> signs, const SvmConfig& cfg,
                                 ClassPair pair = {});

/// Fraction of samples with sign(g) equal to the given sign.
float svm_accuracy(const AttentionSvm& svm, const Tensor& latents, std::span<const float> signs);

/// One-vs-one SVMs over a labelled latent set, trained on demand and cached.
class SvmBank {
   public:
    SvmBank(Tensor latents, std::vector<int> labels, std::size_t class_count, SvmConfig cfg,
            std::size_t per_class = 200);

    /// Trains (if needed) and returns the SVM for the unordered pair {a, b}.
    const AttentionSvm& get(int a, int b);
    /// Trains every listed pair not yet cached, in parallel.
    void prepare(std::span<const std::pair<int, int>> pairs);
    std::size_t trained_count() const;

    const std::map<std::pair<int, int>, AttentionSvm>& cache() const noexcept { return cache_; }
    void insert(AttentionSvm svm);

    void save(const std::filesystem::path& path) const;
    static std::vector<AttentionSvm> load(const std::filesystem::path& path);

   private:
    AttentionSvm train_pair(int a, int b) const;

    Tensor latents_;
    std::vector<int> labels_;
    std::size_t class_count_;
    SvmConfig cfg_;
    std::size_t per_class_;
    std::map<std::pair<int, int>, AttentionSvm> cache_;
    mutable std::mutex mutex_;
};

}  // namespace ladder

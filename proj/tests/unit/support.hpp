#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ladder/autodiff.hpp"
#include "ladder/rng.hpp"
#include "ladder/tensor.hpp"

namespace testing {

using ladder::Rng;
using ladder::Shape;
using ladder::Tape;
using ladder::Tensor;
using ladder::Var;

inline Tensor uniform_tensor(Rng& rng, Shape shape, float lo = -2.0f, float hi = 2.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Uniform values whose magnitude is at least `gap`, so kinks at zero are out
// of finite-difference reach.
inline Tensor away_from_zero(Rng& rng, Shape shape, float gap = 0.05f, float hi = 2.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        const float m = rng.uniform(gap, hi);
        v = rng.uniform() < 0.5 ? -m : m;
    }
    return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ladder_unit_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

using LossFn = std::function<Var(Tape&, std::span<const Var>)>;
// Discrete activation pattern of a function at given inputs. Two points with
// the same pattern lie on the same smooth piece.
using SignatureFn = std::function<std::vector<std::uint8_t>(std::span<const Tensor>)>;


// Index of the max of each 2x2 window of a [B, C, H, W] value.
inline std::vector<std::uint8_t> window_argmax(const Tensor& v, Tensor* maxima = nullptr) {
    const Shape& sh = v.shape();
    const std::size_t h = sh[2], w = sh[3];
    std::vector<std::uint8_t> arg;
    if (maxima) *maxima = Tensor({sh[0], sh[1], h / 2, w / 2});
    std::size_t out = 0;
    for (std::size_t plane = 0; plane < sh[0] * sh[1]; ++plane)
        for (std::size_t r = 0; r + 1 < h; r += 2)
            for (std::size_t c = 0; c + 1 < w; c += 2) {
                std::uint8_t best = 0;
                float top = v[plane * h * w + r * w + c];
                for (std::uint8_t k = 1; k < 4; ++k) {
                    const float x = v[plane * h * w + (r + k / 2) * w + c + k % 2];
                    if (x > top) top = x, best = k;
                }
                arg.push_back(best);
                if (maxima) (*maxima)[out++] = top;
            }
    return arg;
}

// Zero pattern of every recorded value (a relu switching on or off), plus the
// window argmax of every value that some later value max-pools 2x2.
inline std::vector<std::uint8_t> tape_signature(const Tape& tape) {
    std::vector<std::uint8_t> sig;
    for (std::size_t id = 0; id < tape.node_count(); ++id) {
        const Tensor& v = tape.value(id);
        for (float x : v.data()) sig.push_back(x == 0.0f);
        const Shape& sh = v.shape();
        if (sh.size() != 4 || sh[2] < 2 || sh[3] < 2) continue;
        Tensor maxima;
        const auto arg = window_argmax(v, &maxima);
        for (std::size_t later = id + 1; later < tape.node_count(); ++later)
            if (tape.value(later) == maxima) {
                sig.insert(sig.end(), arg.begin(), arg.end());
                break;
            }
    }
    return sig;
}

struct GradCheck {
    double max_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // entries where the function is visibly non-smooth within h
};

// Compares the autodiff Jacobian of f (any output shape) against central
// differences, entry by entry. Error per entry: |a - n| / max(|a|, |n|, 1).
// Entries are skipped when the step crosses a kink: either `signature`
// changes within +-h or the one-sided slopes disagree by more than 5%.
// When `max_coords` is set, that many input coordinates per tensor are drawn
// at random.
inline GradCheck check_gradients(const LossFn& f, std::vector<Tensor> inputs, double h = 1e-3,
                                 std::size_t max_coords = std::numeric_limits<std::size_t>::max(),
                                 std::uint64_t seed = 0, const SignatureFn& signature = {}) {
    auto eval = [&]() {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& t : inputs) leaves.push_back(tape.constant(t));
        return f(tape, leaves).value();
    };
    const Tensor y0 = eval();
    const auto sig0 = signature ? signature(inputs) : std::vector<std::uint8_t>{};
    const std::size_t outputs = y0.size();

    // analytic[o][i] is d y_o / d inputs[i]
    std::vector<std::vector<Tensor>> analytic(outputs);
    for (std::size_t o = 0; o < outputs; ++o) {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
        Var y = f(tape, leaves);
        Tensor pick = Tensor::zeros(y.shape());
        pick[o] = 1.0f;
        auto grads = tape.backward(ladder::ops::sum(ladder::ops::mul(y, tape.constant(pick))));
        for (const auto& l : leaves) analytic[o].push_back(grads[l]);
    }

    GradCheck out;
    Rng rng(seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<std::size_t> coords(inputs[i].size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > max_coords) {
            rng.shuffle(std::span<std::size_t>(coords));
            coords.resize(max_coords);
        }
        for (std::size_t k : coords) {
            const float orig = inputs[i][k];
            const float up = static_cast<float>(orig + h), down = static_cast<float>(orig - h);
            inputs[i][k] = up;
            const Tensor yp = eval();
            const bool kink_up = signature && signature(inputs) != sig0;
            inputs[i][k] = down;
            const Tensor ym = eval();
            const bool kink_down = signature && signature(inputs) != sig0;
            inputs[i][k] = orig;
            if (kink_up || kink_down) {
                out.skipped += outputs;
                continue;
            }
            const double step = static_cast<double>(up) - static_cast<double>(down);
            for (std::size_t o = 0; o < outputs; ++o) {
                const double numeric = (static_cast<double>(yp[o]) - ym[o]) / step;
                const double right = (static_cast<double>(yp[o]) - y0[o]) / h;
                const double left = (static_cast<double>(y0[o]) - ym[o]) / h;
                if (std::abs(right - left) > 0.05 * std::max({std::abs(right), std::abs(left), 1.0})) {
                    ++out.skipped;
                    continue;
                }
                const double a = analytic[o][i][k];
                out.max_error = std::max(out.max_error,
                                         std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0}));
                ++out.checked;
            }
        }
    }
    return out;
}

}  // namespace testing

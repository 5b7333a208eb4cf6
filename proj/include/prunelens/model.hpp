// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunelens/component.hpp"
#include "prunelens/config.hpp"
#include "prunelens/rng.hpp"
#include "prunelens/tensor.hpp"

namespace prunelens {

using TokenId = std::uint32_t;

struct LayerWeights {
    Tensor attn_norm; // [d_model]
    Tensor wq, wk, wv, wo; // [d_model x d_model]
    Tensor mlp_norm; // [d_model]
    Tensor w_gate, w_up; // [d_model x d_ff]
    Tensor w_down; // [d_ff x d_model]

    /// Projection matrix whose input channels are the neurons of `s`.
    const Tensor& projection(Sub s) const {
        switch (s) {
        case Sub::q: return wq;
        case Sub::k: return wk;
        case Sub::v: return wv;
        case Sub::gate: return w_gate;
        case Sub::up: return w_up;
        case Sub::down: return w_down;
        }
        throw InputError("bad subcomponent");
    }
    Tensor& projection(Sub s) { return const_cast<Tensor&>(std::as_const(*this).projection(s)); }

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Checkpoint {
    ModelConfig config;
    Tensor tok_embeddings; // [vocab x d_model]
    std::vector<LayerWeights> layers;
    Tensor final_norm; // [d_model]
    Tensor unembed; // [d_model x vocab]

    /// Stable (name, tensor) directory; the order is the on-disk payload order.
    template <typename Self>
    static auto directory_of(Self& self) {
        using T = std::conditional_t<std::is_const_v<Self>, const Tensor, Tensor>;
        std::vector<std::pair<std::string, T*>> out;
        out.emplace_back("tok_embeddings", &self.tok_embeddings);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& L = self.layers[i];
            const std::string p = "layers." + std::to_string(i) + ".";
            out.emplace_back(p + "attn_norm", &L.attn_norm);
            out.emplace_back(p + "wq", &L.wq);
            out.emplace_back(p + "wk", &L.wk);
            out.emplace_back(p + "wv", &L.wv);
            out.emplace_back(p + "wo", &L.wo);
            out.emplace_back(p + "mlp_norm", &L.mlp_norm);
            out.emplace_back(p + "w_gate", &L.w_gate);
            out.emplace_back(p + "w_up", &L.w_up);
            out.emplace_back(p + "w_down", &L.w_down);
        }
        out.emplace_back("final_norm", &self.final_norm);
        out.emplace_back("unembed", &self.unembed);
        return out;
    }
    auto directory() { return directory_of(*this); }
    auto directory() const { return directory_of(*this); }

    /// Expected shape of every named tensor for a configuration.
    static std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_shapes(const ModelConfig& c) {
        std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
        out.push_back({"tok_embeddings", {c.vocab_size, c.d_model}});
        for (std::size_t i = 0; i < c.n_layers; ++i) {
            const std::string p = "layers." + std::to_string(i) + ".";
            out.push_back({p + "attn_norm", {c.d_model}});
            for (const char* n : {"wq", "wk", "wv", "wo"}) out.push_back({p + n, {c.d_model, c.d_model}});
            out.push_back({p + "mlp_norm", {c.d_model}});
            out.push_back({p + "w_gate", {c.d_model, c.d_ff}});
            out.push_back({p + "w_up", {c.d_model, c.d_ff}});
            out.push_back({p + "w_down", {c.d_ff, c.d_model}});
        }
        out.push_back({"final_norm", {c.d_model}});
        out.push_back({"unembed", {c.d_model, c.vocab_size}});
        return out;
    }

    void validate() const {
        config.validate();
        if (layers.size() != config.n_layers) throw ShapeError("checkpoint has wrong number of layers");
        const auto expected = expected_shapes(config);
        const auto dir = directory();
        for (std::size_t i = 0; i < dir.size(); ++i) {
            if (dir[i].second->shape() != expected[i].second) {
                throw ShapeError(dir[i].first + ": shape " + dir[i].second->shape_string() +
                                 " does not match config");
            }
            if (!dir[i].second->all_finite()) throw InputError(dir[i].first + ": non-finite weight");
        }
    }

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Captured activations of one forward pass.
///
/// `activation(l, s)` is the input matrix seen by projection `s` of layer `l`
/// (tokens x channels, after any neuron masking). `attention(l, h)` is the
/// causal attention matrix of head h (tokens x positions).
class Trace {
public:
    Trace() = default;
    Trace(const ModelConfig& cfg, std::size_t tokens) : n_heads_(cfg.n_heads) {
        activations_.resize(cfg.n_layers);
        attention_.resize(cfg.n_layers * cfg.n_heads);
        for (std::size_t l = 0; l < cfg.n_layers; ++l)
            for (Sub s : kAllSubs) activations_[l][static_cast<int>(s)] = Tensor({tokens, sub_width(cfg, s)});
    }

    std::size_t n_layers() const noexcept { return activations_.size(); }
    std::size_t n_heads() const noexcept { return n_heads_; }
    std::size_t tokens() const { return activations_.empty() ? 0 : activations_[0][0].rows(); }

    const Tensor& activation(std::size_t layer, Sub s) const { return activations_.at(layer)[static_cast<int>(s)]; }
    Tensor& activation(std::size_t layer, Sub s) { return activations_.at(layer)[static_cast<int>(s)]; }
    const Tensor& attention(std::size_t layer, std::size_t head) const { return attention_.at(layer * n_heads_ + head); }
    Tensor& attention(std::size_t layer, std::size_t head) { return attention_.at(layer * n_heads_ + head); }

private:
    std::size_t n_heads_ = 0;
    std::vector<std::array<Tensor, 6>> activations_;
    std::vector<Tensor> attention_;
};

namespace detail {

// Boolean lookup tables for a prune mask.
struct CompiledMask {
    std::vector<std::array<std::vector<std::uint8_t>, 6>> neurons; // [layer][sub][channel]
    std::vector<std::vector<std::uint8_t>> heads; // [layer][head]
    std::vector<std::array<bool, 6>> any; // any neuron masked in (layer, sub)

    CompiledMask(const ModelConfig& cfg, const PruneMask& mask) {
        mask.validate(cfg);
        neurons.resize(cfg.n_layers);
        heads.assign(cfg.n_layers, std::vector<std::uint8_t>(cfg.n_heads, 0));
        any.assign(cfg.n_layers, {});
        for (std::size_t l = 0; l < cfg.n_layers; ++l)
            for (Sub s : kAllSubs) neurons[l][static_cast<int>(s)].assign(sub_width(cfg, s), 0);
        for (const auto& id : mask.components()) {
            if (id.is_head()) {
                heads[id.layer()][id.index()] = 1;
            } else {
                neurons[id.layer()][static_cast<int>(id.sub())][id.index()] = 1;
                any[id.layer()][static_cast<int>(id.sub())] = true;
            }
        }
    }

    // Copies `in` (rows x width) with masked channels zeroed, into `out`.
    void apply(std::size_t layer, Sub s, std::span<const float> in, std::size_t width, std::vector<float>& out) const {
        out.assign(in.begin(), in.end());
        if (!any[layer][static_cast<int>(s)]) return;
        const auto& flags = neurons[layer][static_cast<int>(s)];
        for (std::size_t r = 0; r < in.size() / width; ++r)
            for (std::size_t c = 0; c < width; ++c)
                if (flags[c]) out[r * width + c] = 0.0f;
    }
};

} // namespace detail

/// Incremental causal decoder over a fixed checkpoint and mask.
///
/// Holds the per-layer key/value history so tokens can be fed in blocks.
/// Copying a decoder forks its history, which lets many samples share one
/// prompt prefill.
class Decoder {
public:
    Decoder(const Checkpoint& ckpt, const PruneMask& mask)
        : ckpt_(&ckpt), mask_(std::make_shared<detail::CompiledMask>(ckpt.config, mask)),
          keys_(ckpt.config.n_layers), values_(ckpt.config.n_layers) {}

    std::size_t position() const noexcept { return position_; }
    std::size_t capacity() const noexcept { return ckpt_->config.max_seq_len; }

    /// Runs `tokens` through the network. Returns logits (tokens x vocab) for
    /// every fed row, or only the last row when `last_only`. Fills `trace`
    /// (sized for the fed rows) when non-null.
    Tensor feed(std::span<const TokenId> tokens, Trace* trace = nullptr, bool last_only = false) {
        const ModelConfig& cfg = ckpt_->config;
        const std::size_t n = tokens.size();
        const std::size_t d = cfg.d_model, dh = cfg.d_head, ff = cfg.d_ff;
        if (n == 0) return Tensor({0, cfg.vocab_size});
        if (position_ + n > cfg.max_seq_len) {
            throw InputError("sequence length " + std::to_string(position_ + n) + " exceeds max_seq_len " +
                             std::to_string(cfg.max_seq_len));
        }
        for (TokenId t : tokens)
            if (t >= cfg.vocab_size) throw InputError("token id " + std::to_string(t) + " out of range");

        std::vector<float> x(n * d);
        for (std::size_t r = 0; r < n; ++r) {
            auto e = ckpt_->tok_embeddings.row(tokens[r]);
            std::copy(e.begin(), e.end(), x.begin() + r * d);
        }

        std::vector<float> normed(n * d), seen, q(n * d), k(n * d), v(n * d), attn(n * d), proj(n * d);
        std::vector<float> gate(n * ff), up(n * ff), hidden(n * ff);
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        const std::size_t total = position_ + n;
        std::vector<float> scores(total);

        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            const LayerWeights& W = ckpt_->layers[l];
            for (std::size_t r = 0; r < n; ++r)
                kernels::rmsnorm_row({x.data() + r * d, d}, W.attn_norm.data(), {normed.data() + r * d, d});

            project(l, Sub::q, normed, d, W.wq, d, q, trace);
            project(l, Sub::k, normed, d, W.wk, d, k, trace);
            project(l, Sub::v, normed, d, W.wv, d, v, trace);

            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                if (mask_->heads[l][h])
                    for (std::size_t r = 0; r < n; ++r) std::fill_n(v.begin() + r * d + h * dh, dh, 0.0f);
                for (std::size_t r = 0; r < n; ++r) {
                    kernels::rope_row({q.data() + r * d + h * dh, dh}, position_ + r, cfg.rope_base);
                    kernels::rope_row({k.data() + r * d + h * dh, dh}, position_ + r, cfg.rope_base);
                }
            }
            keys_[l].insert(keys_[l].end(), k.begin(), k.end());
            values_[l].insert(values_[l].end(), v.begin(), v.end());
            const float* K = keys_[l].data();
            const float* V = values_[l].data();

            std::fill(attn.begin(), attn.end(), 0.0f);
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                Tensor* amat = nullptr;
                if (trace) {
                    trace->attention(l, h) = Tensor({n, total});
                    amat = &trace->attention(l, h);
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const std::size_t pos = position_ + r;
                    const float* qr = q.data() + r * d + h * dh;
                    for (std::size_t j = 0; j <= pos; ++j) {
                        const float* kj = K + j * d + h * dh;
                        double dot = 0.0;
                        for (std::size_t e = 0; e < dh; ++e) dot += static_cast<double>(qr[e]) * kj[e];
                        scores[j] = static_cast<float>(dot * inv_sqrt_dh);
                    }
                    std::span<float> row{scores.data(), pos + 1};
                    kernels::softmax_inplace(row);
                    if (amat) std::copy(row.begin(), row.end(), amat->row(r).begin());
                    if (mask_->heads[l][h]) continue; // A_h . 0 = 0
                    std::array<double, 64> acc_small{};
                    std::vector<double> acc_big;
                    double* acc = acc_small.data();
                    if (dh > acc_small.size()) {
                        acc_big.assign(dh, 0.0);
                        acc = acc_big.data();
                    }
                    for (std::size_t j = 0; j <= pos; ++j) {
                        const double a = row[j];
                        const float* vj = V + j * d + h * dh;
                        for (std::size_t e = 0; e < dh; ++e) acc[e] += a * vj[e];
                    }
                    float* out = attn.data() + r * d + h * dh;
                    for (std::size_t e = 0; e < dh; ++e) out[e] = static_cast<float>(acc[e]);
                }
            }
            kernels::gemm(attn.data(), n, d, W.wo.data().data(), d, proj.data());
            for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];

            for (std::size_t r = 0; r < n; ++r)
                kernels::rmsnorm_row({x.data() + r * d, d}, W.mlp_norm.data(), {normed.data() + r * d, d});
            project(l, Sub::gate, normed, d, W.w_gate, ff, gate, trace);
            project(l, Sub::up, normed, d, W.w_up, ff, up, trace);
            for (std::size_t i = 0; i < n * ff; ++i) hidden[i] = kernels::silu(gate[i]) * up[i];
            project(l, Sub::down, hidden, ff, W.w_down, d, proj, trace);
            for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];
        }
        position_ += n;

        const std::size_t first = last_only ? n - 1 : 0;
        const std::size_t rows = n - first;
        for (std::size_t r = first; r < n; ++r)
            kernels::rmsnorm_row({x.data() + r * d, d}, ckpt_->final_norm.data(), {normed.data() + (r - first) * d, d});
        Tensor logits({rows, cfg.vocab_size});
        kernels::gemm(normed.data(), rows, d, ckpt_->unembed.data().data(), cfg.vocab_size, logits.data().data());
        return logits;
    }

private:
    void project(std::size_t layer, Sub s, const std::vector<float>& input, std::size_t in_width, const Tensor& w,
                 std::size_t out_width, std::vector<float>& out, Trace* trace) {
        mask_->apply(layer, s, input, in_width, scratch_);
        const std::size_t n = input.size() / in_width;
        if (trace) std::copy(scratch_.begin(), scratch_.end(), trace->activation(layer, s).data().begin());
        out.resize(n * out_width);
        kernels::gemm(scratch_.data(), n, in_width, w.data().data(), out_width, out.data());
    }

    const Checkpoint* ckpt_;
    std::shared_ptr<const detail::CompiledMask> mask_;
    std::vector<std::vector<float>> keys_, values_;
    std::vector<float> scratch_;
    std::size_t position_ = 0;
};

struct ForwardResult {
    Tensor logits; // [tokens x vocab]
    std::optional<Trace> trace;
};

/// Full causal forward pass from position 0.
inline ForwardResult forward(const Checkpoint& ckpt, std::span<const TokenId> tokens, const PruneMask& mask = {},
                             bool capture = false) {
    Decoder dec(ckpt, mask);
    ForwardResult res;
    if (capture) res.trace.emplace(ckpt.config, tokens.size());
    res.logits = dec.feed(tokens, capture ? &*res.trace : nullptr);
    return res;
}

inline constexpr double kGreedyTemperature = 1e-6;

/// Draws one token from softmax(logits / temperature) with a uniform variate `u`.
/// Below kGreedyTemperature this is argmax (lowest index on ties).
inline TokenId sample_token(std::span<const float> logits, double temperature, double u) {
    if (temperature < kGreedyTemperature) {
        return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    const float mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
        sum += p[i];
    }
    double target = u * sum, run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        run += p[i];
        if (target < run) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(p.size() - 1);
}

struct GenerateOptions {
    double temperature = 0.6;
    std::size_t max_new = 16;
    std::uint64_t seed = 0;
    std::optional<TokenId> eos;
    // Mask eos out of sampling (a minimum-length rule that lasts until another stop fires).
    bool suppress_eos = false;
    // Stop right after emitting a token for which this returns true.
    std::function<bool(TokenId)> stop_after;
};

/// Continues generation from a decoder that has already consumed the prompt.
/// `last_logits` are the logits of the final prompt row.
inline std::vector<TokenId> continue_generation(Decoder dec, std::vector<float> last_logits,
                                                const GenerateOptions& opt) {
    if (!(opt.temperature > 0.0)) throw InputError("temperature must be > 0");
    std::vector<TokenId> out;
    for (std::size_t step = 0; step < opt.max_new; ++step) {
        if (opt.eos && opt.suppress_eos && *opt.eos < last_logits.size())
            last_logits[*opt.eos] = -std::numeric_limits<float>::infinity();
        const TokenId t = sample_token(last_logits, opt.temperature, rng::uniform(opt.seed, step));
        if (opt.eos && t == *opt.eos) break;
        out.push_back(t);
        if (opt.stop_after && opt.stop_after(t)) break;
        if (step + 1 == opt.max_new || dec.position() >= dec.capacity()) break;
        const TokenId next[1] = {t};
        Tensor lg = dec.feed(next, nullptr, true);
        last_logits.assign(lg.data().begin(), lg.data().end());
    }
    return out;
}

/// Autoregressive sampling; the continuation is a pure function of
/// (checkpoint, mask, prompt, temperature, seed, max_new).
inline std::vector<TokenId> generate(const Checkpoint& ckpt, const PruneMask& mask,
                                     std::span<const TokenId> prompt, const GenerateOptions& opt) {
    if (!(opt.temperature > 0.0)) throw InputError("temperature must be > 0");
    if (prompt.empty()) throw InputError("generate: empty prompt");
    Decoder dec(ckpt, mask);
    Tensor lg = dec.feed(prompt, nullptr, true);
    return continue_generation(std::move(dec), std::vector<float>(lg.data().begin(), lg.data().end()), opt);
}

} // namespace prunelens

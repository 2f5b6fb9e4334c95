// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// USES network: STFT encoder (conv + channel-wise layer norm + bottleneck),
// a stack of multi-path blocks (frequency transformer + time transformer,
// with a TAC module in the first spatial blocks), reference-channel merge,
// complex-spectral-mapping decoder, and memory-token streaming so long
// signals are processed segment by segment with carried context.

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "uses/audio.hpp"
#include "uses/conv.hpp"
#include "uses/ops.hpp"
#include "uses/rng.hpp"
#include "uses/stft.hpp"

namespace uses {

struct UsesConfig {
  int64_t embed_dim = 256;      // per-bin embedding width after the encoder conv
  int64_t bottleneck_dim = 64;  // transformer model width
  int64_t num_blocks = 6;       // multi-path blocks
  int64_t spatial_blocks = 3;   // leading blocks that carry a TAC module
  int64_t tac_hidden = 192;
  int64_t mem_tokens = 20;      // memory tokens per conditioning group
  int64_t seg_frames = 64;      // ~1 s at 16 ms hop
  int64_t heads = 4;
  int64_t num_outputs = 1;      // 1 for enhancement, >=2 for separation
  int64_t ref_channel = 0;

  void validate() const {
    check_config(embed_dim >= 1 && bottleneck_dim >= 1 && tac_hidden >= 1, "model dims must be >= 1");
    check_config(num_blocks >= 1, "num_blocks must be >= 1");
    check_config(spatial_blocks >= 1 && spatial_blocks <= num_blocks,
                 "spatial_blocks must lie in [1, num_blocks]");
    check_config(heads >= 1 && bottleneck_dim % heads == 0,
                 "bottleneck_dim must be divisible by heads");
    check_config(mem_tokens >= 0, "mem_tokens must be >= 0");
    check_config(seg_frames >= 1, "seg_frames must be >= 1");
    check_config(num_outputs >= 1, "num_outputs must be >= 1");
    check_config(ref_channel >= 0, "ref_channel must be >= 0");
  }

  bool operator==(const UsesConfig&) const = default;
};

// Which memory-token group conditions the run: group 1 removes noise and
// reverberation, group 2 removes noise only.
enum class EnhanceMode { denoise_dereverb = 0, denoise = 1 };

inline const char* mode_name(EnhanceMode m) {
  return m == EnhanceMode::denoise_dereverb ? "denoise_dereverb" : "denoise";
}

template <typename T>
struct LinearParams {
  Tensor<T> w, b;
};

template <typename T>
struct NormParams {
  Tensor<T> gain, bias;
};

template <typename T>
struct AttentionParams {
  LinearParams<T> q, k, v, o;
};

template <typename T>
struct TransformerParams {
  NormParams<T> norm_attn, norm_ffn;
  AttentionParams<T> attn;
  LinearParams<T> ffn_in, ffn_out;
};

template <typename T>
struct TacParams {
  LinearParams<T> transform;  // per-channel projection to the hidden width
  Tensor<T> transform_slope;
  LinearParams<T> project;  // [own ; channel-mean] back to the model width
  Tensor<T> project_slope;
};

template <typename T>
struct BlockParams {
  bool has_tac = false;
  TacParams<T> tac;
  TransformerParams<T> freq;
  TransformerParams<T> time;
};

template <typename T>
struct UsesModel {
  UsesConfig cfg;
  Tensor<T> enc_w, enc_b;       // 3x3 conv, 2 -> embed_dim
  NormParams<T> enc_norm;       // over embed_dim
  LinearParams<T> bottleneck;   // embed_dim -> bottleneck_dim (pointwise)
  std::vector<BlockParams<T>> blocks;
  Tensor<T> out_slope;          // PReLU over bottleneck_dim
  LinearParams<T> expand;       // bottleneck_dim -> embed_dim (pointwise)
  Tensor<T> dec_w, dec_b;       // 3x3 transposed conv, embed_dim -> 2*num_outputs
  Tensor<T> mem_group[2];       // [1, N, 1, G] each

  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    auto lin = [&out](const std::string& base, LinearParams<T>& p) {
      out.emplace_back(base + ".weight", &p.w);
      out.emplace_back(base + ".bias", &p.b);
    };
    auto norm = [&out](const std::string& base, NormParams<T>& p) {
      out.emplace_back(base + ".gain", &p.gain);
      out.emplace_back(base + ".bias", &p.bias);
    };
    out.emplace_back("encoder.conv.weight", &enc_w);
    out.emplace_back("encoder.conv.bias", &enc_b);
    norm("encoder.norm", enc_norm);
    lin("encoder.bottleneck", bottleneck);
    for (size_t k = 0; k < blocks.size(); ++k) {
      const std::string bk = "block" + std::to_string(k);
      BlockParams<T>& b = blocks[k];
      if (b.has_tac) {
        lin(bk + ".tac.transform", b.tac.transform);
        out.emplace_back(bk + ".tac.transform.slope", &b.tac.transform_slope);
        lin(bk + ".tac.project", b.tac.project);
        out.emplace_back(bk + ".tac.project.slope", &b.tac.project_slope);
      }
      for (auto [tag, tr] : {std::pair<const char*, TransformerParams<T>*>{"freq", &b.freq},
                             {"time", &b.time}}) {
        const std::string tb = bk + "." + tag;
        norm(tb + ".norm_attn", tr->norm_attn);
        lin(tb + ".attn.q", tr->attn.q);
        lin(tb + ".attn.k", tr->attn.k);
        lin(tb + ".attn.v", tr->attn.v);
        lin(tb + ".attn.o", tr->attn.o);
        norm(tb + ".norm_ffn", tr->norm_ffn);
        lin(tb + ".ffn_in", tr->ffn_in);
        lin(tb + ".ffn_out", tr->ffn_out);
      }
    }
    out.emplace_back("decoder.prelu.slope", &out_slope);
    lin("decoder.expand", expand);
    out.emplace_back("decoder.deconv.weight", &dec_w);
    out.emplace_back("decoder.deconv.bias", &dec_b);
    out.emplace_back("memory.group1", &mem_group[0]);
    out.emplace_back("memory.group2", &mem_group[1]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Initialization and parameter accounting
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> init_fan_in(Rng& rng, Shape shape, int64_t fan_in) {
  Tensor<T> t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> init_zeros(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> init_const(Shape shape, T v) {
  Tensor<T> t = Tensor<T>::full(std::move(shape), v);
  t.set_requires_grad(true);
  return t;
}

template <typename T>
LinearParams<T> init_linear(Rng& rng, int64_t out, int64_t in) {
  return {init_fan_in<T>(rng, {out, in}, in), init_zeros<T>({out})};
}

template <typename T>
NormParams<T> init_norm(int64_t n) {
  return {init_const<T>({n}, T(1)), init_zeros<T>({n})};
}

template <typename T>
TransformerParams<T> init_transformer(Rng& rng, int64_t n) {
  TransformerParams<T> p;
  p.norm_attn = init_norm<T>(n);
  p.attn.q = init_linear<T>(rng, n, n);
  p.attn.k = init_linear<T>(rng, n, n);
  p.attn.v = init_linear<T>(rng, n, n);
  p.attn.o = init_linear<T>(rng, n, n);
  p.norm_ffn = init_norm<T>(n);
  p.ffn_in = init_linear<T>(rng, 4 * n, n);
  p.ffn_out = init_linear<T>(rng, n, 4 * n);
  return p;
}

}  // namespace detail

// Deterministic initialization: uniform fan-in scaling for linear/conv
// weights, zeros for biases, 0.25 for PReLU slopes, N(0, 0.02) for memory
// tokens. The same seed always yields bit-identical parameters.
template <typename T>
UsesModel<T> init_params(const UsesConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int64_t D = cfg.embed_dim, N = cfg.bottleneck_dim, H = cfg.tac_hidden;
  UsesModel<T> m;
  m.cfg = cfg;
  m.enc_w = detail::init_fan_in<T>(rng, {D, 2, 3, 3}, 2 * 9);
  m.enc_b = detail::init_zeros<T>({D});
  m.enc_norm = detail::init_norm<T>(D);
  m.bottleneck = detail::init_linear<T>(rng, N, D);
  m.blocks.resize(static_cast<size_t>(cfg.num_blocks));
  for (int64_t k = 0; k < cfg.num_blocks; ++k) {
    BlockParams<T>& b = m.blocks[static_cast<size_t>(k)];
    b.has_tac = k < cfg.spatial_blocks;
    if (b.has_tac) {
      b.tac.transform = detail::init_linear<T>(rng, H, N);
      b.tac.transform_slope = detail::init_const<T>({H}, T(0.25));
      b.tac.project = detail::init_linear<T>(rng, N, 2 * H);
      b.tac.project_slope = detail::init_const<T>({N}, T(0.25));
    }
    b.freq = detail::init_transformer<T>(rng, N);
    b.time = detail::init_transformer<T>(rng, N);
  }
  m.out_slope = detail::init_const<T>({N}, T(0.25));
  m.expand = detail::init_linear<T>(rng, D, N);
  m.dec_w = detail::init_fan_in<T>(rng, {D, 2 * cfg.num_outputs, 3, 3}, D * 9);
  m.dec_b = detail::init_zeros<T>({2 * cfg.num_outputs});
  for (int g = 0; g < 2; ++g) {
    Tensor<T> tok({1, N, 1, cfg.mem_tokens});
    for (int64_t i = 0; i < tok.numel(); ++i)
      tok.data()[i] = static_cast<T>(rng.normal(0.0, 0.02));
    tok.set_requires_grad(true);
    m.mem_group[g] = tok;
  }
  return m;
}

// Closed-form parameter count; independent of channel count, sample rate and
// signal length by construction.
inline int64_t param_count(const UsesConfig& cfg) {
  cfg.validate();
  const int64_t D = cfg.embed_dim, N = cfg.bottleneck_dim, H = cfg.tac_hidden;
  const int64_t transformer = 2 * N + 4 * (N * N + N) + 2 * N + (4 * N * N + 4 * N) + (4 * N * N + N);
  const int64_t tac = (H * N + H + H) + (N * 2 * H + N + N);
  int64_t total = 0;
  total += D * 2 * 9 + D;  // encoder conv
  total += 2 * D;          // encoder norm
  total += N * D + N;      // bottleneck
  total += cfg.num_blocks * 2 * transformer;
  total += cfg.spatial_blocks * tac;
  total += N;              // decoder PReLU
  total += D * N + D;      // expand
  total += D * 2 * cfg.num_outputs * 9 + 2 * cfg.num_outputs;  // deconv
  total += 2 * N * cfg.mem_tokens;                             // memory groups
  return total;
}

template <typename T>
int64_t param_count(UsesModel<T>& model) {
  int64_t n = 0;
  for (auto& [name, t] : model.named_params()) n += t->numel();
  return n;
}

// ---------------------------------------------------------------------------
// Forward building blocks
// ---------------------------------------------------------------------------

// Multi-head self/cross attention on [L, N] or [B, L, N].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query, const Tensor<T>& key,
                               const Tensor<T>& value, const AttentionParams<T>& p,
                               int64_t heads) {
  const bool batched = query.ndim() == 3;
  check_shape(batched || query.ndim() == 2, "attention expects [L,N] or [B,L,N]");
  Tensor<T> q = batched ? query : reshape(query, {1, query.size(0), query.size(1)});
  Tensor<T> k = batched ? key : reshape(key, {1, key.size(0), key.size(1)});
  Tensor<T> v = batched ? value : reshape(value, {1, value.size(0), value.size(1)});
  const int64_t B = q.size(0), Lq = q.size(1), N = q.size(2), Lk = k.size(1);
  check_config(N % heads == 0, "model width " + std::to_string(N) +
                                   " not divisible by " + std::to_string(heads) + " heads");
  check_shape(k.size(2) == N && v.size(2) == N && v.size(1) == Lk,
              "attention: key/value shapes inconsistent");
  const int64_t hd = N / heads;

  auto split_heads = [&](const Tensor<T>& x, int64_t L) {
    // [B,L,N] -> [B*heads, L, hd]
    return reshape(permute(reshape(x, {B, L, heads, hd}), {0, 2, 1, 3}), {B * heads, L, hd});
  };
  Tensor<T> qh = split_heads(linear(q, p.q.w, p.q.b), Lq);
  Tensor<T> kh = split_heads(linear(k, p.k.w, p.k.b), Lk);
  Tensor<T> vh = split_heads(linear(v, p.v.w, p.v.b), Lk);

  Tensor<T> scores = mul_const(bmm(qh, permute(kh, {0, 2, 1})),
                               static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  Tensor<T> attn = softmax_lastdim(scores);
  Tensor<T> mixed = bmm(attn, vh);  // [B*heads, Lq, hd]
  Tensor<T> merged =
      reshape(permute(reshape(mixed, {B, heads, Lq, hd}), {0, 2, 1, 3}), {B, Lq, N});
  Tensor<T> out = linear(merged, p.o.w, p.o.b);
  return batched ? out : reshape(out, {Lq, N});
}

// Pre-norm transformer layer over the last axis of [B, L, N].
template <typename T>
Tensor<T> transformer_layer(const Tensor<T>& x, const TransformerParams<T>& p, int64_t heads,
                            T eps = T(1e-5)) {
  const int64_t last = x.ndim() - 1;
  Tensor<T> a = layer_norm(x, last, p.norm_attn.gain, p.norm_attn.bias, eps);
  Tensor<T> h = add(x, multi_head_attention(a, a, a, p.attn, heads));
  Tensor<T> f = layer_norm(h, last, p.norm_ffn.gain, p.norm_ffn.bias, eps);
  Tensor<T> ff = linear(relu(linear(f, p.ffn_in.w, p.ffn_in.b)), p.ffn_out.w, p.ffn_out.b);
  return add(h, ff);
}

// Mean over the channel axis (axis 0) with sorted accumulation, so the
// result is bit-identical under any permutation of the input channels.
template <typename T>
Tensor<T> channel_mean_exact(const Tensor<T>& x) {
  check_shape(x.ndim() >= 2, "channel_mean_exact expects a channel axis");
  const int64_t C = x.size(0);
  const int64_t inner = x.numel() / C;
  Shape os(x.shape().begin() + 1, x.shape().end());
  auto ctx = detail::op_context(x);
  Tensor<T> out(os);
  const T* px = x.data();
  T* po = out.data();
  std::vector<T> vals(static_cast<size_t>(C));
  const T inv = T(1) / static_cast<T>(C);
  for (int64_t i = 0; i < inner; ++i) {
    for (int64_t c = 0; c < C; ++c) vals[static_cast<size_t>(c)] = px[c * inner + i];
    std::sort(vals.begin(), vals.end());
    T s = 0;
    for (T v : vals) s += v;
    po[i] = s * inv;
  }
  detail::record_op(
      "channel_mean", ctx, out,
      [x, out, C, inner, inv]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !x.requires_grad()) return;
        T* gx = x.grad_accum();
        for (int64_t c = 0; c < C; ++c)
          for (int64_t i = 0; i < inner; ++i) gx[c * inner + i] += go[i] * inv;
      },
      {x});
  return out;
}

// Transform-average-concatenate over channels; shared weights, residual out.
template <typename T>
Tensor<T> tac(const Tensor<T>& features, const TacParams<T>& p) {
  const int64_t C = features.size(0), N = features.size(1), F = features.size(2),
                Tt = features.size(3);
  Tensor<T> xp = permute(features, {0, 2, 3, 1});  // [C,F,T,N]
  Tensor<T> z = prelu(linear(xp, p.transform.w, p.transform.b), p.transform_slope, 3);
  const int64_t H = z.size(3);
  Tensor<T> zm = channel_mean_exact(z);  // [F,T,H]
  Tensor<T> zm_b = broadcast_to(reshape(zm, {1, F, Tt, H}), {C, F, Tt, H});
  Tensor<T> cat = concat<T>({z, zm_b}, 3);  // [C,F,T,2H]
  Tensor<T> y = prelu(linear(cat, p.project.w, p.project.b), p.project_slope, 3);
  return add(features, permute(y, {0, 3, 1, 2}));
}

// Frequency-path transformer: each (channel, frame) is a length-F sequence.
template <typename T>
Tensor<T> freq_transform(const Tensor<T>& x, const TransformerParams<T>& p, int64_t heads) {
  const int64_t C = x.size(0), N = x.size(1), F = x.size(2), Tt = x.size(3);
  Tensor<T> s = reshape(permute(x, {0, 3, 2, 1}), {C * Tt, F, N});
  Tensor<T> t = transformer_layer(s, p, heads);
  return permute(reshape(t, {C, Tt, F, N}), {0, 3, 2, 1});
}

// Time-path transformer: each (channel, frequency) is a length-T sequence.
template <typename T>
Tensor<T> time_transform(const Tensor<T>& x, const TransformerParams<T>& p, int64_t heads) {
  const int64_t C = x.size(0), N = x.size(1), F = x.size(2), Tt = x.size(3);
  Tensor<T> s = reshape(permute(x, {0, 2, 3, 1}), {C * F, Tt, N});
  Tensor<T> t = transformer_layer(s, p, heads);
  return permute(reshape(t, {C, F, Tt, N}), {0, 3, 1, 2});
}

template <typename T>
Tensor<T> multi_path_block(const Tensor<T>& features, const BlockParams<T>& block,
                           bool with_tac, int64_t heads) {
  Tensor<T> x = features;
  if (with_tac) x = tac(x, block.tac);
  x = freq_transform(x, block.freq, heads);
  x = time_transform(x, block.time, heads);
  return x;
}

template <typename T>
Tensor<T> merge_reference(const Tensor<T>& features, int64_t ref_channel) {
  check_shape(ref_channel >= 0 && ref_channel < features.size(0),
              "reference channel " + std::to_string(ref_channel) + " out of range for " +
                  std::to_string(features.size(0)) + " channels");
  return slice(features, 0, ref_channel, 1);
}

// ---------------------------------------------------------------------------
// Memory-token streaming
// ---------------------------------------------------------------------------

template <typename T>
struct MemoryState {
  Tensor<T> tokens;  // [N, G]
  EnhanceMode mode = EnhanceMode::denoise;
};

template <typename T>
MemoryState<T> initial_memory(UsesModel<T>& model, EnhanceMode mode) {
  const int g = mode == EnhanceMode::denoise_dereverb ? 0 : 1;
  const int64_t N = model.cfg.bottleneck_dim, G = model.cfg.mem_tokens;
  return MemoryState<T>{reshape(model.mem_group[g], {N, G}), mode};
}

// Broadcast tokens over channels and frequencies and prefix them in time.
template <typename T>
Tensor<T> prefix_memory(const Tensor<T>& features, const Tensor<T>& tokens) {
  const int64_t G = tokens.defined() ? tokens.size(1) : 0;
  if (G == 0) return features;
  const int64_t C = features.size(0), N = features.size(1), F = features.size(2);
  check_shape(tokens.size(0) == N, "memory tokens have width " + std::to_string(tokens.size(0)) +
                                       " but features have " + std::to_string(N));
  Tensor<T> tok = broadcast_to(reshape(tokens, {1, N, 1, G}), {C, N, F, G});
  return concat<T>({tok, features}, 3);
}

// One segment through the whole block stack. Returns the merged
// single-channel representation for the segment plus the carried memory.
template <typename T>
std::pair<Tensor<T>, MemoryState<T>> forward_segment(const Tensor<T>& features,
                                                     const MemoryState<T>& mem,
                                                     UsesModel<T>& model, EnhanceMode mode) {
  const UsesConfig& cfg = model.cfg;
  check_config(mem.mode == mode, std::string("memory state carries mode ") +
                                     mode_name(mem.mode) + " but " + mode_name(mode) +
                                     " was requested");
  check_shape(features.size(3) <= cfg.seg_frames,
              "segment of " + std::to_string(features.size(3)) + " frames exceeds seg_frames=" +
                  std::to_string(cfg.seg_frames));
  const int64_t G = cfg.mem_tokens;
  const int64_t Ts = features.size(3);
  Tensor<T> x = prefix_memory(features, mem.tokens);
  for (int64_t k = 0; k < cfg.num_blocks; ++k) {
    if (k == cfg.spatial_blocks) x = merge_reference(x, cfg.ref_channel);
    x = multi_path_block(x, model.blocks[static_cast<size_t>(k)], k < cfg.spatial_blocks,
                         cfg.heads);
  }
  if (cfg.spatial_blocks == cfg.num_blocks) x = merge_reference(x, cfg.ref_channel);
  MemoryState<T> next = mem;
  Tensor<T> out = x;
  if (G > 0) {
    // Leading G frames are the processed tokens; average over frequency to
    // recover the [N, G] prefix for the next segment.
    Tensor<T> tok = mean_axis(slice(x, 3, 0, G), 2);  // [1, N, G]
    next.tokens = reshape(tok, {cfg.bottleneck_dim, G});
    out = slice(x, 3, G, Ts);
  }
  return {out, next};
}

// ---------------------------------------------------------------------------
// Encoder / decoder
// ---------------------------------------------------------------------------

struct SpecMeta {
  int sample_rate = 0;
  int64_t win = 0, hop = 0;
  int64_t freqs = 0, frames = 0;
  int64_t num_samples = 0;
};

inline SpecMeta spec_meta_for(int sample_rate, int64_t num_samples,
                              const StftConfig& stft_cfg = {}) {
  stft_cfg.validate(sample_rate);
  SpecMeta m;
  m.sample_rate = sample_rate;
  m.win = stft_cfg.window_samples(sample_rate);
  m.hop = stft_cfg.hop_samples(sample_rate);
  m.freqs = m.win / 2 + 1;
  m.frames = detail::stft_frames(num_samples, m.hop);
  m.num_samples = num_samples;
  return m;
}

// Pointwise (1x1) convolution over the feature axis of [C, A, F, T].
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const LinearParams<T>& p) {
  Tensor<T> xp = permute(x, {0, 2, 3, 1});
  Tensor<T> y = linear(xp, p.w, p.b);
  return permute(y, {0, 3, 1, 2});
}

// Waveform channels -> bottleneck features [C, N, F, T].
template <typename T>
Tensor<T> encode(const std::vector<Tensor<T>>& channel_waves, UsesModel<T>& model,
                 const SpecMeta& meta, T norm_eps = T(1e-5)) {
  check_config(!channel_waves.empty(), "encode: no input channels");
  std::vector<Tensor<T>> specs;
  specs.reserve(channel_waves.size());
  for (const Tensor<T>& w : channel_waves) {
    check_shape(w.numel() == meta.num_samples, "encode: channel length mismatch");
    specs.push_back(
        reshape(stft_op(w, meta.win, meta.hop), {1, 2, meta.freqs, meta.frames}));
  }
  Tensor<T> x = specs.size() == 1 ? specs[0] : concat(specs, 0);
  Tensor<T> e = conv2d(x, model.enc_w, model.enc_b, 1, 1, 1, 1);
  Tensor<T> n = layer_norm(e, 1, model.enc_norm.gain, model.enc_norm.bias, norm_eps);
  return pointwise(n, model.bottleneck);
}

// Merged features [1, N, F, T] -> one waveform tensor per estimated source.
// Real/imaginary planes are predicted directly (spectral mapping).
template <typename T>
std::vector<Tensor<T>> decode(const Tensor<T>& features, UsesModel<T>& model,
                              const SpecMeta& meta, int64_t out_samples) {
  const UsesConfig& cfg = model.cfg;
  check_shape(features.size(0) == 1 && features.size(1) == cfg.bottleneck_dim &&
                  features.size(2) == meta.freqs,
              "decode: features " + shape_str(features.shape()) + " inconsistent with meta");
  Tensor<T> a = prelu(features, model.out_slope, 1);
  Tensor<T> b = pointwise(a, model.expand);
  Tensor<T> spec = conv_transpose2d(b, model.dec_w, model.dec_b, 1, 1, 1, 1);
  const int64_t Ts = features.size(3);
  std::vector<Tensor<T>> waves;
  waves.reserve(static_cast<size_t>(cfg.num_outputs));
  for (int64_t s = 0; s < cfg.num_outputs; ++s) {
    Tensor<T> planes = reshape(slice(spec, 1, 2 * s, 2), {2, meta.freqs, Ts});
    waves.push_back(istft_op(planes, meta.win, meta.hop, out_samples));
  }
  return waves;
}

// ---------------------------------------------------------------------------
// Full forward: segmentation + memory chaining + per-segment decode
// ---------------------------------------------------------------------------

// Input channel waveforms (already variance-normalized) -> per-output
// waveforms of identical length. Frames are split into non-overlapping
// seg_frames chunks; memory tokens carry context between them.
template <typename T>
std::vector<Tensor<T>> forward_waveforms(const std::vector<Tensor<T>>& channel_waves,
                                         UsesModel<T>& model, int sample_rate,
                                         EnhanceMode mode, const StftConfig& stft_cfg = {}) {
  const UsesConfig& cfg = model.cfg;
  cfg.validate();
  check_config(!channel_waves.empty(), "forward: no input channels");
  check_config(cfg.ref_channel < static_cast<int64_t>(channel_waves.size()),
               "reference channel " + std::to_string(cfg.ref_channel) + " out of range for " +
                   std::to_string(channel_waves.size()) + " channels");
  const int64_t L = channel_waves[0].numel();
  check_config(L > 0, "forward: empty signal");
  const SpecMeta meta = spec_meta_for(sample_rate, L, stft_cfg);

  Tensor<T> z = encode(channel_waves, model, meta);
  MemoryState<T> mem = initial_memory(model, mode);

  std::vector<std::vector<Tensor<T>>> chunks(static_cast<size_t>(cfg.num_outputs));
  const int64_t total_frames = meta.frames;
  for (int64_t t0 = 0; t0 < total_frames; t0 += cfg.seg_frames) {
    const int64_t Ts = std::min(cfg.seg_frames, total_frames - t0);
    Tensor<T> seg = slice(z, 3, t0, Ts);
    auto [merged, next] = forward_segment(seg, mem, model, mode);
    mem = next;
    const bool last = t0 + Ts >= total_frames;
    const int64_t start_samp = t0 * meta.hop;
    const int64_t out_len = last ? (L - start_samp) : Ts * meta.hop;
    SpecMeta chunk_meta = meta;
    chunk_meta.frames = Ts;
    chunk_meta.num_samples = out_len;
    std::vector<Tensor<T>> waves = decode(merged, model, chunk_meta, out_len);
    for (int64_t s = 0; s < cfg.num_outputs; ++s)
      chunks[static_cast<size_t>(s)].push_back(waves[static_cast<size_t>(s)]);
  }

  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<size_t>(cfg.num_outputs));
  for (auto& c : chunks) outs.push_back(c.size() == 1 ? c[0] : concat(c, 0));
  return outs;
}

template <typename T>
std::vector<Tensor<T>> audio_to_tensors(const AudioBuffer& audio) {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<size_t>(audio.num_channels()));
  for (int64_t c = 0; c < audio.num_channels(); ++c) {
    const auto& ch = audio.channel(c);
    std::vector<T> data(ch.size());
    for (size_t i = 0; i < ch.size(); ++i) data[i] = static_cast<T>(ch[i]);
    out.push_back(Tensor<T>::from({static_cast<int64_t>(ch.size())}, std::move(data)));
  }
  return out;
}

// End-to-end enhancement: variance normalization, segmented forward, revert.
// Output has cfg.num_outputs channels and exactly the input's sample count.
template <typename T>
AudioBuffer enhance(const AudioBuffer& audio, UsesModel<T>& model, EnhanceMode mode,
                    const StftConfig& stft_cfg = {}) {
  audio.validate();
  check_config(audio.num_samples() > 0, "enhance: empty input");
  auto [norm, scale] = variance_normalize(audio);
  std::vector<Tensor<T>> xs = audio_to_tensors<T>(norm);
  std::vector<Tensor<T>> outs = forward_waveforms(xs, model, audio.sample_rate, mode, stft_cfg);
  AudioBuffer result(audio.sample_rate, model.cfg.num_outputs, audio.num_samples());
  for (int64_t s = 0; s < model.cfg.num_outputs; ++s) {
    const Tensor<T>& w = outs[static_cast<size_t>(s)];
    for (int64_t i = 0; i < audio.num_samples(); ++i)
      result.samples[static_cast<size_t>(s)][static_cast<size_t>(i)] =
          static_cast<double>(w.data()[i]) * scale;
  }
  return result;
}

}  // namespace uses

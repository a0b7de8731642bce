#include "tap/can.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "tap/config_json.hpp"
#include "tap/eval.hpp"

namespace tap::can {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int log2_int(int n) {
  int k = 0;
  while ((1 << k) < n) ++k;
  return k;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Numerically stable binary cross-entropy with logits.
double bce_with_logits(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double smooth_l1(double u) {
  const double a = std::abs(u);
  return a < 1.0 ? 0.5 * u * u : a - 0.5;
}

double smooth_l1_grad(double u) { return std::clamp(u, -1.0, 1.0); }

Conv1d make_conv(int in_channels, int out_channels) {
  Conv1d c;
  c.in_channels = in_channels;
  c.out_channels = out_channels;
  c.kernel = 3;
  c.w.assign(static_cast<std::size_t>(out_channels) * in_channels * 3, 0.0);
  c.b.assign(out_channels, 0.0);
  return c;
}

// Same-padded kernel-3 stride-1 convolution: out[t] depends on in[t-1..t+1].
void conv_same_forward(const std::vector<double>& in, int len,
                       const Conv1d& conv, std::vector<double>& out) {
  const int ci = conv.in_channels;
  const int co = conv.out_channels;
  out.assign(static_cast<std::size_t>(len) * co, 0.0);
  for (int t = 0; t < len; ++t) {
    for (int o = 0; o < co; ++o) {
      double acc = conv.b[o];
      for (int k = 0; k < 3; ++k) {
        const int src = t + k - 1;
        if (src < 0 || src >= len) continue;
        const double* row = in.data() + static_cast<std::size_t>(src) * ci;
        const double* wk =
            conv.w.data() + (static_cast<std::size_t>(o) * ci) * 3 + k;
        for (int c = 0; c < ci; ++c) acc += row[c] * wk[static_cast<std::size_t>(c) * 3];
      }
      out[static_cast<std::size_t>(t) * co + o] = acc;
    }
  }
}

void conv_same_backward(const std::vector<double>& in, int len,
                        const Conv1d& conv, const std::vector<double>& d_out,
                        std::vector<double>& d_in, Conv1d& d_conv) {
  const int ci = conv.in_channels;
  const int co = conv.out_channels;
  d_in.assign(static_cast<std::size_t>(len) * ci, 0.0);
  for (int t = 0; t < len; ++t) {
    for (int o = 0; o < co; ++o) {
      const double g = d_out[static_cast<std::size_t>(t) * co + o];
      if (g == 0.0) continue;
      d_conv.b[o] += g;
      for (int k = 0; k < 3; ++k) {
        const int src = t + k - 1;
        if (src < 0 || src >= len) continue;
        const double* row = in.data() + static_cast<std::size_t>(src) * ci;
        double* d_row = d_in.data() + static_cast<std::size_t>(src) * ci;
        for (int c = 0; c < ci; ++c) {
          d_conv.weight(o, c, k) += g * row[c];
          d_row[c] += g * conv.weight(o, c, k);
        }
      }
    }
  }
}

// Stride-2 kernel-3 convolution: out[i] depends on in[2i..2i+2], zero-padded
// on the right; output length floor(len / 2).
void conv_stride2_forward(const std::vector<double>& in, int len,
                          const Conv1d& conv, std::vector<double>& out,
                          int& out_len) {
  const int ci = conv.in_channels;
  const int co = conv.out_channels;
  out_len = len / 2;
  out.assign(static_cast<std::size_t>(std::max(out_len, 0)) * co, 0.0);
  for (int i = 0; i < out_len; ++i) {
    for (int o = 0; o < co; ++o) {
      double acc = conv.b[o];
      for (int k = 0; k < 3; ++k) {
        const int src = 2 * i + k;
        if (src >= len) continue;
        const double* row = in.data() + static_cast<std::size_t>(src) * ci;
        for (int c = 0; c < ci; ++c) acc += row[c] * conv.weight(o, c, k);
      }
      out[static_cast<std::size_t>(i) * co + o] = acc;
    }
  }
}

void conv_stride2_backward(const std::vector<double>& in, int len,
                           const Conv1d& conv, const std::vector<double>& d_out,
                           int out_len, std::vector<double>& d_in,
                           Conv1d& d_conv) {
  const int ci = conv.in_channels;
  const int co = conv.out_channels;
  d_in.assign(static_cast<std::size_t>(len) * ci, 0.0);
  for (int i = 0; i < out_len; ++i) {
    for (int o = 0; o < co; ++o) {
      const double g = d_out[static_cast<std::size_t>(i) * co + o];
      if (g == 0.0) continue;
      d_conv.b[o] += g;
      for (int k = 0; k < 3; ++k) {
        const int src = 2 * i + k;
        if (src >= len) continue;
        const double* row = in.data() + static_cast<std::size_t>(src) * ci;
        double* d_row = d_in.data() + static_cast<std::size_t>(src) * ci;
        for (int c = 0; c < ci; ++c) {
          d_conv.weight(o, c, k) += g * row[c];
          d_row[c] += g * conv.weight(o, c, k);
        }
      }
    }
  }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::max(x, 0.0);
}

struct ForwardCache {
  std::vector<double> input;                 // T x D
  int input_len = 0;
  std::vector<double> base_pre;              // T x C
  std::vector<double> base_act;
  std::vector<std::vector<double>> chain_pre;  // per halving step
  std::vector<std::vector<double>> chain_act;
  std::vector<int> chain_len;
  std::vector<std::vector<double>> cls_out;  // per configured level
  std::vector<std::vector<double>> reg_out;
};

std::vector<double> features_to_double(const FeatureSequence& f) {
  std::vector<double> out(f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    out[i] = static_cast<double>(f.values[i]);
  }
  return out;
}

ForwardCache run_forward(const CanNetwork& net, const FeatureSequence& features) {
  validate_features(features);
  if (features.dim != net.cfg.input_dim) {
    throw ValidationError("feature dimension does not match the network input");
  }
  ForwardCache cache;
  cache.input = features_to_double(features);
  cache.input_len = static_cast<int>(features.time_steps);

  conv_same_forward(cache.input, cache.input_len, net.base, cache.base_pre);
  cache.base_act = cache.base_pre;
  relu_inplace(cache.base_act);

  const std::vector<double>* prev = &cache.base_act;
  int prev_len = cache.input_len;
  cache.chain_pre.resize(net.chain.size());
  cache.chain_act.resize(net.chain.size());
  cache.chain_len.resize(net.chain.size());
  for (std::size_t m = 0; m < net.chain.size(); ++m) {
    conv_stride2_forward(*prev, prev_len, net.chain[m], cache.chain_pre[m],
                         cache.chain_len[m]);
    cache.chain_act[m] = cache.chain_pre[m];
    relu_inplace(cache.chain_act[m]);
    prev = &cache.chain_act[m];
    prev_len = cache.chain_len[m];
  }

  cache.cls_out.resize(net.heads.size());
  cache.reg_out.resize(net.heads.size());
  for (std::size_t l = 0; l < net.heads.size(); ++l) {
    const int step = log2_int(net.cfg.level_strides[l]) - 1;
    const auto& feat = cache.chain_act[step];
    const int len = cache.chain_len[step];
    conv_same_forward(feat, len, net.heads[l].cls, cache.cls_out[l]);
    conv_same_forward(feat, len, net.heads[l].reg, cache.reg_out[l]);
  }
  return cache;
}

CanOutputs collect_outputs(const CanNetwork& net, const ForwardCache& cache) {
  CanOutputs out;
  for (std::size_t l = 0; l < net.heads.size(); ++l) {
    const int step = log2_int(net.cfg.level_strides[l]) - 1;
    const int cells = cache.chain_len[step];
    const int n_scales = net.heads[l].cls.out_channels;
    for (int i = 0; i < cells; ++i) {
      for (int a = 0; a < n_scales; ++a) {
        out.cls_logits.push_back(
            cache.cls_out[l][static_cast<std::size_t>(i) * n_scales + a]);
        out.deltas.push_back(
            {cache.reg_out[l][static_cast<std::size_t>(i) * 2 * n_scales + 2 * a],
             cache.reg_out[l]
                          [static_cast<std::size_t>(i) * 2 * n_scales + 2 * a + 1]});
      }
    }
  }
  return out;
}

// Maps a flat anchor index back to (level, cell, scale) output coordinates.
struct AnchorIndexer {
  struct LevelSpan {
    std::size_t begin;
    int cells;
    int scales;
  };
  std::vector<LevelSpan> levels;

  static AnchorIndexer build(const CanNetwork& net, int time_steps) {
    AnchorIndexer idx;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < net.cfg.level_strides.size(); ++l) {
      const int cells = time_steps / net.cfg.level_strides[l];
      const int scales =
          static_cast<int>(net.cfg.scales_for_level(l).size());
      idx.levels.push_back({offset, cells, scales});
      offset += static_cast<std::size_t>(std::max(cells, 0)) * scales;
    }
    return idx;
  }

  std::size_t total() const {
    const auto& last = levels.back();
    return last.begin + static_cast<std::size_t>(std::max(last.cells, 0)) *
                            last.scales;
  }
};

struct PerAnchorGrads {
  // d loss / d cls logit and d loss / d (dc, dl), indexed like the anchors.
  std::vector<double> d_cls;
  std::vector<std::array<double, 2>> d_reg;
};

void backward(const CanNetwork& net, const ForwardCache& cache,
              const PerAnchorGrads& grads, CanNetwork& grad_net) {
  // Scatter per-anchor gradients into head-output shaped buffers.
  std::vector<std::vector<double>> d_cls_out(net.heads.size());
  std::vector<std::vector<double>> d_reg_out(net.heads.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < net.heads.size(); ++l) {
    const int step = log2_int(net.cfg.level_strides[l]) - 1;
    const int cells = cache.chain_len[step];
    const int n_scales = net.heads[l].cls.out_channels;
    d_cls_out[l].assign(static_cast<std::size_t>(std::max(cells, 0)) * n_scales,
                        0.0);
    d_reg_out[l].assign(
        static_cast<std::size_t>(std::max(cells, 0)) * 2 * n_scales, 0.0);
    for (int i = 0; i < cells; ++i) {
      for (int a = 0; a < n_scales; ++a) {
        const std::size_t flat = offset + static_cast<std::size_t>(i) * n_scales + a;
        d_cls_out[l][static_cast<std::size_t>(i) * n_scales + a] =
            grads.d_cls[flat];
        d_reg_out[l][static_cast<std::size_t>(i) * 2 * n_scales + 2 * a] =
            grads.d_reg[flat][0];
        d_reg_out[l][static_cast<std::size_t>(i) * 2 * n_scales + 2 * a + 1] =
            grads.d_reg[flat][1];
      }
    }
    offset += static_cast<std::size_t>(std::max(cells, 0)) * n_scales;
  }

  // Head backward into per-chain-step feature gradients.
  std::vector<std::vector<double>> d_chain(net.chain.size());
  for (std::size_t m = 0; m < net.chain.size(); ++m) {
    d_chain[m].assign(cache.chain_act[m].size(), 0.0);
  }
  for (std::size_t l = 0; l < net.heads.size(); ++l) {
    const int step = log2_int(net.cfg.level_strides[l]) - 1;
    const int len = cache.chain_len[step];
    std::vector<double> d_feat;
    conv_same_backward(cache.chain_act[step], len, net.heads[l].cls,
                       d_cls_out[l], d_feat, grad_net.heads[l].cls);
    for (std::size_t i = 0; i < d_feat.size(); ++i) d_chain[step][i] += d_feat[i];
    conv_same_backward(cache.chain_act[step], len, net.heads[l].reg,
                       d_reg_out[l], d_feat, grad_net.heads[l].reg);
    for (std::size_t i = 0; i < d_feat.size(); ++i) d_chain[step][i] += d_feat[i];
  }

  // Chain backward, deepest first.
  std::vector<double> d_below;
  for (std::size_t m = net.chain.size(); m-- > 0;) {
    std::vector<double>& d_act = d_chain[m];
    if (!d_below.empty()) {
      for (std::size_t i = 0; i < d_act.size(); ++i) d_act[i] += d_below[i];
    }
    for (std::size_t i = 0; i < d_act.size(); ++i) {
      if (cache.chain_pre[m][i] <= 0.0) d_act[i] = 0.0;
    }
    const std::vector<double>& in =
        m == 0 ? cache.base_act : cache.chain_act[m - 1];
    const int in_len = m == 0 ? cache.input_len : cache.chain_len[m - 1];
    conv_stride2_backward(in, in_len, net.chain[m], d_act, cache.chain_len[m],
                          d_below, grad_net.chain[m]);
  }

  std::vector<double> d_base = d_below.empty()
                                   ? std::vector<double>(cache.base_act.size(), 0.0)
                                   : std::move(d_below);
  for (std::size_t i = 0; i < d_base.size(); ++i) {
    if (cache.base_pre[i] <= 0.0) d_base[i] = 0.0;
  }
  std::vector<double> d_input;
  conv_same_backward(cache.input, cache.input_len, net.base, d_base, d_input,
                     grad_net.base);
}

CanNetwork make_grad_shell(const CanNetwork& net) {
  CanNetwork g;
  g.cfg = net.cfg;
  g.base = make_conv(net.base.in_channels, net.base.out_channels);
  for (const Conv1d& c : net.chain) {
    g.chain.push_back(make_conv(c.in_channels, c.out_channels));
  }
  for (const LevelHeads& h : net.heads) {
    LevelHeads gh;
    gh.cls = make_conv(h.cls.in_channels, h.cls.out_channels);
    gh.reg = make_conv(h.reg.in_channels, h.reg.out_channels);
    g.heads.push_back(std::move(gh));
  }
  return g;
}

bool proposal_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.end < b.segment.end;
}

std::vector<Proposal> greedy_nms(std::vector<Proposal> proposals, double thr) {
  std::sort(proposals.begin(), proposals.end(), proposal_order);
  std::vector<Proposal> kept;
  for (Proposal& p : proposals) {
    bool drop = false;
    for (const Proposal& k : kept) {
      if (eval::tiou(k.segment, p.segment) >= thr) {
        drop = true;
        break;
      }
    }
    if (!drop) kept.push_back(std::move(p));
  }
  return kept;
}

}  // namespace

std::vector<double> CanConfig::scales_for_level(std::size_t level) const {
  if (!anchor_scales.empty()) return anchor_scales[level];
  const double stride = static_cast<double>(level_strides[level]);
  return {4.0 * stride, 6.0 * stride, 8.0 * stride};
}

void validate_can_config(const CanConfig& cfg) {
  if (cfg.input_dim == 0 || cfg.base_channels == 0) {
    throw ValidationError("network dimensions must be >= 1");
  }
  if (cfg.level_strides.empty()) {
    throw ValidationError("at least one pyramid level is required");
  }
  int prev = 1;
  for (int s : cfg.level_strides) {
    if (!is_power_of_two(s) || s < 2) {
      throw ValidationError("level strides must be powers of two >= 2");
    }
    if (s <= prev) {
      throw ValidationError("level strides must be strictly increasing");
    }
    prev = s;
  }
  if (!cfg.anchor_scales.empty() &&
      cfg.anchor_scales.size() != cfg.level_strides.size()) {
    throw ValidationError("anchor_scales must list one entry per level");
  }
  for (const auto& scales : cfg.anchor_scales) {
    if (scales.empty()) {
      throw ValidationError("every level needs at least one anchor scale");
    }
    for (double s : scales) {
      if (!(s > 0.0)) throw ValidationError("anchor scales must be positive");
    }
  }
  if (!(cfg.neg_tiou > 0.0) || !(cfg.neg_tiou < cfg.pos_tiou) ||
      cfg.pos_tiou > 1.0) {
    throw ValidationError("matching thresholds need 0 < neg < pos <= 1");
  }
  if (cfg.sample_ratio < 1) throw ValidationError("sample ratio must be >= 1");
  if (cfg.cascade_rounds < 1) {
    throw ValidationError("cascade rounds must be >= 1");
  }
  if (!(cfg.grad_clip > 0.0)) throw ValidationError("grad clip must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw ValidationError("momentum must lie in [0, 1)");
  }
  if (cfg.train_steps < 0 || cfg.batch_size < 1) {
    throw ValidationError("training schedule is invalid");
  }
}

std::vector<Anchor> generate_anchors(std::uint32_t time_steps, double fps,
                                     const CanConfig& cfg) {
  if (time_steps == 0) throw ValidationError("time steps must be >= 1");
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  std::vector<Anchor> anchors;
  for (std::size_t l = 0; l < cfg.level_strides.size(); ++l) {
    const int stride = cfg.level_strides[l];
    const int cells = static_cast<int>(time_steps) / stride;
    const std::vector<double> scales = cfg.scales_for_level(l);
    for (int i = 0; i < cells; ++i) {
      const double center = (i + 0.5) * stride / fps;
      for (std::size_t a = 0; a < scales.size(); ++a) {
        anchors.push_back({center, scales[a] / fps, static_cast<int>(l), i,
                           static_cast<int>(a)});
      }
    }
  }
  return anchors;
}

std::vector<EncodedTarget> encode_targets(
    std::span<const Anchor> anchors, std::span<const TemporalSegment> gt,
    const CanConfig& cfg) {
  std::vector<EncodedTarget> targets(anchors.size());
  if (anchors.empty()) return targets;

  auto anchor_segment = [](const Anchor& a) {
    return TemporalSegment{a.center - a.length / 2.0, a.center + a.length / 2.0};
  };

  std::vector<double> best_tiou(anchors.size(), 0.0);
  std::vector<int> best_gt(anchors.size(), -1);
  std::vector<double> gt_best_tiou(gt.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gt.size(), 0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const TemporalSegment seg = anchor_segment(anchors[i]);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = eval::tiou(seg, gt[g]);
      if (v > best_tiou[i]) {
        best_tiou[i] = v;
        best_gt[i] = static_cast<int>(g);
      }
      if (v > gt_best_tiou[g]) {
        gt_best_tiou[g] = v;
        gt_best_anchor[g] = i;
      }
    }
  }

  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (best_tiou[i] >= cfg.pos_tiou) {
      targets[i].label = AnchorLabel::kPos;
      targets[i].matched_gt = best_gt[i];
    } else if (best_tiou[i] < cfg.neg_tiou) {
      targets[i].label = AnchorLabel::kNeg;
    } else {
      targets[i].label = AnchorLabel::kIgnore;
    }
  }
  // Every ground truth claims its best anchor, as long as that overlap still
  // clears the negative threshold (keeps all positives above neg_tiou).
  std::vector<double> forced_tiou(anchors.size(), -1.0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (gt_best_tiou[g] < cfg.neg_tiou) continue;
    const std::size_t i = gt_best_anchor[g];
    if (gt_best_tiou[g] > forced_tiou[i]) {
      forced_tiou[i] = gt_best_tiou[g];
      targets[i].label = AnchorLabel::kPos;
      targets[i].matched_gt = static_cast<int>(g);
    }
  }

  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (targets[i].label != AnchorLabel::kPos) continue;
    const TemporalSegment& g = gt[targets[i].matched_gt];
    const double gc = 0.5 * (g.start + g.end);
    const double gl = g.length();
    targets[i].dc = (gc - anchors[i].center) / anchors[i].length;
    targets[i].dl = std::log(gl / anchors[i].length);
  }
  return targets;
}

std::optional<TemporalSegment> decode_one(const Anchor& anchor, double dc,
                                          double dl, double duration) {
  const double center = anchor.center + dc * anchor.length;
  const double length = anchor.length * std::exp(dl);
  TemporalSegment seg{center - length / 2.0, center + length / 2.0};
  seg.start = std::clamp(seg.start, 0.0, duration);
  seg.end = std::clamp(seg.end, 0.0, duration);
  if (seg.end - seg.start < 1e-6) return std::nullopt;
  return seg;
}

std::vector<TemporalSegment> decode_predictions(
    std::span<const Anchor> anchors,
    std::span<const std::array<double, 2>> deltas, double duration) {
  if (anchors.size() != deltas.size()) {
    throw ValidationError("anchor and delta counts differ");
  }
  std::vector<TemporalSegment> out;
  out.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!std::isfinite(deltas[i][0]) || !std::isfinite(deltas[i][1])) {
      throw ValidationError("regression deltas must be finite");
    }
    const auto seg = decode_one(anchors[i], deltas[i][0], deltas[i][1], duration);
    if (seg) out.push_back(*seg);
  }
  return out;
}

std::size_t CanNetwork::parameter_count() const {
  std::size_t n = base.w.size() + base.b.size();
  for (const Conv1d& c : chain) n += c.w.size() + c.b.size();
  for (const LevelHeads& h : heads) {
    n += h.cls.w.size() + h.cls.b.size() + h.reg.w.size() + h.reg.b.size();
  }
  return n;
}

std::vector<double> CanNetwork::flatten_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto append = [&flat](const Conv1d& c) {
    flat.insert(flat.end(), c.w.begin(), c.w.end());
    flat.insert(flat.end(), c.b.begin(), c.b.end());
  };
  append(base);
  for (const Conv1d& c : chain) append(c);
  for (const LevelHeads& h : heads) {
    append(h.cls);
    append(h.reg);
  }
  return flat;
}

void CanNetwork::unflatten_parameters(std::span<const double> params) {
  std::size_t pos = 0;
  auto take = [&](Conv1d& c) {
    std::copy_n(params.begin() + pos, c.w.size(), c.w.begin());
    pos += c.w.size();
    std::copy_n(params.begin() + pos, c.b.size(), c.b.begin());
    pos += c.b.size();
  };
  if (params.size() != parameter_count()) {
    throw ValidationError("parameter vector size does not match the network");
  }
  take(base);
  for (Conv1d& c : chain) take(c);
  for (LevelHeads& h : heads) {
    take(h.cls);
    take(h.reg);
  }
}

CanNetwork init_network(const CanConfig& cfg, std::uint64_t seed) {
  validate_can_config(cfg);
  CanNetwork net;
  net.cfg = cfg;
  const int c = static_cast<int>(cfg.base_channels);
  net.base = make_conv(static_cast<int>(cfg.input_dim), c);
  const int max_stride = cfg.level_strides.back();
  for (int s = 2; s <= max_stride; s *= 2) {
    net.chain.push_back(make_conv(c, c));
  }
  for (std::size_t l = 0; l < cfg.level_strides.size(); ++l) {
    const int n_scales = static_cast<int>(cfg.scales_for_level(l).size());
    LevelHeads h;
    h.cls = make_conv(c, n_scales);
    h.reg = make_conv(c, 2 * n_scales);
    net.heads.push_back(std::move(h));
  }

  SplitMix64 rng(seed_mix(seed, cfg.input_dim, cfg.base_channels));
  auto fill = [&](Conv1d& conv) {
    const double scale =
        cfg.init_scale / std::sqrt(static_cast<double>(conv.in_channels) * 3.0);
    for (double& w : conv.w) w = rng.next_normal() * scale;
    // Small random biases keep pre-activations off the ReLU kink, where a
    // finite-difference probe would straddle the non-smooth point.
    for (double& b : conv.b) b = rng.next_normal() * 0.01;
  };
  fill(net.base);
  for (Conv1d& conv : net.chain) fill(conv);
  for (LevelHeads& h : net.heads) {
    fill(h.cls);
    fill(h.reg);
  }
  return net;
}

CanOutputs forward(const CanNetwork& net, const FeatureSequence& features) {
  const ForwardCache cache = run_forward(net, features);
  return collect_outputs(net, cache);
}

std::vector<SampledAnchors> sample_anchors(
    const CanNetwork& net, std::span<const TrainItem> batch, SplitMix64& rng) {
  std::vector<SampledAnchors> samples;
  samples.reserve(batch.size());
  for (const TrainItem& item : batch) {
    const auto anchors =
        generate_anchors(item.features->time_steps, item.fps, net.cfg);
    const auto targets = encode_targets(anchors, item.gt, net.cfg);
    SampledAnchors s;
    std::vector<std::size_t> negs;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].label == AnchorLabel::kPos) {
        s.cls_indices.push_back(i);
        s.cls_labels.push_back(1.0);
        s.reg_indices.push_back(i);
        s.reg_targets.push_back({targets[i].dc, targets[i].dl});
      } else if (targets[i].label == AnchorLabel::kNeg) {
        negs.push_back(i);
      }
    }
    const std::size_t n_pos = s.reg_indices.size();
    const std::size_t want =
        std::min(negs.size(), n_pos > 0
                                  ? n_pos * static_cast<std::size_t>(
                                                net.cfg.sample_ratio)
                                  : static_cast<std::size_t>(net.cfg.sample_ratio));
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + rng.next_below(negs.size() - i);
      std::swap(negs[i], negs[j]);
      s.cls_indices.push_back(negs[i]);
      s.cls_labels.push_back(0.0);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

LossBreakdown loss_impl(const CanNetwork& net, std::span<const TrainItem> batch,
                        std::span<const SampledAnchors> samples,
                        CanNetwork* grad_net) {
  if (batch.empty() || batch.size() != samples.size()) {
    throw ValidationError("batch and sample sizes differ or are empty");
  }
  std::size_t total_cls = 0, total_reg = 0;
  for (const SampledAnchors& s : samples) {
    total_cls += s.cls_indices.size();
    total_reg += s.reg_indices.size();
  }
  if (total_cls == 0) {
    throw ValidationError("training step has zero labeled anchors");
  }

  LossBreakdown loss;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ForwardCache cache = run_forward(net, *batch[b].features);
    const CanOutputs out = collect_outputs(net, cache);
    const SampledAnchors& s = samples[b];

    PerAnchorGrads grads;
    if (grad_net != nullptr) {
      grads.d_cls.assign(out.cls_logits.size(), 0.0);
      grads.d_reg.assign(out.cls_logits.size(), {0.0, 0.0});
    }
    for (std::size_t i = 0; i < s.cls_indices.size(); ++i) {
      const std::size_t idx = s.cls_indices[i];
      const double y = s.cls_labels[i];
      const double z = out.cls_logits[idx];
      loss.cls += bce_with_logits(z, y) / static_cast<double>(total_cls);
      if (grad_net != nullptr) {
        grads.d_cls[idx] += (sigmoid(z) - y) / static_cast<double>(total_cls);
      }
    }
    for (std::size_t i = 0; i < s.reg_indices.size(); ++i) {
      const std::size_t idx = s.reg_indices[i];
      const double u0 = out.deltas[idx][0] - s.reg_targets[i][0];
      const double u1 = out.deltas[idx][1] - s.reg_targets[i][1];
      loss.reg += (smooth_l1(u0) + smooth_l1(u1)) /
                  static_cast<double>(total_reg);
      if (grad_net != nullptr) {
        const double scale =
            net.cfg.lambda_reg / static_cast<double>(total_reg);
        grads.d_reg[idx][0] += scale * smooth_l1_grad(u0);
        grads.d_reg[idx][1] += scale * smooth_l1_grad(u1);
      }
    }
    if (grad_net != nullptr) {
      backward(net, cache, grads, *grad_net);
    }
  }
  return loss;
}

}  // namespace

LossBreakdown compute_loss(const CanNetwork& net,
                           std::span<const TrainItem> batch,
                           std::span<const SampledAnchors> samples) {
  return loss_impl(net, batch, samples, nullptr);
}

LossBreakdown compute_loss_and_grads(const CanNetwork& net,
                                     std::span<const TrainItem> batch,
                                     std::span<const SampledAnchors> samples,
                                     std::vector<double>& grads) {
  CanNetwork grad_net = make_grad_shell(net);
  const LossBreakdown loss = loss_impl(net, batch, samples, &grad_net);
  grads = grad_net.flatten_parameters();
  return loss;
}

LossBreakdown train_step(CanNetwork& net, SgdState& state,
                         std::span<const TrainItem> batch, SplitMix64& rng) {
  if (batch.empty()) throw ValidationError("training batch is empty");
  const auto samples = sample_anchors(net, batch, rng);
  std::vector<double> grads;
  const LossBreakdown loss = compute_loss_and_grads(net, batch, samples, grads);

  std::vector<double> params = net.flatten_parameters();
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), 0.0);
  }
  const double clip = net.cfg.grad_clip;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = std::clamp(grads[i], -clip, clip);
    state.velocity[i] = net.cfg.momentum * state.velocity[i] + g;
    params[i] -= net.cfg.lr * state.velocity[i];
  }
  net.unflatten_parameters(params);
  return loss;
}

LossBreakdown train(CanNetwork& net, std::span<const TrainItem> corpus) {
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  SgdState state;
  SplitMix64 rng(seed_mix(net.cfg.seed, 0xCA11, corpus.size()));
  LossBreakdown last;
  std::size_t cursor = 0;
  const std::size_t batch_size =
      std::min<std::size_t>(net.cfg.batch_size, corpus.size());
  std::vector<TrainItem> batch(batch_size);
  for (int step = 0; step < net.cfg.train_steps; ++step) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch[i] = corpus[(cursor + i) % corpus.size()];
    }
    cursor = (cursor + batch_size) % corpus.size();
    last = train_step(net, state, batch, rng);
  }
  return last;
}

std::vector<Proposal> refine(const CanNetwork& net, const Proposal& coarse,
                             const FeatureSequence& features, double fps) {
  validate_features(features);
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  const std::int64_t total = features.time_steps;
  std::int64_t t0 = static_cast<std::int64_t>(std::floor(coarse.segment.start * fps));
  std::int64_t t1 = static_cast<std::int64_t>(std::ceil(coarse.segment.end * fps));
  t0 = std::clamp<std::int64_t>(t0, 0, total - 1);
  t1 = std::clamp<std::int64_t>(t1, t0 + 1, total);
  const std::uint32_t crop_len = static_cast<std::uint32_t>(t1 - t0);

  const auto anchors = generate_anchors(crop_len, fps, net.cfg);
  if (anchors.empty()) return {coarse};  // passthrough: crop below min stride

  FeatureSequence crop;
  crop.time_steps = crop_len;
  crop.dim = features.dim;
  crop.values.assign(
      features.values.begin() + static_cast<std::size_t>(t0) * features.dim,
      features.values.begin() + static_cast<std::size_t>(t1) * features.dim);

  const CanOutputs out = forward(net, crop);
  const double crop_duration = static_cast<double>(crop_len) / fps;

  struct Candidate {
    TemporalSegment seg;
    double score;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto seg =
        decode_one(anchors[i], out.deltas[i][0], out.deltas[i][1], crop_duration);
    if (seg) cands.push_back({*seg, sigmoid(out.cls_logits[i])});
  }

  auto candidate_order = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.seg.start != b.seg.start) return a.seg.start < b.seg.start;
    return a.seg.end < b.seg.end;
  };
  for (int round = 1; round < net.cfg.cascade_rounds; ++round) {
    std::sort(cands.begin(), cands.end(), candidate_order);
    if (cands.size() > 10) cands.resize(10);
    std::vector<Candidate> next;
    for (const Candidate& c : cands) {
      // Snap the candidate to its best-overlapping anchor slot and apply
      // that slot's regression to the candidate itself.
      double best = -1.0;
      std::size_t slot = 0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const TemporalSegment aseg{anchors[i].center - anchors[i].length / 2.0,
                                   anchors[i].center + anchors[i].length / 2.0};
        const double v = eval::tiou(c.seg, aseg);
        if (v > best) {
          best = v;
          slot = i;
        }
      }
      Anchor pseudo;
      pseudo.center = 0.5 * (c.seg.start + c.seg.end);
      pseudo.length = c.seg.length();
      const auto seg = decode_one(pseudo, out.deltas[slot][0],
                                  out.deltas[slot][1], crop_duration);
      if (seg) next.push_back({*seg, sigmoid(out.cls_logits[slot])});
    }
    if (next.empty()) break;
    cands = std::move(next);
  }

  const double offset = static_cast<double>(t0) / fps;
  std::vector<Proposal> refined;
  refined.reserve(cands.size());
  for (const Candidate& c : cands) {
    Proposal p;
    p.video_id = coarse.video_id;
    p.segment = {c.seg.start + offset, c.seg.end + offset};
    p.score = c.score;
    p.stage = Stage::CAN;
    refined.push_back(std::move(p));
  }
  refined = greedy_nms(std::move(refined), 0.8);
  if (refined.size() > 10) refined.resize(10);
  return refined;
}

void save_network(const CanNetwork& net, const std::filesystem::path& path) {
  const std::string cfg_json = can_config_to_json(net.cfg).dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("CAN1", 4);
  const std::uint32_t len = static_cast<std::uint32_t>(cfg_json.size());
  const std::uint8_t len_bytes[4] = {
      static_cast<std::uint8_t>(len & 0xFF),
      static_cast<std::uint8_t>((len >> 8) & 0xFF),
      static_cast<std::uint8_t>((len >> 16) & 0xFF),
      static_cast<std::uint8_t>((len >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  const std::vector<double> params = net.flatten_parameters();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

CanNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CAN1", 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected \"CAN1\"");
  }
  std::uint8_t len_bytes[4];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) {
    throw FormatError(path.string() + ": truncated header");
  }
  const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) |
                            (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                            (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string cfg_json(len, '\0');
  if (!in.read(cfg_json.data(), len)) {
    throw FormatError(path.string() + ": truncated config block");
  }
  CanConfig cfg;
  try {
    cfg = can_config_from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": config block is not valid JSON");
  }

  CanNetwork net = init_network(cfg, 0);
  std::vector<double> params(net.parameter_count());
  if (!in.read(reinterpret_cast<char*>(params.data()),
               static_cast<std::streamsize>(params.size() * sizeof(double)))) {
    throw FormatError(path.string() + ": truncated parameter payload");
  }
  for (double p : params) {
    if (!std::isfinite(p)) {
      throw ValidationError(path.string() + ": parameters must be finite");
    }
  }
  net.unflatten_parameters(params);
  return net;
}

}  // namespace tap::can

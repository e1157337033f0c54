#include "hybridreg/msl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace hybridreg::msl {

FeatureTensor::FeatureTensor(const Index3& d, int c, double fill) : dims(d), channels(c) {
  for (int a = 0; a < 3; ++a)
    if (d[a] < 1) throw ArgumentError("feature tensor dims must be >= 1");
  if (c < 1) throw ArgumentError("feature tensor needs >= 1 channel");
  data.assign(voxel_count() * static_cast<std::size_t>(c), fill);
}

Sequence serialize(const FeatureTensor& z, ScanOrder) {
  const std::size_t n = z.voxel_count();
  Sequence seq(n, std::vector<double>(static_cast<std::size_t>(z.channels)));
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < z.channels; ++c) seq[i][static_cast<std::size_t>(c)] = z.at(c, i);
  return seq;
}

FeatureTensor deserialize(const Sequence& seq, const Index3& dims, ScanOrder) {
  if (seq.empty()) throw ArgumentError("deserialize: empty sequence");
  FeatureTensor z(dims, static_cast<int>(seq.front().size()));
  if (seq.size() != z.voxel_count()) throw ArgumentError("deserialize: sequence length does not match dims");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].size() != static_cast<std::size_t>(z.channels)) throw ArgumentError("deserialize: ragged sequence");
    for (int c = 0; c < z.channels; ++c) z.at(c, i) = seq[i][static_cast<std::size_t>(c)];
  }
  return z;
}

void SsmParams::validate(int channels) const {
  const auto s = static_cast<std::size_t>(state_dim);
  const auto c = static_cast<std::size_t>(channels);
  if (state_dim < 1) throw ArgumentError("ssm state_dim must be >= 1");
  if (a.size() != s || b.size() != c * s || c_out.size() != c * s || delta.size() != c)
    throw ArgumentError("ssm parameter shapes do not match channels/state_dim");
  for (double v : a)
    if (!(v <= 0.0)) throw ArgumentError("ssm A entries must be <= 0");
  for (double v : delta)
    if (!(v > 0.0)) throw ArgumentError("ssm delta must be positive");
}

Sequence ssm_scan(const Sequence& seq, const SsmParams& p) {
  if (seq.empty()) throw ArgumentError("ssm_scan: empty sequence");
  const int channels = static_cast<int>(seq.front().size());
  p.validate(channels);
  const auto s_dim = static_cast<std::size_t>(p.state_dim);
  Sequence out(seq.size(), std::vector<double>(static_cast<std::size_t>(channels), 0.0));
  for (int c = 0; c < channels; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    std::vector<double> decay(s_dim), drive(s_dim), h(s_dim, 0.0);
    for (std::size_t s = 0; s < s_dim; ++s) {
      decay[s] = std::exp(p.delta[cc] * p.a[s]);
      drive[s] = p.delta[cc] * p.b[cc * s_dim + s];
    }
    for (std::size_t t = 0; t < seq.size(); ++t) {
      double y = 0.0;
      for (std::size_t s = 0; s < s_dim; ++s) {
        h[s] = decay[s] * h[s] + drive[s] * seq[t][cc];
        y += p.c_out[cc * s_dim + s] * h[s];
      }
      out[t][cc] = y;
    }
  }
  return out;
}

std::vector<std::vector<double>> ssm_impulse_states(const SsmParams& p, int channel, int steps) {
  const auto channels = static_cast<int>(p.delta.size());
  p.validate(channels);
  if (channel < 0 || channel >= channels) throw ArgumentError("ssm_impulse_states: channel out of range");
  const auto cc = static_cast<std::size_t>(channel);
  const auto s_dim = static_cast<std::size_t>(p.state_dim);
  std::vector<std::vector<double>> states;
  std::vector<double> h(s_dim, 0.0);
  for (int t = 0; t < steps; ++t) {
    const double x = t == 0 ? 1.0 : 0.0;
    for (std::size_t s = 0; s < s_dim; ++s)
      h[s] = std::exp(p.delta[cc] * p.a[s]) * h[s] + p.delta[cc] * p.b[cc * s_dim + s] * x;
    states.push_back(h);
  }
  return states;
}

void AttnParams::validate(int channels) const {
  const auto cc = static_cast<std::size_t>(channels) * static_cast<std::size_t>(channels);
  if (wq.size() != cc || wk.size() != cc || wv.size() != cc) throw ArgumentError("attention projections must be C x C");
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 1) throw ArgumentError("attention window must be >= 1");
    if (shift[a] < 0 || shift[a] >= window[a]) throw ArgumentError("attention shift must be in [0, window)");
  }
  if (!(scale > 0.0)) throw ArgumentError("attention scale must be positive");
}

namespace {

struct Windowed {
  Index3 pdims{};
  std::size_t pcount = 0;
  int channels = 0;
  std::vector<double> q, k, v;        // [voxel * C + c] on the padded lattice
  std::vector<std::size_t> window_of;  // padded voxel -> window id
  std::vector<std::vector<std::size_t>> members;
};

Windowed prepare(const FeatureTensor& z, const AttnParams& p) {
  p.validate(z.channels);
  Windowed w;
  w.channels = z.channels;
  for (int a = 0; a < 3; ++a) w.pdims[a] = (z.dims[a] + p.window[a] - 1) / p.window[a] * p.window[a];
  w.pcount = static_cast<std::size_t>(w.pdims[0]) * w.pdims[1] * w.pdims[2];
  const auto C = static_cast<std::size_t>(z.channels);
  w.q.assign(w.pcount * C, 0.0);
  w.k.assign(w.pcount * C, 0.0);
  w.v.assign(w.pcount * C, 0.0);
  w.window_of.resize(w.pcount);

  Index3 nwin{};
  Index3 off{};
  for (int a = 0; a < 3; ++a) {
    off[a] = (p.window[a] - p.shift[a]) % p.window[a];
    nwin[a] = (w.pdims[a] + off[a] + p.window[a] - 1) / p.window[a];
  }
  w.members.resize(static_cast<std::size_t>(nwin[0]) * nwin[1] * nwin[2]);

  std::vector<double> feat(C);
  std::size_t pi = 0;
  for (int z3 = 0; z3 < w.pdims[2]; ++z3)
    for (int y = 0; y < w.pdims[1]; ++y)
      for (int x = 0; x < w.pdims[0]; ++x, ++pi) {
        const std::size_t src = z.voxel_index(std::min(x, z.dims[0] - 1), std::min(y, z.dims[1] - 1),
                                               std::min(z3, z.dims[2] - 1));
        for (std::size_t c = 0; c < C; ++c) feat[c] = z.at(static_cast<int>(c), src);
        for (std::size_t r = 0; r < C; ++r) {
          double qs = 0, ks = 0, vs = 0;
          for (std::size_t c = 0; c < C; ++c) {
            qs += p.wq[r * C + c] * feat[c];
            ks += p.wk[r * C + c] * feat[c];
            vs += p.wv[r * C + c] * feat[c];
          }
          w.q[pi * C + r] = qs;
          w.k[pi * C + r] = ks;
          w.v[pi * C + r] = vs;
        }
        const int wx = (x + off[0]) / p.window[0];
        const int wy = (y + off[1]) / p.window[1];
        const int wz = (z3 + off[2]) / p.window[2];
        const auto wid = static_cast<std::size_t>(wx + nwin[0] * (wy + nwin[1] * wz));
        w.window_of[pi] = wid;
        w.members[wid].push_back(pi);
      }
  return w;
}

std::vector<double> row_weights(const Windowed& w, std::size_t query, double scale) {
  const auto C = static_cast<std::size_t>(w.channels);
  const auto& mem = w.members[w.window_of[query]];
  std::vector<double> logits(mem.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < mem.size(); ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += w.q[query * C + c] * w.k[mem[j] * C + c];
    logits[j] = s * scale;
    mx = std::max(mx, logits[j]);
  }
  double sum = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  for (auto& l : logits) l /= sum;
  return logits;
}

}  // namespace

FeatureTensor window_attention(const FeatureTensor& z, const AttnParams& p) {
  const Windowed w = prepare(z, p);
  const auto C = static_cast<std::size_t>(z.channels);
  FeatureTensor out(z.dims, z.channels);
  for (int z3 = 0; z3 < z.dims[2]; ++z3)
    for (int y = 0; y < z.dims[1]; ++y)
      for (int x = 0; x < z.dims[0]; ++x) {
        const std::size_t pi = static_cast<std::size_t>(x) +
                               static_cast<std::size_t>(w.pdims[0]) *
                                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(w.pdims[1]) * z3);
        const auto weights = row_weights(w, pi, p.scale);
        const auto& mem = w.members[w.window_of[pi]];
        const std::size_t oi = z.voxel_index(x, y, z3);
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < mem.size(); ++j) acc += weights[j] * w.v[mem[j] * C + c];
          out.at(static_cast<int>(c), oi) = acc;
        }
      }
  return out;
}

std::vector<double> attention_row(const FeatureTensor& z, const AttnParams& p, const Index3& query) {
  for (int a = 0; a < 3; ++a)
    if (query[a] < 0 || query[a] >= z.dims[a]) throw ArgumentError("attention_row: query outside tensor");
  const Windowed w = prepare(z, p);
  const std::size_t pi = static_cast<std::size_t>(query[0]) +
                         static_cast<std::size_t>(w.pdims[0]) *
                             (static_cast<std::size_t>(query[1]) + static_cast<std::size_t>(w.pdims[1]) * query[2]);
  return row_weights(w, pi, p.scale);
}

void GateParams::validate(int channels) const {
  const auto c = static_cast<std::size_t>(channels);
  if (wg.size() != c * 2 * c || bias.size() != c) throw ArgumentError("gate parameters must be C x 2C and C");
}

FeatureTensor gate_values(const FeatureTensor& z_m, const FeatureTensor& z_s, const GateParams& p) {
  if (!z_m.same_shape(z_s)) throw ArgumentError("gate_fuse: branch shapes differ");
  p.validate(z_m.channels);
  const auto C = static_cast<std::size_t>(z_m.channels);
  FeatureTensor g(z_m.dims, z_m.channels);
  for (std::size_t i = 0; i < z_m.voxel_count(); ++i)
    for (std::size_t r = 0; r < C; ++r) {
      double logit = p.bias[r];
      for (std::size_t c = 0; c < C; ++c) {
        logit += p.wg[r * 2 * C + c] * z_m.at(static_cast<int>(c), i);
        logit += p.wg[r * 2 * C + C + c] * z_s.at(static_cast<int>(c), i);
      }
      g.at(static_cast<int>(r), i) = 1.0 / (1.0 + std::exp(-logit));
    }
  return g;
}

FeatureTensor gate_fuse(const FeatureTensor& z_m, const FeatureTensor& z_s, const GateParams& p) {
  const FeatureTensor g = gate_values(z_m, z_s, p);
  FeatureTensor out(z_m.dims, z_m.channels);
  for (std::size_t j = 0; j < out.data.size(); ++j)
    out.data[j] = g.data[j] * z_m.data[j] + (1.0 - g.data[j]) * z_s.data[j];
  return out;
}

FeatureTensor msl_forward(const FeatureTensor& z, const SsmParams& ssm, const AttnParams& attn, const GateParams& gate) {
  const FeatureTensor z_m = deserialize(ssm_scan(serialize(z), ssm), z.dims);
  const FeatureTensor z_s = window_attention(z, attn);
  return gate_fuse(z_m, z_s, gate);
}

RandomParams random_params(int channels, int state_dim, const Index3& window, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(-0.5, 0.5);
  std::uniform_real_distribution<double> a(-1.0, -0.01);
  std::uniform_real_distribution<double> d(0.1, 1.0);
  const auto C = static_cast<std::size_t>(channels);
  const auto S = static_cast<std::size_t>(state_dim);
  RandomParams rp;
  rp.ssm.state_dim = state_dim;
  for (std::size_t s = 0; s < S; ++s) rp.ssm.a.push_back(a(rng));
  for (std::size_t i = 0; i < C * S; ++i) rp.ssm.b.push_back(w(rng));
  for (std::size_t i = 0; i < C * S; ++i) rp.ssm.c_out.push_back(w(rng));
  for (std::size_t c = 0; c < C; ++c) rp.ssm.delta.push_back(d(rng));
  rp.attn.window = window;
  for (std::size_t i = 0; i < C * C; ++i) rp.attn.wq.push_back(w(rng));
  for (std::size_t i = 0; i < C * C; ++i) rp.attn.wk.push_back(w(rng));
  for (std::size_t i = 0; i < C * C; ++i) rp.attn.wv.push_back(w(rng));
  rp.attn.scale = 1.0 / std::sqrt(static_cast<double>(channels));
  for (std::size_t i = 0; i < C * 2 * C; ++i) rp.gate.wg.push_back(w(rng));
  for (std::size_t c = 0; c < C; ++c) rp.gate.bias.push_back(w(rng));
  return rp;
}

FeatureTensor random_tensor(const Index3& dims, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(-0.5, 0.5);
  FeatureTensor z(dims, channels);
  for (auto& v : z.data) v = w(rng);
  return z;
}

}  // namespace hybridreg::msl

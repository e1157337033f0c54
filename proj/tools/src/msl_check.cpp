#include "hybridreg_cli/msl_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hybridreg::cli {

using msl::FeatureTensor;

namespace {

double max_abs_diff(const FeatureTensor& a, const FeatureTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

std::vector<double> project(const std::vector<double>& w, const std::vector<double>& f) {
  const std::size_t c = f.size();
  std::vector<double> out(c, 0.0);
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t k = 0; k < c; ++k) out[r] += w[r * c + k] * f[k];
  return out;
}

std::vector<double> features_at(const FeatureTensor& z, int x, int y, int w) {
  std::vector<double> f(static_cast<std::size_t>(z.channels));
  const std::size_t i = z.voxel_index(x, y, w);
  for (int c = 0; c < z.channels; ++c) f[static_cast<std::size_t>(c)] = z.at(c, i);
  return f;
}

}  // namespace

FeatureTensor msl_forward_reference(const FeatureTensor& z, const msl::SsmParams& ssm, const msl::AttnParams& attn,
                                    const msl::GateParams& gate) {
  const int C = z.channels;
  const auto S = static_cast<std::size_t>(ssm.state_dim);
  const std::size_t n = z.voxel_count();

  // Global branch: recurrence along the raster order.
  FeatureTensor zm(z.dims, C);
  for (int c = 0; c < C; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    std::vector<double> h(S, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double y = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        h[s] = std::exp(ssm.delta[cc] * ssm.a[s]) * h[s] + ssm.delta[cc] * ssm.b[cc * S + s] * z.at(c, t);
        y += ssm.c_out[cc * S + s] * h[s];
      }
      zm.at(c, t) = y;
    }
  }

  // Local branch: every query scans the padded lattice for its window mates.
  Index3 padded{}, off{};
  for (int a = 0; a < 3; ++a) {
    padded[a] = (z.dims[a] + attn.window[a] - 1) / attn.window[a] * attn.window[a];
    off[a] = (attn.window[a] - attn.shift[a]) % attn.window[a];
  }
  auto window_of = [&](int a, int p) { return (p + off[a]) / attn.window[a]; };
  FeatureTensor zs(z.dims, C);
  for (int qz = 0; qz < z.dims[2]; ++qz)
    for (int qy = 0; qy < z.dims[1]; ++qy)
      for (int qx = 0; qx < z.dims[0]; ++qx) {
        const auto q = project(attn.wq, features_at(z, qx, qy, qz));
        std::vector<double> logits;
        std::vector<std::vector<double>> values;
        for (int kz = 0; kz < padded[2]; ++kz)
          for (int ky = 0; ky < padded[1]; ++ky)
            for (int kx = 0; kx < padded[0]; ++kx) {
              if (window_of(0, kx) != window_of(0, qx) || window_of(1, ky) != window_of(1, qy) ||
                  window_of(2, kz) != window_of(2, qz))
                continue;
              const auto f = features_at(z, std::min(kx, z.dims[0] - 1), std::min(ky, z.dims[1] - 1),
                                         std::min(kz, z.dims[2] - 1));
              const auto k = project(attn.wk, f);
              double dot = 0.0;
              for (int c = 0; c < C; ++c) dot += q[static_cast<std::size_t>(c)] * k[static_cast<std::size_t>(c)];
              logits.push_back(dot * attn.scale);
              values.push_back(project(attn.wv, f));
            }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double& l : logits) sum += (l = std::exp(l - mx));
        const std::size_t oi = z.voxel_index(qx, qy, qz);
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < logits.size(); ++j) acc += logits[j] / sum * values[j][static_cast<std::size_t>(c)];
          zs.at(c, oi) = acc;
        }
      }

  // Gate.
  FeatureTensor out(z.dims, C);
  const auto CC = static_cast<std::size_t>(C);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < CC; ++r) {
      double logit = gate.bias[r];
      for (std::size_t c = 0; c < CC; ++c)
        logit += gate.wg[r * 2 * CC + c] * zm.at(static_cast<int>(c), i) +
                 gate.wg[r * 2 * CC + CC + c] * zs.at(static_cast<int>(c), i);
      const double g = 1.0 / (1.0 + std::exp(-logit));
      out.at(static_cast<int>(r), i) = g * zm.at(static_cast<int>(r), i) + (1.0 - g) * zs.at(static_cast<int>(r), i);
    }
  return out;
}

std::vector<CheckResult> run_msl_suite(std::uint64_t seed) {
  std::vector<CheckResult> results;
  constexpr int kChannels = 4;
  constexpr int kStates = 3;
  const Index3 dims{7, 6, 5};
  const Index3 window{4, 4, 4};

  auto rp = msl::random_params(kChannels, kStates, window, seed);
  const FeatureTensor z = msl::random_tensor(dims, kChannels, seed + 1);

  {
    // Closed form of the scan: y_t = sum_k sum_s C exp(delta A)^(t-k) delta B x_k.
    const auto seq = msl::serialize(z);
    const auto y = msl::ssm_scan(seq, rp.ssm);
    double worst = 0.0;
    const auto S = static_cast<std::size_t>(kStates);
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t t = 0; t < seq.size(); ++t) {
        double ref = 0.0;
        for (std::size_t k = 0; k <= t; ++k)
          for (std::size_t s = 0; s < S; ++s)
            ref += rp.ssm.c_out[c * S + s] * std::pow(std::exp(rp.ssm.delta[c] * rp.ssm.a[s]), double(t - k)) *
                   rp.ssm.delta[c] * rp.ssm.b[c * S + s] * seq[k][c];
        worst = std::max(worst, std::abs(ref - y[t][c]));
      }
    results.push_back({"ssm_scan matches unrolled recurrence", worst <= 1e-6, worst, 1e-6, "max abs error"});
  }

  {
    // Impulse response of every state decays monotonically when A <= 0.
    bool monotone = true;
    for (int c = 0; c < kChannels; ++c) {
      const auto states = msl::ssm_impulse_states(rp.ssm, c, 50);
      for (std::size_t t = 1; t < states.size(); ++t)
        for (std::size_t s = 0; s < states[t].size(); ++s)
          if (std::abs(states[t][s]) > std::abs(states[t - 1][s])) monotone = false;
    }
    results.push_back({"ssm impulse response non-increasing", monotone, monotone ? 0.0 : 1.0, 0.0, "A <= 0"});
  }

  {
    double worst = 0.0;
    double min_w = std::numeric_limits<double>::infinity();
    for (const Index3 shift : {Index3{0, 0, 0}, Index3{2, 2, 2}, Index3{1, 3, 2}}) {
      auto attn = rp.attn;
      attn.shift = shift;
      for (int qz = 0; qz < dims[2]; ++qz)
        for (int qy = 0; qy < dims[1]; ++qy)
          for (int qx = 0; qx < dims[0]; ++qx) {
            const auto row = msl::attention_row(z, attn, {qx, qy, qz});
            double s = 0.0;
            for (double w : row) {
              s += w;
              min_w = std::min(min_w, w);
            }
            worst = std::max(worst, std::abs(s - 1.0));
          }
    }
    results.push_back(
        {"attention rows sum to one", worst <= 1e-6 && min_w >= 0.0, worst, 1e-6, "max |row sum - 1| over all queries"});
  }

  {
    const FeatureTensor zm = msl::random_tensor({6, 6, 6}, kChannels, seed + 2);
    const FeatureTensor zs = msl::random_tensor({6, 6, 6}, kChannels, seed + 3);
    const FeatureTensor fused = msl::gate_fuse(zm, zs, rp.gate);
    std::size_t outside = 0;
    for (std::size_t j = 0; j < fused.data.size(); ++j) {
      const double lo = std::min(zm.data[j], zs.data[j]);
      const double hi = std::max(zm.data[j], zs.data[j]);
      if (fused.data[j] < lo || fused.data[j] > hi) ++outside;
    }
    results.push_back({"gate fusion bounded by branches", outside == 0, double(outside), 0.0,
                       "elements outside [min, max] of the two branches"});
  }

  {
    // Perturb the last voxel of one window and watch its neighbour across the
    // border: no effect without shift, an effect once windows are shifted.
    auto response = [&](const Index3& shift) {
      auto attn = rp.attn;
      attn.shift = shift;
      FeatureTensor bumped = z;
      const std::size_t src = z.voxel_index(3, 1, 1);
      for (int c = 0; c < kChannels; ++c) bumped.at(c, src) += 1.0;
      const auto a = msl::window_attention(z, attn);
      const auto b = msl::window_attention(bumped, attn);
      const std::size_t dst = z.voxel_index(4, 1, 1);
      double d = 0.0;
      for (int c = 0; c < kChannels; ++c) d = std::max(d, std::abs(a.at(c, dst) - b.at(c, dst)));
      return d;
    };
    const double plain = response({0, 0, 0});
    const double shifted = response({2, 2, 2});
    results.push_back({"shifted windows connect neighbouring windows", plain == 0.0 && shifted > 1e-6, shifted, 1e-6,
                       "unshifted response " + std::to_string(plain) + ", shifted response above tolerance"});
  }

  {
    auto attn = rp.attn;
    attn.shift = {2, 2, 2};
    const auto lib = msl::msl_forward(z, rp.ssm, attn, rp.gate);
    const auto ref = msl_forward_reference(z, rp.ssm, attn, rp.gate);
    const double err = max_abs_diff(lib, ref);
    results.push_back({"msl_forward matches reference pass", err <= 1e-8, err, 1e-8, "max abs error"});
  }
  return results;
}

}  // namespace hybridreg::cli

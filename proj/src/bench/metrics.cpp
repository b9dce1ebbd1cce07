#include "tqf/bench/metrics.hpp"

#include "tqf/core/tensor.hpp"

namespace tqf::bench {
namespace {

bool at(const std::uint8_t* m, std::size_t h, std::size_t w, long y, long x) {
  if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return false;
  return m[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] != 0;
}

// Fraction of `a`'s set pixels with a set pixel of `b` within one step.
std::pair<std::size_t, std::size_t> matched(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                                            std::size_t h, std::size_t w) {
  std::size_t hit = 0, total = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!a[y * w + x]) continue;
      ++total;
      bool near = false;
      for (long dy = -1; dy <= 1 && !near; ++dy) {
        for (long dx = -1; dx <= 1 && !near; ++dx) {
          near = at(b.data(), h, w, static_cast<long>(y) + dy, static_cast<long>(x) + dx);
        }
      }
      hit += near;
    }
  }
  return {hit, total};
}

}  // namespace

std::vector<std::uint8_t> mask_boundary(const std::uint8_t* mask, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> out(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      bool interior = true;
      for (long dy = -1; dy <= 1 && interior; ++dy) {
        for (long dx = -1; dx <= 1 && interior; ++dx) {
          interior = at(mask, h, w, static_cast<long>(y) + dy, static_cast<long>(x) + dx);
        }
      }
      out[y * w + x] = !interior;
    }
  }
  return out;
}

double boundary_f(const std::uint8_t* pred, const std::uint8_t* gt, std::size_t h, std::size_t w) {
  const auto bp = mask_boundary(pred, h, w);
  const auto bg = mask_boundary(gt, h, w);
  const auto [hit_p, n_p] = matched(bp, bg, h, w);
  const auto [hit_g, n_g] = matched(bg, bp, h, w);
  if (n_p == 0 && n_g == 0) return 1.0;
  if (n_p == 0 || n_g == 0) return 0.0;
  const double precision = static_cast<double>(hit_p) / static_cast<double>(n_p);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(n_g);
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

JF eval_jf(const BinaryClip& pred, const BinaryClip& gt, std::size_t frames, std::size_t h, std::size_t w) {
  const std::size_t area = h * w;
  if (pred.size() != frames * area || gt.size() != frames * area) {
    throw ValidationError("eval_jf: mask sizes do not match " + std::to_string(frames) + "x" + std::to_string(h) +
                          "x" + std::to_string(w));
  }
  JF out;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::uint8_t* p = pred.data() + t * area;
    const std::uint8_t* g = gt.data() + t * area;
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < area; ++k) {
      inter += p[k] && g[k];
      uni += p[k] || g[k];
    }
    out.j += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    out.f += uni == 0 ? 1.0 : boundary_f(p, g, h, w);
  }
  out.j /= static_cast<double>(frames);
  out.f /= static_cast<double>(frames);
  out.jf = (out.j + out.f) / 2;
  return out;
}

double clip_iou(const BinaryClip& pred, const BinaryClip& gt) {
  if (pred.size() != gt.size()) throw ValidationError("clip_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    inter += pred[k] && gt[k];
    uni += pred[k] || gt[k];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MetricReport eval_dataset(const std::vector<BinaryClip>& preds, const std::vector<BinaryClip>& gts,
                          std::size_t frames, std::size_t h, std::size_t w) {
  if (preds.size() != gts.size()) {
    throw ValidationError("eval_dataset: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(gts.size()) + " ground truths");
  }
  MetricReport r;
  r.samples = preds.size();
  if (preds.empty()) return r;
  std::size_t inter = 0, uni = 0;
  std::vector<double> ious;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto jf = eval_jf(preds[s], gts[s], frames, h, w);
    r.j += jf.j;
    r.f += jf.f;
    for (std::size_t k = 0; k < preds[s].size(); ++k) {
      inter += preds[s][k] && gts[s][k];
      uni += preds[s][k] || gts[s][k];
    }
    ious.push_back(clip_iou(preds[s], gts[s]));
    r.miou += ious.back();
  }
  const double n = static_cast<double>(preds.size());
  r.j /= n;
  r.f /= n;
  r.jf = (r.j + r.f) / 2;
  r.miou /= n;
  r.oiou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  for (int k = 0; k < 10; ++k) {
    const double thr = (50.0 + 5.0 * k) / 100.0;
    std::size_t cleared = 0;
    for (double iou : ious) cleared += iou + 1e-12 >= thr;
    r.map += static_cast<double>(cleared) / n;
  }
  r.map /= 10.0;
  return r;
}

}  // namespace tqf::bench

#pragma once

#include <cstdint>
#include <vector>

namespace tqf::bench {

struct JF {
  double j = 0;
  double f = 0;
  double jf = 0;
};

struct MetricReport {
  double j = 0;
  double f = 0;
  double jf = 0;
  double oiou = 0;
  double miou = 0;
  double map = 0;
  std::size_t samples = 0;
};

using BinaryClip = std::vector<std::uint8_t>;  // [T x H x W], 0/1

/// Pixels of the mask that are not in its 3x3 erosion (outside counts as 0).
std::vector<std::uint8_t> mask_boundary(const std::uint8_t* mask, std::size_t h, std::size_t w);

/// Boundary F-measure of one frame with a one-pixel (Chebyshev) tolerance.
double boundary_f(const std::uint8_t* pred, const std::uint8_t* gt, std::size_t h, std::size_t w);

/// J = mean per-frame IoU, F = mean per-frame boundary F; empty-vs-empty
/// frames score 1 on both.
JF eval_jf(const BinaryClip& pred, const BinaryClip& gt, std::size_t frames, std::size_t h, std::size_t w);

/// IoU over the whole clip; empty-vs-empty is 1.
double clip_iou(const BinaryClip& pred, const BinaryClip& gt);

/// j, f, jf averaged over samples; oIoU pools intersections and unions;
/// mIoU averages clip IoUs; mAP is the mean over thresholds 0.50:0.05:0.95 of
/// the fraction of samples reaching the threshold.
MetricReport eval_dataset(const std::vector<BinaryClip>& preds, const std::vector<BinaryClip>& gts,
                          std::size_t frames, std::size_t h, std::size_t w);

}  // namespace tqf::bench

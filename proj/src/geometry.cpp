#include "paln/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paln/check.hpp"

namespace paln {

BoxCXCYWH to_cxcywh(const BoxXYXY& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

BoxXYXY to_xyxy(const BoxCXCYWH& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BoxOffsets encode_box(const BoxCXCYWH& gt, const BoxCXCYWH& d) {
  PALN_CHECK(gt.w > 0.0 && gt.h > 0.0, "non-positive ground-truth size ", gt.w,
             "x", gt.h);
  PALN_CHECK(d.w > 0.0 && d.h > 0.0, "non-positive default box size");
  return {(gt.cx - d.cx) / d.w, (gt.cy - d.cy) / d.h, std::log(gt.w / d.w),
          std::log(gt.h / d.h)};
}

BoxCXCYWH decode_box(const BoxOffsets& o, const BoxCXCYWH& d) {
  const double dw = std::clamp(o.dw, -10.0, 10.0);
  const double dh = std::clamp(o.dh, -10.0, 10.0);
  return {o.dcx * d.w + d.cx, o.dcy * d.h + d.cy, std::exp(dw) * d.w,
          std::exp(dh) * d.h};
}

std::vector<Detection> nms(std::vector<Detection> detections,
                           double iou_threshold) {
  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<Detection> kept;
  for (int idx : order) {
    PALN_CHECK(detections[idx].score >= 0.0 && detections[idx].score <= 1.0,
               "score outside [0,1]");
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(detections[idx].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(detections[idx]);
  }
  return kept;
}

}  // namespace paln

#ifndef PALN_GEOMETRY_HPP_
#define PALN_GEOMETRY_HPP_

#include <vector>

namespace paln {

struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

struct BoxCXCYWH {
  double cx = 0, cy = 0, w = 0, h = 0;
};

// Unitless offsets / log size ratios relative to a default box.
struct BoxOffsets {
  double dcx = 0, dcy = 0, dw = 0, dh = 0;
};

BoxCXCYWH to_cxcywh(const BoxXYXY& b);
BoxXYXY to_xyxy(const BoxCXCYWH& b);

// Intersection over union; 0 for disjoint boxes.
double iou(const BoxXYXY& a, const BoxXYXY& b);

// dcx=(gcx-dcx)/dw, dcy=(gcy-dcy)/dh, dw=ln(gw/dw), dh=ln(gh/dh).
// No variance scaling. Non-positive ground-truth size is rejected.
BoxOffsets encode_box(const BoxCXCYWH& gt, const BoxCXCYWH& default_box);

// Exact inverse of encode_box; dw/dh clamped to [-10, 10] before exp so an
// untrained regressor cannot overflow.
BoxCXCYWH decode_box(const BoxOffsets& offsets, const BoxCXCYWH& default_box);

struct GroundTruth {
  BoxXYXY box;
  int label = 1;
};

struct Detection {
  BoxXYXY box;
  double score = 0;
  int label = 1;
};

// Greedy suppression by descending score (ties by lower index); drops any box
// with IoU above the threshold to an already kept box.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

}  // namespace paln

#endif  // PALN_GEOMETRY_HPP_

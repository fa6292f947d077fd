#pragma once

// Pixel metrics, density clustering of predicted lane pixels into instances,
// least-squares curve smoothing, and overlay rendering.

#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "laneforge/dataio.hpp"
#include "laneforge/model.hpp"

namespace laneforge {

// ---------------------------------------------------------------------------
// Confusion counts and metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  long long total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

inline ConfusionCounts confusion(const Image& pred, const Image& truth) {
  if (pred.h != truth.h || pred.w != truth.w || pred.c != 1 || truth.c != 1)
    throw ShapeError("confusion expects two equal binary masks");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.pix.size(); ++i) {
    bool p = pred.pix[i] >= 0.5f, t = truth.pix[i] >= 0.5f;
    if (p && t)
      ++c.tp;
    else if (p && !t)
      ++c.fp;
    else if (!p && t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;  // some denominator was zero; affected fields are 0
  long long params = 0;
  long long macs = 0;
};

inline MetricsReport metrics(const ConfusionCounts& c) {
  if (c.total() <= 0) throw DomainError("metrics on an empty confusion table");
  MetricsReport r;
  r.accuracy = double(c.tp + c.tn) / double(c.total());
  if (c.tp + c.fp > 0)
    r.precision = double(c.tp) / double(c.tp + c.fp);
  else
    r.degenerate = true;
  if (c.tp + c.fn > 0)
    r.recall = double(c.tp) / double(c.tp + c.fn);
  else
    r.degenerate = true;
  if (r.precision + r.recall > 0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  else
    r.degenerate = true;
  return r;
}

/// Binarize a 2-channel logit/probability map by channel argmax.
template <class Real>
Image argmax_mask(const Tensor<Real>& out) {
  if (out.rank() != 3 || out.dim(0) != 2) throw ShapeError("argmax_mask expects a 2 x H x W map");
  int h = out.dim(1), w = out.dim(2);
  Image m(h, w, 1);
  long long plane = (long long)h * w;
  for (long long p = 0; p < plane; ++p) m.pix[(std::size_t)p] = out.data()[plane + p] > out.data()[p] ? 1.f : 0.f;
  return m;
}

// ---------------------------------------------------------------------------
// DBSCAN over pixel coordinates
// ---------------------------------------------------------------------------

struct PixelPoint {
  int row = 0, col = 0;
};

/// Classic density clustering: core points have >= min_pts neighbors within
/// Euclidean eps (self included); clusters are grown breadth-first in scan
/// order, so labels are deterministic. Noise is -1.
inline std::vector<int> dbscan(const std::vector<PixelPoint>& pts, double eps, int min_pts) {
  if (!(eps > 0)) throw ConfigError("dbscan eps must be positive");
  if (min_pts < 1) throw ConfigError("dbscan min_pts must be >= 1");
  const int n = (int)pts.size();
  const double eps2 = eps * eps;
  std::vector<std::vector<int>> nbr((std::size_t)n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dr = pts[(std::size_t)i].row - pts[(std::size_t)j].row;
      double dc = pts[(std::size_t)i].col - pts[(std::size_t)j].col;
      if (dr * dr + dc * dc <= eps2) nbr[(std::size_t)i].push_back(j);
    }
  }
  std::vector<int> label((std::size_t)n, -2);  // -2 unvisited, -1 noise
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (label[(std::size_t)i] != -2) continue;
    if ((int)nbr[(std::size_t)i].size() < min_pts) {
      label[(std::size_t)i] = -1;
      continue;
    }
    int cid = next++;
    label[(std::size_t)i] = cid;
    std::deque<int> queue(nbr[(std::size_t)i].begin(), nbr[(std::size_t)i].end());
    while (!queue.empty()) {
      int q = queue.front();
      queue.pop_front();
      if (label[(std::size_t)q] == -1) label[(std::size_t)q] = cid;  // border point
      if (label[(std::size_t)q] != -2) continue;
      label[(std::size_t)q] = cid;
      if ((int)nbr[(std::size_t)q].size() >= min_pts)
        queue.insert(queue.end(), nbr[(std::size_t)q].begin(), nbr[(std::size_t)q].end());
    }
  }
  return label;
}

inline std::vector<PixelPoint> mask_points(const Image& mask) {
  std::vector<PixelPoint> pts;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(0, y, x) >= 0.5f) pts.push_back({y, x});
  return pts;
}

// ---------------------------------------------------------------------------
// Curve fitting: x = f(y), degree <= 3
// ---------------------------------------------------------------------------

struct CurveFit {
  // coefficients highest power first: x = c0 y^3 + c1 y^2 + c2 y + c3
  std::array<double, 4> coeffs{0, 0, 0, 0};
  int degree = 0;
  double rms_residual = 0;
};

namespace detail {

// Householder least squares on the y-normalized Vandermonde basis; returns
// false when the trailing diagonal collapses (rank-deficient at this degree).
inline bool poly_lsq(const std::vector<double>& ys, const std::vector<double>& xs, int degree,
                     double yscale, std::vector<double>& out) {
  const int n = (int)ys.size(), m = degree + 1;
  std::vector<double> a((std::size_t)n * m);
  std::vector<double> b = xs;
  for (int i = 0; i < n; ++i) {
    double t = 1.0, u = ys[(std::size_t)i] / yscale;
    for (int j = 0; j < m; ++j) {
      a[(std::size_t)i * m + j] = t;
      t *= u;
    }
  }
  for (int j = 0; j < m; ++j) {
    double norm = 0;
    for (int i = j; i < n; ++i) norm += a[(std::size_t)i * m + j] * a[(std::size_t)i * m + j];
    norm = std::sqrt(norm);
    if (norm < 1e-10) return false;
    double ajj = a[(std::size_t)j * m + j];
    double alpha = ajj >= 0 ? -norm : norm;
    std::vector<double> v((std::size_t)n, 0.0);
    v[(std::size_t)j] = ajj - alpha;
    for (int i = j + 1; i < n; ++i) v[(std::size_t)i] = a[(std::size_t)i * m + j];
    double vtv = 0;
    for (int i = j; i < n; ++i) vtv += v[(std::size_t)i] * v[(std::size_t)i];
    if (vtv < 1e-300) continue;
    for (int col = j; col < m; ++col) {
      double dot = 0;
      for (int i = j; i < n; ++i) dot += v[(std::size_t)i] * a[(std::size_t)i * m + col];
      double f = 2.0 * dot / vtv;
      for (int i = j; i < n; ++i) a[(std::size_t)i * m + col] -= f * v[(std::size_t)i];
    }
    double dot = 0;
    for (int i = j; i < n; ++i) dot += v[(std::size_t)i] * b[(std::size_t)i];
    double f = 2.0 * dot / vtv;
    for (int i = j; i < n; ++i) b[(std::size_t)i] -= f * v[(std::size_t)i];
  }
  for (int j = 0; j < m; ++j)
    if (std::abs(a[(std::size_t)j * m + j]) < 1e-9) return false;
  out.assign((std::size_t)m, 0.0);
  for (int j = m - 1; j >= 0; --j) {
    double s = b[(std::size_t)j];
    for (int k = j + 1; k < m; ++k) s -= a[(std::size_t)j * m + k] * out[(std::size_t)k];
    out[(std::size_t)j] = s / a[(std::size_t)j * m + j];
  }
  // back to the raw y basis: scale coefficient j by yscale^-j
  double sc = 1.0;
  for (int j = 0; j < m; ++j) {
    out[(std::size_t)j] /= sc;
    sc *= yscale;
  }
  return true;
}

}  // namespace detail

inline CurveFit fit_curve(const std::vector<PixelPoint>& pixels) {
  std::vector<double> ys, xs;
  ys.reserve(pixels.size());
  xs.reserve(pixels.size());
  std::vector<int> rows;
  for (const auto& p : pixels) {
    ys.push_back((double)p.row);
    xs.push_back((double)p.col);
    rows.push_back(p.row);
  }
  std::sort(rows.begin(), rows.end());
  int distinct = (int)(std::unique(rows.begin(), rows.end()) - rows.begin());
  int degree = std::min(3, distinct - 1);
  if (degree < 0 || (int)pixels.size() < degree + 1)
    throw DataError("fit_curve needs at least degree+1 pixels with distinct rows");

  double yscale = 1.0;
  for (double y : ys) yscale = std::max(yscale, std::abs(y));
  std::vector<double> c;
  while (degree >= 0) {
    if (detail::poly_lsq(ys, xs, degree, yscale, c)) break;
    --degree;  // rank deficient, drop the highest power
  }
  if (degree < 0) throw DataError("fit_curve: degenerate pixel set");

  CurveFit fit;
  fit.degree = degree;
  for (int j = 0; j <= degree; ++j) fit.coeffs[(std::size_t)(3 - j)] = c[(std::size_t)j];
  double se = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    double v = 0, t = 1;
    for (int j = 0; j <= degree; ++j) {
      v += c[(std::size_t)j] * t;
      t *= ys[i];
    }
    double d = xs[i] - v;
    se += d * d;
  }
  fit.rms_residual = std::sqrt(se / (double)ys.size());
  return fit;
}

// ---------------------------------------------------------------------------
// Overlay rendering
// ---------------------------------------------------------------------------

struct LaneInstance {
  int cluster_id = 0;
  std::vector<PixelPoint> pixels;
  CurveFit curve;
  int color_index = 0;
};

inline std::vector<LaneInstance> cluster_instances(const Image& mask, double eps = 4.0, int min_pts = 8) {
  auto pts = mask_points(mask);
  auto labels = dbscan(pts, eps, min_pts);
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  std::vector<LaneInstance> inst((std::size_t)k);
  for (int i = 0; i < k; ++i) {
    inst[(std::size_t)i].cluster_id = i;
    inst[(std::size_t)i].color_index = i;
  }
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (labels[i] >= 0) inst[(std::size_t)labels[i]].pixels.push_back(pts[i]);
  for (auto& in : inst)
    if (in.pixels.size() >= 2) in.curve = fit_curve(in.pixels);
  return inst;
}

inline const std::array<std::array<float, 3>, 6>& overlay_palette() {
  static const std::array<std::array<float, 3>, 6> p = {{{1.0f, 0.2f, 0.2f},
                                                         {0.2f, 1.0f, 0.2f},
                                                         {0.2f, 0.4f, 1.0f},
                                                         {1.0f, 1.0f, 0.2f},
                                                         {1.0f, 0.2f, 1.0f},
                                                         {0.2f, 1.0f, 1.0f}}};
  return p;
}

/// Alpha-blend lane pixels over the frame at alpha 0.6; a raw mask takes the
/// first palette color, instances cycle through it.
inline Image render_overlay(const Image& frame, const Image& mask, const std::vector<LaneInstance>* instances = nullptr,
                            float alpha = 0.6f) {
  if (frame.h != mask.h || frame.w != mask.w || frame.c != 3 || mask.c != 1)
    throw ShapeError("render_overlay expects an RGB frame and a matching mask");
  Image out = frame;
  auto blend = [&](int y, int x, const std::array<float, 3>& tint) {
    for (int c = 0; c < 3; ++c) out.at(c, y, x) = (1.f - alpha) * out.at(c, y, x) + alpha * tint[(std::size_t)c];
  };
  if (instances) {
    for (const auto& in : *instances) {
      const auto& tint = overlay_palette()[(std::size_t)(in.color_index % 6)];
      for (const auto& p : in.pixels) blend(p.row, p.col, tint);
    }
  } else {
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x)
        if (mask.at(0, y, x) >= 0.5f) blend(y, x, overlay_palette()[0]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

struct CategoryRow {
  std::string category;
  MetricsReport metrics;
  int samples = 0;
};

inline void write_metrics_csv(const std::vector<CategoryRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << "category,samples,accuracy,precision,recall,f1,degenerate\n";
  for (const auto& r : rows) {
    os << r.category << ',' << r.samples << ',' << r.metrics.accuracy << ',' << r.metrics.precision << ','
       << r.metrics.recall << ',' << r.metrics.f1 << ',' << (r.metrics.degenerate ? 1 : 0) << '\n';
  }
}

inline void write_metrics_json(const std::vector<CategoryRow>& rows, const Complexity& cx,
                               const std::string& path) {
  nlohmann::json j;
  j["params"] = cx.params;
  j["macs"] = cx.macs;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"category", r.category},
                         {"samples", r.samples},
                         {"accuracy", r.metrics.accuracy},
                         {"precision", r.metrics.precision},
                         {"recall", r.metrics.recall},
                         {"f1", r.metrics.f1},
                         {"degenerate", r.metrics.degenerate}});
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << j.dump(2) << '\n';
}

}  // namespace laneforge

#include <cmath>

#include "svc/flowwarp.hpp"
#include "svc/image_ops.hpp"
#include "svc/training.hpp"

namespace svc::training {

double psnr(const Tensorf& pred, const Tensorf& gt) {
  require(pred.same_shape(gt), "psnr: shape mismatch");
  const double mse = (pred.m.cast<double>() - gt.m.cast<double>()).array().square().mean();
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::array<double, 11> gaussian_window() {
  std::array<double, 11> g{};
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Valid-mode separable filtering of one plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const std::array<double, 11>& g) {
  const int h = static_cast<int>(x.rows()) - 10, w = static_cast<int>(x.cols()) - 10;
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(x.rows(), w);
  for (int k = 0; k < 11; ++k) rows += g[k] * x.middleCols(k, w);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(h, w);
  for (int k = 0; k < 11; ++k) out += g[k] * rows.middleRows(k, h);
  return out;
}

}  // namespace

double ssim(const Tensorf& pred, const Tensorf& gt) {
  require(pred.same_shape(gt), "ssim: shape mismatch");
  require(pred.h >= 11 && pred.w >= 11, "ssim: images must be at least 11x11");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  double total = 0;
  for (int c = 0; c < pred.c; ++c) {
    const Eigen::MatrixXd x = pred.plane(c).cast<double>();
    const Eigen::MatrixXd y = gt.plane(c).cast<double>();
    const Eigen::MatrixXd mx = filter_valid(x, g), my = filter_valid(y, g);
    const Eigen::MatrixXd sxx = filter_valid(x.cwiseProduct(x), g) - mx.cwiseProduct(mx);
    const Eigen::MatrixXd syy = filter_valid(y.cwiseProduct(y), g) - my.cwiseProduct(my);
    const Eigen::MatrixXd sxy = filter_valid(x.cwiseProduct(y), g) - mx.cwiseProduct(my);
    const Eigen::ArrayXXd num = (2 * mx.array() * my.array() + c1) * (2 * sxy.array() + c2);
    const Eigen::ArrayXXd den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
    total += (num / den).mean();
  }
  return total / pred.c;
}

double temporal_warp_error(const std::vector<Tensorf>& frames, const std::vector<FlowField>& flows, double alpha) {
  require(frames.size() >= 2, "temporal_warp_error: needs at least two frames");
  require(flows.size() + 1 >= frames.size(), "temporal_warp_error: missing flows");
  double total = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const Tensorf& cur = frames[t];
    const Tensorf warped = flowwarp::warp_backward(frames[t + 1], flows[t]);
    GrayFrame lw(cur.h, cur.w), lc(cur.h, cur.w);
    lw.tensor().m = warped.m.colwise().mean();
    lc.tensor().m = cur.m.colwise().mean();
    const OcclusionMask mask = flowwarp::occlusion_mask(lw, lc, alpha);
    const Eigen::ArrayXd diff = (warped.m - cur.m).array().abs().colwise().sum().transpose().cast<double>();
    const Eigen::ArrayXd m = mask.tensor().m.row(0).transpose().cast<double>();
    total += (m * diff).sum() / (m.sum() * cur.c);
  }
  return total / static_cast<double>(frames.size() - 1);
}

nlohmann::json MetricReport::to_json() const {
  return {{"psnr", psnr_db},
          {"ssim", ssim},
          {"temporal_warp_error", temporal_warp_error},
          {"psnr_per_frame", psnr_per_frame},
          {"ssim_per_frame", ssim_per_frame}};
}

MetricReport evaluate(const std::vector<RgbImage>& pred, const std::vector<RgbImage>& gt,
                      const std::vector<FlowField>& flows) {
  require(pred.size() == gt.size() && !pred.empty(), "evaluate: frame counts differ");
  MetricReport r;
  std::vector<Tensorf> seq;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    r.psnr_per_frame.push_back(psnr(pred[t].tensor(), gt[t].tensor()));
    r.ssim_per_frame.push_back(ssim(pred[t].tensor(), gt[t].tensor()));
    seq.push_back(pred[t].tensor());
  }
  for (std::size_t t = 0; t < pred.size(); ++t) {
    r.psnr_db += r.psnr_per_frame[t] / pred.size();
    r.ssim += r.ssim_per_frame[t] / pred.size();
  }
  if (seq.size() >= 2 && flows.size() + 1 >= seq.size()) {
    std::vector<FlowField> scaled;
    for (const auto& f : flows) scaled.push_back(flowwarp::rescale_flow(f, seq[0].h, seq[0].w));
    r.temporal_warp_error = temporal_warp_error(seq, scaled);
  }
  return r;
}

}  // namespace svc::training

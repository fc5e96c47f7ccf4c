#ifndef FACKE_TOYFACES_HPP
#define FACKE_TOYFACES_HPP

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <random>
#include <string>

#include "facke/common.hpp"

namespace facke {

// Procedural face corpus. Identity determines geometry, colors and a
// high-frequency cheek texture; each image varies pose, lighting, expression
// and background, which are the attributes a swap should preserve.
// kBalanced spreads identity across colors, geometry and texture. kTexture
// narrows colors/geometry and fixes the background so identity lives almost
// entirely in the high-frequency cheek texture; coarse (low-pass) content is
// then ambiguous across identities, which is what frequency-band conditioning
// experiments need.
enum class CorpusStyle { kBalanced, kTexture };

namespace toyfaces {

struct IdentityParams {
  cv::Scalar skin, hair, iris, lip;
  double face_w, face_h;      // half axes, canonical units
  double eye_dx, eye_dy, eye_r;
  double brow_angle, brow_len;
  double nose_w, nose_len;
  double mouth_w;
  double hair_h;
  double tex_angle, tex_period, tex_strength;
  int tex_kind;  // 0 stripes, 1 dots, 2 cross-hatch
};

inline double uni(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0, 1)(rng);
}

inline cv::Scalar hsv_color(double h, double s, double v) {
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(h, s * 255, v * 255));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  auto px = bgr.at<cv::Vec3b>(0, 0);
  return cv::Scalar(px[0], px[1], px[2]);
}

inline IdentityParams identity_params(uint64_t seed, int identity,
                                      CorpusStyle style = CorpusStyle::kBalanced) {
  std::mt19937_64 rng(mix_seed(seed, identity, 0x77u));
  IdentityParams p;
  if (style == CorpusStyle::kBalanced) {
    p.skin = hsv_color(uni(rng, 5, 30), uni(rng, 0.25, 0.7), uni(rng, 0.55, 0.95));
    p.hair = hsv_color(uni(rng, 0, 179), uni(rng, 0.4, 1.0), uni(rng, 0.15, 0.85));
    p.face_w = uni(rng, 0.52, 0.72);
    p.face_h = uni(rng, 0.68, 0.88);
    p.eye_dx = uni(rng, 0.18, 0.32);
    p.eye_dy = uni(rng, -0.22, -0.10);
    p.eye_r = uni(rng, 0.05, 0.11);
    p.nose_w = uni(rng, 0.03, 0.09);
    p.nose_len = uni(rng, 0.12, 0.26);
    p.mouth_w = uni(rng, 0.14, 0.30);
    p.hair_h = uni(rng, 0.12, 0.38);
    // Texture is mild in the balanced style: fine stripe phase cannot pass an
    // aggressive conv bottleneck, so strong texture would floor pixel recon.
    p.tex_period = uni(rng, 5.0, 9.0);
    p.tex_strength = uni(rng, 6, 14);
  } else {
    // near-uniform coarse appearance; identity is the texture signature
    p.skin = hsv_color(uni(rng, 18, 24), uni(rng, 0.40, 0.48), uni(rng, 0.70, 0.78));
    p.hair = hsv_color(uni(rng, 10, 20), uni(rng, 0.45, 0.55), uni(rng, 0.22, 0.30));
    p.face_w = uni(rng, 0.58, 0.66);
    p.face_h = uni(rng, 0.74, 0.82);
    p.eye_dx = uni(rng, 0.22, 0.28);
    p.eye_dy = uni(rng, -0.18, -0.14);
    p.eye_r = uni(rng, 0.07, 0.09);
    p.nose_w = uni(rng, 0.05, 0.07);
    p.nose_len = uni(rng, 0.16, 0.22);
    p.mouth_w = uni(rng, 0.18, 0.26);
    p.hair_h = uni(rng, 0.20, 0.28);
    p.tex_period = uni(rng, 2.2, 4.0);
    p.tex_strength = uni(rng, 40, 70);
  }
  p.iris = hsv_color(uni(rng, 0, 179), uni(rng, 0.6, 1.0), uni(rng, 0.3, 0.9));
  p.lip = hsv_color(uni(rng, 0, 15), uni(rng, 0.5, 0.9), uni(rng, 0.4, 0.8));
  p.brow_angle = uni(rng, -0.5, 0.5);
  p.brow_len = uni(rng, 0.10, 0.20);
  p.tex_angle = uni(rng, 0, CV_PI);
  p.tex_kind = static_cast<int>(std::uniform_int_distribution<int>(0, 2)(rng));
  return p;
}

// Canvas is rendered oversized and area-downsampled for antialiasing.
inline cv::Mat render_face(const IdentityParams& p, uint64_t seed, int identity, int image,
                           int resolution, CorpusStyle style = CorpusStyle::kBalanced) {
  std::mt19937_64 rng(mix_seed(seed, (uint64_t(identity) << 20) | unsigned(image), 0x88u));
  const int S = resolution * 4;
  const double u = S / 2.0;  // canonical unit -> pixels

  // Backgrounds vary per image but stay muted: globally flat color shifts are
  // invisible to instance statistics, so saturated random backgrounds would put
  // an information floor under any normalizing conversion module.
  // texture style: a flat shared background keeps the coarse band uninformative
  cv::Scalar bg = style == CorpusStyle::kTexture
                      ? hsv_color(0, 0.0, uni(rng, 0.52, 0.58))
                      : hsv_color(uni(rng, 0, 179), uni(rng, 0.05, 0.20), uni(rng, 0.40, 0.70));
  cv::Mat img(S, S, CV_8UC3, bg);

  auto P = [&](double x, double y) { return cv::Point(int(u + x * u), int(u + y * u)); };

  // hair behind the face
  cv::ellipse(img, P(0, -p.hair_h * 0.5), cv::Size(int(p.face_w * 1.12 * u), int(p.face_h * 1.08 * u)),
              0, 0, 360, p.hair, cv::FILLED, cv::LINE_AA);
  // face
  cv::ellipse(img, P(0, 0), cv::Size(int(p.face_w * u), int(p.face_h * u)), 0, 0, 360, p.skin,
              cv::FILLED, cv::LINE_AA);

  // identity texture inside the face ellipse
  cv::Mat mask(S, S, CV_8UC1, cv::Scalar(0));
  cv::ellipse(mask, P(0, 0.1), cv::Size(int(p.face_w * 0.85 * u), int(p.face_h * 0.8 * u)), 0, 0,
              360, cv::Scalar(255), cv::FILLED, cv::LINE_AA);
  double ca = std::cos(p.tex_angle), sa = std::sin(p.tex_angle);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      if (!mask.at<uint8_t>(y, x)) continue;
      double proj = (x * ca + y * sa) / 4.0;
      double proj2 = (x * sa - y * ca) / 4.0;
      double w = 0;
      if (p.tex_kind == 0) w = std::sin(2 * CV_PI * proj / p.tex_period);
      else if (p.tex_kind == 1)
        w = std::sin(2 * CV_PI * proj / p.tex_period) * std::sin(2 * CV_PI * proj2 / p.tex_period);
      else
        w = std::max(std::sin(2 * CV_PI * proj / p.tex_period),
                     std::sin(2 * CV_PI * proj2 / p.tex_period));
      auto& px = img.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c)
        px[c] = cv::saturate_cast<uint8_t>(px[c] + w * p.tex_strength);
    }

  double gaze = uni(rng, -0.02, 0.02);
  for (int side : {-1, 1}) {
    auto eye = P(side * p.eye_dx, p.eye_dy);
    cv::circle(img, eye, int(p.eye_r * u), cv::Scalar(245, 245, 245), cv::FILLED, cv::LINE_AA);
    cv::circle(img, P(side * p.eye_dx + gaze, p.eye_dy), int(p.eye_r * 0.55 * u), p.iris,
               cv::FILLED, cv::LINE_AA);
    // brow
    auto b0 = P(side * p.eye_dx - p.brow_len, p.eye_dy - 0.10 - side * 0 + p.brow_angle * 0.05);
    auto b1 = P(side * p.eye_dx + p.brow_len, p.eye_dy - 0.10 - p.brow_angle * 0.05 * side);
    cv::line(img, b0, b1, p.hair, std::max(2, S / 64), cv::LINE_AA);
  }

  // nose
  cv::line(img, P(0, p.eye_dy + 0.06), P(p.nose_w, p.eye_dy + 0.06 + p.nose_len),
           p.skin * 0.6 + cv::Scalar(10, 10, 10), std::max(2, S / 80), cv::LINE_AA);

  // mouth with per-image expression curvature
  double curve = uni(rng, -0.10, 0.14);
  std::vector<cv::Point> mouth;
  for (int i = 0; i <= 16; ++i) {
    double s = -1.0 + 2.0 * i / 16.0;
    mouth.push_back(P(s * p.mouth_w, 0.42 + curve * (1 - s * s)));
  }
  cv::polylines(img, mouth, false, p.lip, std::max(2, S / 48), cv::LINE_AA);

  // pose jitter: rotation, scale, translation
  double angle = uni(rng, -9, 9);
  double scale = uni(rng, 0.88, 1.1);
  double tx = uni(rng, -0.06, 0.06) * S;
  double ty = uni(rng, -0.06, 0.06) * S;
  auto M = cv::getRotationMatrix2D(cv::Point2f(float(u), float(u)), angle, scale);
  M.at<double>(0, 2) += tx;
  M.at<double>(1, 2) += ty;
  cv::Mat warped;
  cv::warpAffine(img, warped, M, img.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, bg);

  // lighting gain (mild in the balanced style, for the same flat-shift reason)
  if (style == CorpusStyle::kTexture)
    warped.convertTo(warped, -1, uni(rng, 0.85, 1.15), uni(rng, -12, 12));
  else
    warped.convertTo(warped, -1, uni(rng, 0.95, 1.05), uni(rng, -4, 4));

  cv::Mat out;
  cv::resize(warped, out, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
  return out;
}

}  // namespace toyfaces

inline void make_toy_corpus(const std::string& dir, int num_identities, int images_per_identity,
                            int resolution, uint64_t seed,
                            CorpusStyle style = CorpusStyle::kBalanced) {
  namespace fs = std::filesystem;
  for (int id = 0; id < num_identities; ++id) {
    char idname[32];
    snprintf(idname, sizeof(idname), "id_%03d", id);
    fs::create_directories(fs::path(dir) / idname);
    auto params = toyfaces::identity_params(seed, id, style);
    for (int i = 0; i < images_per_identity; ++i) {
      char fname[32];
      snprintf(fname, sizeof(fname), "img_%03d.png", i);
      auto img = toyfaces::render_face(params, seed, id, i, resolution, style);
      cv::imwrite((fs::path(dir) / idname / fname).string(), img);
    }
  }
}

}  // namespace facke

#endif

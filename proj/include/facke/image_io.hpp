#ifndef FACKE_IMAGE_IO_HPP
#define FACKE_IMAGE_IO_HPP

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include <string>

#include "facke/common.hpp"

namespace facke {

// 8-bit BGR Mat -> float CHW tensor in [-1, 1], RGB channel order.
inline torch::Tensor mat_to_tensor(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32) * (2.0f / 255.0f) - 1.0f;
}

inline cv::Mat tensor_to_mat(const torch::Tensor& chw) {
  auto t = ((chw.detach().clamp(-1, 1) + 1.0f) * (255.0f / 2.0f))
               .round()
               .to(torch::kUInt8)
               .permute({1, 2, 0})
               .contiguous();
  cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3,
              t.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

// Loads one pre-aligned face. Sources must be square; only resizing to the
// working resolution is done here.
inline torch::Tensor load_face(const std::string& path, int resolution) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw IngestError("undecodable image: " + path);
  if (img.rows != img.cols)
    throw IngestError("non-square image (" + std::to_string(img.cols) + "x" +
                      std::to_string(img.rows) + "), alignment is out of scope: " + path);
  if (img.rows != resolution) {
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
    img = resized;
  }
  return mat_to_tensor(img);
}

inline void save_face(const torch::Tensor& chw, const std::string& path) {
  if (!cv::imwrite(path, tensor_to_mat(chw)))
    throw std::runtime_error("failed to write image: " + path);
}

}  // namespace facke

#endif

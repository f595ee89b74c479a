#pragma once

#include <string>

#include "ucf/tensor.hpp"

namespace ucf {

// 8-bit PNG/JPEG <-> float CHW in [0,1]. Grayscale files are expanded to
// three channels on load.
Tensor<float> load_image(const std::string& path);
void save_png(const std::string& path, const Tensor<float>& img);
void save_jpeg(const std::string& path, const Tensor<float>& img, int quality);

// In-memory JPEG encode/decode round trip used by the compression
// augmentation. Output shape equals input shape.
Tensor<float> jpeg_roundtrip(const Tensor<float>& img, int quality);

}  // namespace ucf

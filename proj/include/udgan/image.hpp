#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "udgan/errors.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

// 8-bit RGB image, row-major [H][W][3].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t& at(int y, int x, int c) {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// PNG or JPEG, dispatched on file magic.
Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

Image resize_bilinear(const Image& img, int out_h, int out_w);

// byte -> [0,1] -> (v - mean) / std, shape [3,H,W]
Tensor image_to_tensor(const Image& img, double mean, double stddev);
// Inverse of image_to_tensor with clamping and round-to-nearest.
Image tensor_to_image(const Tensor& chw, double mean, double stddev);

// Tiles images into a rows x cols grid (row-major order) with a 2px gutter.
Image make_montage(const std::vector<Image>& tiles, int rows, int cols);

}  // namespace udgan

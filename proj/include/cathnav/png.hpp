#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cathnav/imaging.hpp"

namespace cathnav {

// 8-bit grayscale PNG, foreground 255.
std::string encode_png(const imaging::BinaryImage& img);

std::string base64_encode(const std::string& bytes);
// Throws std::invalid_argument on malformed input.
std::string base64_decode(const std::string& text);

}  // namespace cathnav

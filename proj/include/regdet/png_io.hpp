#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace regdet::io {

// Minimal 8-bit RGB PNG writer (zlib-deflated, single IDAT).
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace regdet::io

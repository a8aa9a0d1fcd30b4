#pragma once

#include <string>

#include "seglab/label_map.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

// Binary portable pixmap/graymap interchange. Images are P6 with maxval 255,
// scaled to [0,1] on read and quantized (round) on write; labels are P5 with
// class indices as gray values and 255 reserved for ignore. Writes go
// through a temp file and rename, so a sample is either fully present or
// absent. Malformed input raises a format error naming the byte offset.

void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

void write_pgm(const std::string& path, const LabelMap& label);
LabelMap read_pgm(const std::string& path);

}  // namespace seglab

#pragma once

#include <filesystem>

#include "glioma/field.hpp"

namespace glioma {

/// Raw volume on disk ("GLF1"):
///   8-byte magic "GLIOF1\0\0"
///   u32 ndims, u32 dims[ndims], u32 components
///   f64 spacing[ndims], f64 origin[ndims]
///   f64 values, x fastest, components interleaved per voxel
/// All integers and reals little-endian.
struct Volume {
  Grid grid;
  Matrix values;  // voxels x components

  int components() const { return static_cast<int>(values.cols()); }
};

void save_volume(const std::filesystem::path& path, const Volume& volume);
Volume load_volume(const std::filesystem::path& path);

void save_scalar(const std::filesystem::path& path, const ScalarField& f);
ScalarField load_scalar(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const TensorField& t);
TensorField load_tensor(const std::filesystem::path& path);

}  // namespace glioma

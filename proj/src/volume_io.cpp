#include "glioma/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "glioma/errors.hpp"

namespace glioma {
namespace {

static_assert(std::endian::native == std::endian::little, "GLF1 I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'L', 'I', 'O', 'F', '1', '\0', '\0'};

class Reader {
 public:
  Reader(const std::filesystem::path& path, std::string bytes) : path_(path), bytes_(std::move(bytes)) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw IoError(path_.string() + ": truncated payload while reading " + what);
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* cursor() const { return bytes_.data() + pos_; }

 private:
  std::filesystem::path path_;
  std::string bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void save_volume(const std::filesystem::path& path, const Volume& volume) {
  const Grid& g = volume.grid;
  if (static_cast<std::size_t>(volume.values.rows()) != g.size()) {
    throw ConfigError("save_volume: value count does not match grid");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  for (int a = 0; a < g.dim(); ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(g.n(a)));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(volume.components()));
  for (int a = 0; a < g.dim(); ++a) put<double>(os, g.spacing(a));
  for (int a = 0; a < g.dim(); ++a) put<double>(os, g.origin(a));
  // Row-major copy puts the components of one voxel next to each other.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> interleaved = volume.values;
  os.write(reinterpret_cast<const char*>(interleaved.data()),
           static_cast<std::streamsize>(interleaved.size() * sizeof(double)));
  if (!os) throw IoError(path.string() + ": write failed");
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + ": bad magic");
  }
  Reader r(path, bytes.substr(sizeof(kMagic)));
  const auto ndims = r.get<std::uint32_t>("ndims");
  if (ndims != 2 && ndims != 3) throw IoError(path.string() + ": unsupported ndims " + std::to_string(ndims));
  std::vector<int> dims;
  std::uint64_t count = 1;
  for (std::uint32_t a = 0; a < ndims; ++a) {
    const auto n = r.get<std::uint32_t>("dims");
    count *= n;
    if (n == 0 || count >= (std::uint64_t{1} << 31)) {
      throw IoError(path.string() + ": dimension overflow in header");
    }
    dims.push_back(static_cast<int>(n));
  }
  const auto components = r.get<std::uint32_t>("components");
  if (components == 0 || count * components >= (std::uint64_t{1} << 31)) {
    throw IoError(path.string() + ": dimension overflow in header");
  }
  std::vector<double> spacing(ndims), origin(ndims);
  for (auto& s : spacing) s = r.get<double>("spacing");
  for (auto& o : origin) o = r.get<double>("origin");
  const std::uint64_t payload = count * components * sizeof(double);
  if (r.remaining() < payload) throw IoError(path.string() + ": truncated payload");
  if (r.remaining() > payload) throw IoError(path.string() + ": trailing bytes after payload");

  Volume v;
  try {
    v.grid = Grid(dims, spacing, origin);
  } catch (const ConfigError& e) {
    throw IoError(path.string() + ": invalid header: " + e.what());
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> interleaved(
      static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(components));
  std::memcpy(interleaved.data(), r.cursor(), payload);
  v.values = interleaved;
  return v;
}

void save_scalar(const std::filesystem::path& path, const ScalarField& f) {
  save_volume(path, Volume{f.grid(), f.values()});
}

ScalarField load_scalar(const std::filesystem::path& path) {
  Volume v = load_volume(path);
  if (v.components() != 1) throw IoError(path.string() + ": expected a scalar volume");
  return ScalarField(v.grid, v.values.col(0));
}

void save_tensor(const std::filesystem::path& path, const TensorField& t) {
  save_volume(path, Volume{t.grid(), t.values()});
}

TensorField load_tensor(const std::filesystem::path& path) {
  Volume v = load_volume(path);
  if (v.components() != tensor_components(v.grid.dim())) {
    throw IoError(path.string() + ": expected d(d+1)/2 tensor components");
  }
  return TensorField(v.grid, std::move(v.values));
}

}  // namespace glioma
